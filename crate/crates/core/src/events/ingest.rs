use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BehavioralLog, CategoryIndex, PurchaseEvent};
use crate::error::{Error, Result};

pub(crate) const CSV_HEADER: [&str; 6] = [
    "user_id",
    "item_id",
    "category_id",
    "timestamp_days",
    "price",
    "promo_flag",
];

const MAX_REPORTED_ERRORS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    #[default]
    Csv,
    Jsonl,
}

impl InputFormat {
    /// Guesses from a file extension; anything but `.jsonl`/`.ndjson` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => InputFormat::Jsonl,
            _ => InputFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub format: InputFormat,
    /// Skip malformed rows instead of aborting.
    pub lenient: bool,
    /// Fixed category index; unknown categories become errors.
    pub categories: Option<CategoryIndex>,
    /// Window length override in days.
    pub window: Option<f64>,
    /// Epoch for calendar timestamps (`YYYY-MM-DD` or `YYYY-MM-DDTHH:MM:SS`).
    pub epoch: Option<NaiveDateTime>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestSummary {
    pub rows: u64,
    pub skipped: u64,
    /// First few row errors as `(line, message)`.
    pub errors: Vec<(u64, String)>,
}

/// Reads purchase events from a CSV or JSONL byte stream.
pub fn ingest_events<R: Read>(source: R, options: &IngestOptions) -> Result<(BehavioralLog, IngestSummary)> {
    let mut summary = IngestSummary::default();
    let mut events = Vec::new();
    let mut on_row = |line: u64, parsed: std::result::Result<PurchaseEvent, String>| -> Result<()> {
        summary.rows += 1;
        let checked = parsed.and_then(|e| check_event(e, options));
        match checked {
            Ok(e) => {
                if let Some(idx) = &options.categories {
                    if idx.index_of(&e.category_id).is_none() {
                        return Err(Error::UnknownCategory(e.category_id));
                    }
                }
                events.push(e);
                Ok(())
            }
            Err(message) if options.lenient => {
                summary.skipped += 1;
                if summary.errors.len() < MAX_REPORTED_ERRORS {
                    summary.errors.push((line, message));
                }
                Ok(())
            }
            Err(message) => Err(Error::MalformedRow { line, message }),
        }
    };
    match options.format {
        InputFormat::Csv => read_csv(source, options, &mut on_row)?,
        InputFormat::Jsonl => read_jsonl(source, options, &mut on_row)?,
    }
    if summary.skipped > 0 {
        log::warn!("skipped {} malformed rows", summary.skipped);
    }
    let log = BehavioralLog::from_events(events, options.categories.clone(), options.window)?;
    Ok((log, summary))
}

/// Opens `path` and ingests it, inferring the format from the extension.
pub fn read_events_file(path: &Path, options: &IngestOptions) -> Result<(BehavioralLog, IngestSummary)> {
    let file = std::fs::File::open(path)?;
    let mut opts = options.clone();
    opts.format = InputFormat::from_path(path);
    ingest_events(BufReader::new(file), &opts)
}

fn check_event(e: PurchaseEvent, options: &IngestOptions) -> std::result::Result<PurchaseEvent, String> {
    if e.user_id.is_empty() {
        return Err("empty user_id".into());
    }
    if e.category_id.is_empty() {
        return Err("empty category_id".into());
    }
    let t = e.timestamp_days;
    if !(t.is_finite() && t >= 0.0) {
        return Err(format!("timestamp {t} is negative or non-finite"));
    }
    if let Some(w) = options.window {
        if t >= w {
            return Err(format!("timestamp {t} is outside the window [0, {w})"));
        }
    }
    if let Some(p) = e.price {
        if !(p.is_finite() && p >= 0.0) {
            return Err(format!("price {p} is negative or non-finite"));
        }
    }
    Ok(e)
}

type RowSink<'a> = dyn FnMut(u64, std::result::Result<PurchaseEvent, String>) -> Result<()> + 'a;

fn read_csv<R: Read>(source: R, options: &IngestOptions, sink: &mut RowSink<'_>) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let user = column("user_id");
    let category = column("category_id");
    let timestamp = column("timestamp_days");
    let (Some(user), Some(category), Some(timestamp)) = (user, category, timestamp) else {
        return Err(Error::MalformedRow {
            line: 1,
            message: "header must name user_id, category_id and timestamp_days".into(),
        });
    };
    let item = column("item_id");
    let price = column("price");
    let promo = column("promo_flag");
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                sink(line, Err(e.to_string()))?;
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: Option<usize>| i.and_then(|i| record.get(i)).filter(|s| !s.is_empty());
        let parsed = (|| {
            let user_id = field(Some(user)).ok_or("missing user_id")?.to_string();
            let category_id = field(Some(category)).ok_or("missing category_id")?.to_string();
            let ts = field(Some(timestamp)).ok_or("missing timestamp_days")?;
            Ok(PurchaseEvent {
                user_id,
                item_id: field(item).map(str::to_string),
                category_id,
                timestamp_days: parse_timestamp(ts, options.epoch)?,
                price: field(price).map(parse_f64).transpose()?,
                promo_flag: field(promo).map(parse_bool).transpose()?.unwrap_or(false),
            })
        })();
        sink(line, parsed)?;
    }
    Ok(())
}

fn read_jsonl<R: Read>(source: R, options: &IngestOptions, sink: &mut RowSink<'_>) -> Result<()> {
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Value>(&line)
            .map_err(|e| e.to_string())
            .and_then(|v| json_event(&v, options.epoch));
        sink(i as u64 + 1, parsed)?;
    }
    Ok(())
}

fn json_event(v: &Value, epoch: Option<NaiveDateTime>) -> std::result::Result<PurchaseEvent, String> {
    let obj = v.as_object().ok_or("row is not a JSON object")?;
    let text = |key: &str| -> Option<String> {
        match obj.get(key) {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) if s.is_empty() => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(other) => Some(other.to_string()),
        }
    };
    let number = |key: &str| -> std::result::Result<Option<f64>, String> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Number(n)) => Ok(n.as_f64()),
            Some(Value::String(s)) if s.is_empty() => Ok(None),
            Some(Value::String(s)) => parse_f64(s).map(Some),
            Some(other) => Err(format!("`{key}` is not numeric: {other}")),
        }
    };
    let timestamp_days = match obj.get("timestamp_days") {
        Some(Value::Number(n)) => n.as_f64().ok_or("timestamp_days is not finite")?,
        Some(Value::String(s)) => parse_timestamp(s, epoch)?,
        _ => return Err("missing timestamp_days".into()),
    };
    let promo_flag = match obj.get("promo_flag") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(Value::String(s)) if s.is_empty() => false,
        Some(Value::String(s)) => parse_bool(s)?,
        Some(Value::Number(n)) => n.as_i64() == Some(1),
        Some(other) => return Err(format!("promo_flag is not boolean: {other}")),
    };
    Ok(PurchaseEvent {
        user_id: text("user_id").ok_or("missing user_id")?,
        item_id: text("item_id"),
        category_id: text("category_id").ok_or("missing category_id")?,
        timestamp_days,
        price: number("price")?,
        promo_flag,
    })
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    s.parse::<f64>().map_err(|_| format!("`{s}` is not a number"))
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "y" | "t" => Ok(true),
        "false" | "0" | "no" | "n" | "f" => Ok(false),
        _ => Err(format!("`{s}` is not a boolean")),
    }
}

fn parse_timestamp(s: &str, epoch: Option<NaiveDateTime>) -> std::result::Result<f64, String> {
    if let Ok(days) = s.parse::<f64>() {
        return Ok(days);
    }
    let Some(epoch) = epoch else {
        return Err(format!("timestamp `{s}` is not a day count and no epoch was declared"));
    };
    let at = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDate::parse_from_str(s, "%Y-%m-%d").map(|d| d.and_hms_opt(0, 0, 0).unwrap()))
        .map_err(|_| format!("timestamp `{s}` is neither days nor a calendar date"))?;
    let millis = (at - epoch).num_milliseconds();
    Ok(millis as f64 / 86_400_000.0)
}

/// Parses an epoch given as `YYYY-MM-DD` or `YYYY-MM-DDTHH:MM:SS`.
pub fn parse_epoch(s: &str) -> Result<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDate::parse_from_str(s, "%Y-%m-%d").map(|d| d.and_hms_opt(0, 0, 0).unwrap()))
        .map_err(|_| Error::invalid(format!("epoch `{s}` is not a date")))
}
