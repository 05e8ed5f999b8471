//! Offline evaluation: chronological train/test split, reach, precision and
//! recall per category and cohort, and the comparison baselines.

mod baselines;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{BehavioralLog, CategoryIndex};
use crate::inference::{top_indices, IntensityMatrix};

pub use baselines::{
    baseline_buy_it_again, baseline_mf, baseline_top, count_snapshot, mf_scores, CountSnapshot, MfModel, MfOptions,
    BUY_IT_AGAIN_PRIOR_EVENTS,
};

pub const DEFAULT_TEST_DAYS: f64 = 60.0;
pub const DEFAULT_SEGMENT_DAYS: f64 = 9.0;
pub const DEFAULT_SEGMENTS: usize = 7;
pub const DEFAULT_REACH_MULTIPLIERS: [u32; 4] = [5, 10, 20, 40];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub index: usize,
    pub start: f64,
    pub end: f64,
}

/// Test segments, per-category purchase rates and ranking candidates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalProtocol {
    pub test_start: f64,
    pub segment_len: f64,
    pub segments: Vec<Segment>,
    pub categories: CategoryIndex,
    /// `p_c`: mean purchases per `segment_len` over the full train segments.
    pub purchase_rates: Vec<f64>,
    pub train_segments: usize,
    /// Per user index: has at least one purchase before the test start.
    #[serde(skip)]
    pub candidates: Vec<bool>,
    /// Users whose purchases all fall in the test span.
    pub excluded_users: Vec<String>,
}

impl EvalProtocol {
    /// `r_c = max(1, round(k·p_c))`.
    pub fn reach(&self, category: usize, k: u32) -> usize {
        ((k as f64 * self.purchase_rates[category]).round() as usize).max(1)
    }

    pub fn num_candidates(&self) -> usize {
        self.candidates.iter().filter(|c| **c).count()
    }
}

/// Splits off the last `max(test_days, segments·segment_len)` days as
/// `segments` consecutive test segments of `segment_len` days.
pub fn split_protocol(log: &BehavioralLog, test_days: f64, segment_len: f64, segments: usize) -> Result<EvalProtocol> {
    if !(segment_len > 0.0) || segments == 0 || !(test_days > 0.0) {
        return Err(Error::invalid("evaluation needs positive test days, segment length and segment count"));
    }
    let span = test_days.max(segments as f64 * segment_len);
    let test_start = log.window() - span;
    if test_start < segment_len {
        return Err(Error::invalid(format!(
            "log of {} days is too short for a {span}-day test span plus one {segment_len}-day train segment",
            log.window()
        )));
    }
    let train_segments = (test_start / segment_len).floor() as usize;
    let train_end = train_segments as f64 * segment_len;
    let n = log.num_categories();
    let mut counts = vec![0usize; n];
    let mut candidates = Vec::with_capacity(log.num_users());
    let mut excluded_users = Vec::new();
    for u in log.users() {
        for e in u.events.iter().take_while(|e| e.timestamp < train_end) {
            counts[e.category] += 1;
        }
        let in_train = u.events.first().is_some_and(|e| e.timestamp < test_start);
        if !in_train && !u.events.is_empty() {
            excluded_users.push(u.id.clone());
        }
        candidates.push(in_train);
    }
    if !excluded_users.is_empty() {
        log::warn!(
            "{} users purchase only in the test span and are excluded from evaluation",
            excluded_users.len()
        );
    }
    Ok(EvalProtocol {
        test_start,
        segment_len,
        segments: (0..segments)
            .map(|i| Segment {
                index: i,
                start: test_start + i as f64 * segment_len,
                end: test_start + (i + 1) as f64 * segment_len,
            })
            .collect(),
        categories: log.categories().clone(),
        purchase_rates: counts.iter().map(|&c| c as f64 / train_segments as f64).collect(),
        train_segments,
        candidates,
        excluded_users,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Cohort {
    #[serde(rename = "all")]
    All,
    /// New to category: no purchase in the category before the segment.
    #[serde(rename = "NC")]
    Nc,
    /// Old to category.
    #[serde(rename = "OC")]
    Oc,
}

impl Cohort {
    pub fn label(self) -> &'static str {
        match self {
            Cohort::All => "all",
            Cohort::Nc => "NC",
            Cohort::Oc => "OC",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CohortSplit {
    pub nc: BTreeSet<usize>,
    pub oc: BTreeSet<usize>,
}

impl CohortSplit {
    pub fn all(&self) -> BTreeSet<usize> {
        self.nc.union(&self.oc).copied().collect()
    }
}

/// Purchasers of `category` in `[start, end)`, split by whether they bought
/// the category before `start`.
pub fn cohort_assign(log: &BehavioralLog, category: usize, start: f64, end: f64) -> CohortSplit {
    let mut split = CohortSplit::default();
    for (u, user) in log.users().iter().enumerate() {
        let mut before = false;
        let mut during = false;
        for e in user.events.iter().filter(|e| e.category == category) {
            if e.timestamp < start {
                before = true;
            } else if e.timestamp < end {
                during = true;
                break;
            }
        }
        if during {
            if before {
                split.oc.insert(u);
            } else {
                split.nc.insert(u);
            }
        }
    }
    split
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrecisionRecall {
    pub hits: usize,
    pub reach: usize,
    pub purchasers: usize,
    pub precision: f64,
    /// Absent when there are no purchasers.
    pub recall: Option<f64>,
}

/// `P = hits/r_c`, `R = hits/|U_c|` for an audience of exactly `reach` users.
pub fn precision_recall(audience: &[usize], purchasers: &BTreeSet<usize>, reach: usize) -> Result<PrecisionRecall> {
    if reach == 0 || audience.len() != reach {
        return Err(Error::invalid(format!(
            "audience of {} users does not match reach {reach}",
            audience.len()
        )));
    }
    let hits = audience.iter().filter(|u| purchasers.contains(u)).count();
    Ok(PrecisionRecall {
        hits,
        reach,
        purchasers: purchasers.len(),
        precision: hits as f64 / reach as f64,
        recall: (!purchasers.is_empty()).then(|| hits as f64 / purchasers.len() as f64),
    })
}

/// A scoring method evaluated at the start of each test segment.
pub trait Method: Send + Sync {
    fn name(&self) -> String;
    /// Scores every user of `history` (which holds only events before `at`).
    fn score(&self, history: &BehavioralLog, at: f64) -> Result<IntensityMatrix>;
}

/// `Top` (all-time counts) or `Top(w)` (counts in the last `w` days).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Top {
    pub window: Option<f64>,
}

impl Method for Top {
    fn name(&self) -> String {
        match self.window {
            None => "Top".into(),
            Some(w) => format!("Top({w})"),
        }
    }

    fn score(&self, history: &BehavioralLog, at: f64) -> Result<IntensityMatrix> {
        baseline_top(history, at, self.window)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixFactorization(pub MfOptions);

impl Method for MatrixFactorization {
    fn name(&self) -> String {
        "MF".into()
    }

    fn score(&self, history: &BehavioralLog, at: f64) -> Result<IntensityMatrix> {
        let snapshot = count_snapshot(history, at);
        let model = baseline_mf(&snapshot, &self.0)?;
        mf_scores(&snapshot, &model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuyItAgain {
    pub horizon: f64,
}

impl Method for BuyItAgain {
    fn name(&self) -> String {
        "BuyItAgain".into()
    }

    fn score(&self, history: &BehavioralLog, at: f64) -> Result<IntensityMatrix> {
        baseline_buy_it_again(history, at, self.horizon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub method: String,
    pub cohort: Cohort,
    pub k: u32,
    pub segment: usize,
    pub category: String,
    pub precision: f64,
    pub recall: Option<f64>,
    pub hits: usize,
    pub reach: usize,
    pub purchasers: usize,
}

/// Macro average over categories and segments for one (method, cohort, k).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub cohort: Cohort,
    pub k: u32,
    pub precision: f64,
    pub recall: f64,
    /// (segment, category) cells without purchasers, left out of the average.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub rows: Vec<MetricRow>,
    pub summary: Vec<SummaryRow>,
    pub excluded_users: usize,
}

fn check_no_leakage(method: &str, history: &BehavioralLog, scores: &IntensityMatrix, cutoff: f64) -> Result<()> {
    if let Some(e) = history
        .users()
        .iter()
        .flat_map(|u| u.events.iter())
        .find(|e| e.timestamp >= cutoff)
    {
        return Err(Error::Leakage {
            method: method.to_string(),
            timestamp: e.timestamp,
            cutoff,
        });
    }
    if scores.at > cutoff {
        return Err(Error::Leakage {
            method: method.to_string(),
            timestamp: scores.at,
            cutoff,
        });
    }
    Ok(())
}

fn segment_rows(
    log: &BehavioralLog,
    protocol: &EvalProtocol,
    method: &dyn Method,
    segment: &Segment,
    ks: &[u32],
) -> Result<Vec<MetricRow>> {
    let name = method.name();
    let history = log.truncated(segment.start);
    let scores = method.score(&history, segment.start)?;
    check_no_leakage(&name, &history, &scores, segment.start)?;
    if scores.user_ids != history.user_ids() || scores.num_categories() != log.num_categories() {
        return Err(Error::Dimension(format!("method {name} scored a different user or category set")));
    }
    let candidates: Vec<usize> = (0..log.num_users()).filter(|&u| protocol.candidates[u]).collect();
    let mut rows = Vec::new();
    for c in 0..log.num_categories() {
        let column: Vec<f64> = candidates.iter().map(|&u| scores.get(u, c)).collect();
        let reaches: Vec<usize> = ks
            .iter()
            .map(|&k| protocol.reach(c, k).min(candidates.len()))
            .collect();
        let deepest = reaches.iter().copied().max().unwrap_or(0);
        let ranking: Vec<usize> = top_indices(&column, deepest)
            .into_iter()
            .map(|i| candidates[i])
            .collect();
        let mut split = cohort_assign(log, c, segment.start, segment.end);
        split.nc.retain(|u| protocol.candidates[*u]);
        split.oc.retain(|u| protocol.candidates[*u]);
        let all = split.all();
        for (&k, &reach) in ks.iter().zip(&reaches) {
            if reach == 0 {
                continue;
            }
            let audience = &ranking[..reach];
            for (cohort, purchasers) in [(Cohort::All, &all), (Cohort::Nc, &split.nc), (Cohort::Oc, &split.oc)] {
                let pr = precision_recall(audience, purchasers, reach)?;
                rows.push(MetricRow {
                    method: name.clone(),
                    cohort,
                    k,
                    segment: segment.index,
                    category: log.categories().id(c).to_string(),
                    precision: pr.precision,
                    recall: pr.recall,
                    hits: pr.hits,
                    reach: pr.reach,
                    purchasers: pr.purchasers,
                });
            }
        }
    }
    Ok(rows)
}

/// Scores every method at each segment start on the log truncated there and
/// computes precision and recall per category, cohort and reach multiplier.
pub fn run_experiment(
    log: &BehavioralLog,
    protocol: &EvalProtocol,
    methods: &[&dyn Method],
    ks: &[u32],
) -> Result<ExperimentReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::invalid("reach multipliers must be positive"));
    }
    if protocol.candidates.len() != log.num_users() || protocol.categories != *log.categories() {
        return Err(Error::Dimension("protocol was built for a different log".into()));
    }
    let jobs: Vec<(usize, &Segment)> = (0..methods.len())
        .flat_map(|m| protocol.segments.iter().map(move |s| (m, s)))
        .collect();
    let parts = jobs
        .par_iter()
        .map(|&(m, s)| segment_rows(log, protocol, methods[m], s, ks))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<MetricRow> = parts.into_iter().flatten().collect();
    let method_names: Vec<String> = methods.iter().map(|m| m.name()).collect();
    Ok(ExperimentReport {
        summary: summarize(&rows, &method_names),
        rows,
        excluded_users: protocol.excluded_users.len(),
    })
}

fn summarize(rows: &[MetricRow], methods: &[String]) -> Vec<SummaryRow> {
    // (method, cohort, k) → segment → (Σ P, Σ R, categories, excluded)
    type Acc = BTreeMap<usize, (f64, f64, usize, usize)>;
    let mut groups: BTreeMap<(usize, Cohort, u32), Acc> = BTreeMap::new();
    for r in rows {
        let m = methods.iter().position(|n| *n == r.method).unwrap_or(usize::MAX);
        let seg = groups.entry((m, r.cohort, r.k)).or_default().entry(r.segment).or_default();
        match r.recall {
            Some(recall) => {
                seg.0 += r.precision;
                seg.1 += recall;
                seg.2 += 1;
            }
            None => seg.3 += 1,
        }
    }
    groups
        .into_iter()
        .map(|((m, cohort, k), segs)| {
            let used: Vec<_> = segs.values().filter(|s| s.2 > 0).collect();
            let mean = |f: fn(&&(f64, f64, usize, usize)) -> f64| {
                if used.is_empty() {
                    0.0
                } else {
                    used.iter().map(f).sum::<f64>() / used.len() as f64
                }
            };
            SummaryRow {
                method: methods[m].clone(),
                cohort,
                k,
                precision: mean(|s| s.0 / s.2 as f64),
                recall: mean(|s| s.1 / s.2 as f64),
                excluded: segs.values().map(|s| s.3).sum(),
            }
        })
        .collect()
}

impl ExperimentReport {
    /// `method,cohort,k,segment,category,precision,recall,hits,reach,purchasers`;
    /// recall is empty when the category had no purchasers.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "method",
            "cohort",
            "k",
            "segment",
            "category",
            "precision",
            "recall",
            "hits",
            "reach",
            "purchasers",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                r.cohort.label().to_string(),
                r.k.to_string(),
                r.segment.to_string(),
                r.category.clone(),
                r.precision.to_string(),
                r.recall.map(|v| v.to_string()).unwrap_or_default(),
                r.hits.to_string(),
                r.reach.to_string(),
                r.purchasers.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_for(&self, method: &str, cohort: Cohort, k: u32) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.method == method && s.cohort == cohort && s.k == k)
    }

    /// Precision and recall in percent, one line per cohort and method, one
    /// column per reach multiplier.
    pub fn format_table(&self) -> String {
        let mut ks: Vec<u32> = self.summary.iter().map(|s| s.k).collect();
        ks.sort_unstable();
        ks.dedup();
        let mut methods: Vec<&str> = Vec::new();
        for s in &self.summary {
            if !methods.contains(&s.method.as_str()) {
                methods.push(&s.method);
            }
        }
        let mut out = String::new();
        let _ = write!(out, "{:<8}{:<14}", "cohort", "method");
        for k in &ks {
            let _ = write!(out, "{:>9}", format!("P@{k}"));
        }
        for k in &ks {
            let _ = write!(out, "{:>9}", format!("R@{k}"));
        }
        out.push('\n');
        for cohort in [Cohort::All, Cohort::Nc, Cohort::Oc] {
            for m in &methods {
                let _ = write!(out, "{:<8}{:<14}", cohort.label(), m);
                for k in &ks {
                    let p = self.summary_for(m, cohort, *k).map_or(f64::NAN, |s| s.precision);
                    let _ = write!(out, "{:>9.2}", 100.0 * p);
                }
                for k in &ks {
                    let r = self.summary_for(m, cohort, *k).map_or(f64::NAN, |s| s.recall);
                    let _ = write!(out, "{:>9.2}", 100.0 * r);
                }
                out.push('\n');
            }
        }
        out
    }
}
