//! Purchase-event data model, ingestion and quantized count aggregation.
//!
//! Timestamps are fractional days from the start of the observation window.
//! Calendar dates are converted at the ingestion boundary only.

mod ingest;
mod stats;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ingest::{ingest_events, parse_epoch, read_events_file, IngestOptions, IngestSummary, InputFormat};
pub use stats::{log_stats, HeadTailSplit, RegularitySplit, StatsReport, DEFAULT_HEAD_PURCHASES, DEFAULT_REGULAR_MONTHS, MONTH_DAYS};

/// One purchase as it appears on the wire (CSV row or JSONL object).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurchaseEvent {
    pub user_id: String,
    pub item_id: Option<String>,
    pub category_id: String,
    pub timestamp_days: f64,
    pub price: Option<f64>,
    #[serde(default)]
    pub promo_flag: bool,
}

/// A purchase inside a [`BehavioralLog`]; the category is a dense index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub timestamp: f64,
    pub category: usize,
    pub item_id: Option<String>,
    pub price: Option<f64>,
    pub promo: bool,
}

/// Orders opaque ids numerically when both parse as integers, otherwise
/// lexicographically. Dense user and category indices follow this order.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CategoryEntry {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    path: Option<String>,
}

/// Bijection between category ids and dense indices `0..len`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<CategoryEntry>", into = "Vec<CategoryEntry>")]
pub struct CategoryIndex {
    ids: Vec<String>,
    paths: Vec<Option<String>>,
    lookup: HashMap<String, usize>,
}

impl From<Vec<CategoryEntry>> for CategoryIndex {
    fn from(entries: Vec<CategoryEntry>) -> Self {
        let mut index = CategoryIndex::default();
        for e in entries {
            let i = index.insert(&e.id);
            if e.path.is_some() {
                index.paths[i] = e.path;
            }
        }
        index
    }
}

impl From<CategoryIndex> for Vec<CategoryEntry> {
    fn from(index: CategoryIndex) -> Self {
        index
            .ids
            .into_iter()
            .zip(index.paths)
            .map(|(id, path)| CategoryEntry { id, path })
            .collect()
    }
}

impl CategoryIndex {
    /// Builds an index in the given order, dropping duplicates.
    pub fn new<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut index = CategoryIndex::default();
        for id in ids {
            index.insert(id.as_ref());
        }
        index
    }

    /// Builds an index sorted by [`compare_ids`].
    pub fn sorted<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v: Vec<String> = ids.into_iter().map(|s| s.as_ref().to_string()).collect();
        v.sort_by(|a, b| compare_ids(a, b));
        v.dedup();
        Self::new(v)
    }

    fn insert(&mut self, id: &str) -> usize {
        if let Some(&i) = self.lookup.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.paths.push(None);
        self.lookup.insert(id.to_string(), i);
        i
    }

    pub fn with_path(mut self, id: &str, path: impl Into<String>) -> Result<Self> {
        let i = self
            .index_of(id)
            .ok_or_else(|| Error::UnknownCategory(id.to_string()))?;
        self.paths[i] = Some(path.into());
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn path(&self, index: usize) -> Option<&str> {
        self.paths[index].as_deref()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// A user's purchases in non-decreasing timestamp order.
#[derive(Debug, Clone, PartialEq)]
pub struct UserHistory {
    pub id: String,
    pub events: Vec<Event>,
}

impl UserHistory {
    /// Timestamps of this user's purchases in category `c`, ascending.
    pub fn timestamps(&self, c: usize) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.category == c)
            .map(|e| e.timestamp)
            .collect()
    }

    /// Per-category timestamp lists, indexed by dense category.
    pub fn by_category(&self, num_categories: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); num_categories];
        for e in &self.events {
            out[e.category].push(e.timestamp);
        }
        out
    }

    /// Purchases in `c` strictly before `t`.
    pub fn count_before(&self, c: usize, t: f64) -> usize {
        let end = self.events.partition_point(|e| e.timestamp < t);
        self.events[..end].iter().filter(|e| e.category == c).count()
    }

    /// Purchases in any category with timestamp strictly inside `(from, to)`.
    pub fn count_strictly_between(&self, from: f64, to: f64) -> usize {
        let lo = self.events.partition_point(|e| e.timestamp <= from);
        let hi = self.events.partition_point(|e| e.timestamp < to);
        hi.saturating_sub(lo)
    }
}

/// Time-ordered per-user purchase sequences over an observation window.
#[derive(Debug, Clone, PartialEq)]
pub struct BehavioralLog {
    window: f64,
    categories: CategoryIndex,
    users: Vec<UserHistory>,
    lookup: HashMap<String, usize>,
}

impl BehavioralLog {
    /// Assembles a log from wire events.
    ///
    /// With `categories = None` the index is built from the events, sorted by
    /// id. With `window = None` the window is `floor(max timestamp) + 1`.
    pub fn from_events(
        events: Vec<PurchaseEvent>,
        categories: Option<CategoryIndex>,
        window: Option<f64>,
    ) -> Result<Self> {
        let fixed = categories.is_some();
        let categories = categories
            .unwrap_or_else(|| CategoryIndex::sorted(events.iter().map(|e| e.category_id.as_str())));
        let mut per_user: HashMap<String, Vec<Event>> = HashMap::new();
        let mut max_t: f64 = -1.0;
        for e in events {
            if !(e.timestamp_days.is_finite() && e.timestamp_days >= 0.0) {
                return Err(Error::invalid(format!(
                    "timestamp {} for user `{}` is negative or non-finite",
                    e.timestamp_days, e.user_id
                )));
            }
            let category = match categories.index_of(&e.category_id) {
                Some(c) => c,
                None if fixed => return Err(Error::UnknownCategory(e.category_id)),
                None => unreachable!("index built from the events"),
            };
            max_t = max_t.max(e.timestamp_days);
            per_user.entry(e.user_id).or_default().push(Event {
                timestamp: e.timestamp_days,
                category,
                item_id: e.item_id,
                price: e.price,
                promo: e.promo_flag,
            });
        }
        let window = match window {
            Some(w) => {
                if !(w > 0.0 && w.is_finite()) {
                    return Err(Error::invalid(format!("window length {w} must be positive")));
                }
                if max_t >= w {
                    return Err(Error::invalid(format!(
                        "timestamp {max_t} lies outside the window [0, {w})"
                    )));
                }
                w
            }
            None if max_t < 0.0 => 0.0,
            None => max_t.floor() + 1.0,
        };
        let users = per_user
            .into_iter()
            .map(|(id, mut events)| {
                events.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
                UserHistory { id, events }
            })
            .collect();
        Ok(Self::from_histories(users, categories, window))
    }

    /// Builds from already time-ordered histories; users are re-sorted by id.
    pub(crate) fn from_histories(
        mut users: Vec<UserHistory>,
        categories: CategoryIndex,
        window: f64,
    ) -> Self {
        users.sort_by(|a, b| compare_ids(&a.id, &b.id));
        let lookup = users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.id.clone(), i))
            .collect();
        Self {
            window,
            categories,
            users,
            lookup,
        }
    }

    pub fn empty(categories: CategoryIndex, window: f64) -> Self {
        Self::from_histories(Vec::new(), categories, window)
    }

    /// Window length T in days.
    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn categories(&self) -> &CategoryIndex {
        &self.categories
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_events(&self) -> usize {
        self.users.iter().map(|u| u.events.len()).sum()
    }

    pub fn users(&self) -> &[UserHistory] {
        &self.users
    }

    pub fn user(&self, index: usize) -> &UserHistory {
        &self.users[index]
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn user_ids(&self) -> Vec<String> {
        self.users.iter().map(|u| u.id.clone()).collect()
    }

    /// Total purchases per category over the whole log.
    pub fn category_totals(&self) -> Vec<u64> {
        let mut totals = vec![0u64; self.num_categories()];
        for u in &self.users {
            for e in &u.events {
                totals[e.category] += 1;
            }
        }
        totals
    }

    /// Keeps the events for which `keep` holds; every user stays registered.
    pub fn retain_events<F>(&self, mut keep: F) -> Self
    where
        F: FnMut(&UserHistory, &Event) -> bool,
    {
        let users = self
            .users
            .iter()
            .map(|u| UserHistory {
                id: u.id.clone(),
                events: u.events.iter().filter(|e| keep(u, e)).cloned().collect(),
            })
            .collect();
        Self::from_histories(users, self.categories.clone(), self.window)
    }

    /// Keeps only the users for which `keep` holds.
    pub fn retain_users<F>(&self, mut keep: F) -> Self
    where
        F: FnMut(&UserHistory) -> bool,
    {
        let users = self.users.iter().filter(|u| keep(u)).cloned().collect();
        Self::from_histories(users, self.categories.clone(), self.window)
    }

    /// The log as seen at `cutoff`: events strictly before it, window = cutoff.
    pub fn truncated(&self, cutoff: f64) -> Self {
        let mut log = self.retain_events(|_, e| e.timestamp < cutoff);
        log.window = cutoff.min(self.window).max(0.0);
        log
    }

    /// Adds users (with ids not already present) to the log.
    pub fn with_extra_users(&self, extra: Vec<UserHistory>) -> Result<Self> {
        let mut users = self.users.clone();
        for u in extra {
            if self.lookup.contains_key(&u.id) {
                return Err(Error::invalid(format!("user `{}` already exists", u.id)));
            }
            if let Some(e) = u.events.iter().find(|e| e.timestamp >= self.window) {
                return Err(Error::invalid(format!(
                    "event at {} lies outside the window",
                    e.timestamp
                )));
            }
            users.push(u);
        }
        Ok(Self::from_histories(users, self.categories.clone(), self.window))
    }

    /// Flattens back to wire events, user by user in time order.
    pub fn to_purchase_events(&self) -> Vec<PurchaseEvent> {
        self.users
            .iter()
            .flat_map(|u| {
                u.events.iter().map(move |e| PurchaseEvent {
                    user_id: u.id.clone(),
                    item_id: e.item_id.clone(),
                    category_id: self.categories.id(e.category).to_string(),
                    timestamp_days: e.timestamp,
                    price: e.price,
                    promo_flag: e.promo,
                })
            })
            .collect()
    }

    /// Writes the log in the CSV event format (header included).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(ingest::CSV_HEADER)?;
        for e in self.to_purchase_events() {
            w.write_record([
                e.user_id.as_str(),
                e.item_id.as_deref().unwrap_or(""),
                e.category_id.as_str(),
                &e.timestamp_days.to_string(),
                &e.price.map(|p| p.to_string()).unwrap_or_default(),
                if e.promo_flag { "true" } else { "false" },
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the log as one JSON event object per line.
    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<()> {
        for e in self.to_purchase_events() {
            serde_json::to_writer(&mut writer, &e)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Number of `user`'s purchases in `c` strictly before `t`. Unknown users
/// have empty histories.
pub fn counts_upto(log: &BehavioralLog, user: &str, c: usize, t: f64) -> usize {
    log.user_index(user)
        .map_or(0, |u| log.user(u).count_before(c, t))
}

/// Sparse per-user purchase counts of one category on a regular time grid.
///
/// Cell `s` covers `[origin + s·grain, origin + (s+1)·grain)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    category: usize,
    grain: f64,
    cells: usize,
    origin: f64,
    indptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<u32>,
}

impl CountMatrix {
    /// Builds from per-user `(cell, count)` rows. Rows need not be sorted;
    /// duplicate cells are summed and zero counts dropped.
    pub fn from_rows(
        category: usize,
        grain: f64,
        cells: usize,
        origin: f64,
        rows: Vec<Vec<(usize, u32)>>,
    ) -> Result<Self> {
        check_grid(grain, cells)?;
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_unstable_by_key(|&(s, _)| s);
            for (s, n) in row {
                if s >= cells {
                    return Err(Error::Dimension(format!("cell {s} outside horizon {cells}")));
                }
                if n == 0 {
                    continue;
                }
                if cols.len() > *indptr.last().unwrap() && *cols.last().unwrap() as usize == s {
                    *vals.last_mut().unwrap() += n;
                } else {
                    cols.push(s as u32);
                    vals.push(n);
                }
            }
            indptr.push(cols.len());
        }
        Ok(Self {
            category,
            grain,
            cells,
            origin,
            indptr,
            cols,
            vals,
        })
    }

    pub fn category(&self) -> usize {
        self.category
    }

    pub fn grain(&self) -> f64 {
        self.grain
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Start time of cell 0.
    pub fn origin(&self) -> f64 {
        self.origin
    }

    /// End of the last cell, the evaluation tick of the grid.
    pub fn end(&self) -> f64 {
        self.origin + self.grain * self.cells as f64
    }

    pub fn num_users(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Non-zero `(cell, count)` entries of user `u`, ascending by cell.
    pub fn row(&self, u: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        let (lo, hi) = (self.indptr[u], self.indptr[u + 1]);
        self.cols[lo..hi]
            .iter()
            .zip(&self.vals[lo..hi])
            .map(|(&s, &n)| (s as usize, n))
    }

    pub fn get(&self, u: usize, s: usize) -> u32 {
        self.row(u).find(|&(c, _)| c == s).map_or(0, |(_, n)| n)
    }

    pub fn row_sum(&self, u: usize) -> u64 {
        self.row(u).map(|(_, n)| n as u64).sum()
    }

    pub fn dense_row(&self, u: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.cells];
        for (s, n) in self.row(u) {
            out[s] = n as f64;
        }
        out
    }

    /// Returns a copy with every count multiplied by `factor`.
    pub fn scaled(&self, factor: u32) -> Self {
        let mut m = self.clone();
        for v in &mut m.vals {
            *v *= factor;
        }
        m
    }
}

fn check_grid(grain: f64, cells: usize) -> Result<()> {
    if !(grain > 0.0 && grain.is_finite()) {
        return Err(Error::invalid(format!("grain {grain} must be positive")));
    }
    if cells == 0 {
        return Err(Error::invalid("horizon must have at least one cell"));
    }
    Ok(())
}

/// Counts for category `c` on the grid anchored at time 0. The grid must
/// cover the whole window.
pub fn count_matrix(log: &BehavioralLog, c: usize, grain: f64, cells: usize) -> Result<CountMatrix> {
    check_grid(grain, cells)?;
    if grain * (cells as f64) < log.window() {
        return Err(Error::invalid(format!(
            "grid of {cells} × {grain} days does not cover the window of {} days; use count_matrix_window",
            log.window()
        )));
    }
    build_counts(log, c, grain, cells, 0.0)
}

/// Counts for category `c` on the `cells` grid cells ending at `end`.
/// Events outside `[end − cells·grain, end)` are dropped.
pub fn count_matrix_window(
    log: &BehavioralLog,
    c: usize,
    grain: f64,
    cells: usize,
    end: f64,
) -> Result<CountMatrix> {
    check_grid(grain, cells)?;
    build_counts(log, c, grain, cells, end - grain * cells as f64)
}

/// One [`count_matrix_window`] per category, in a single pass over the log.
pub fn count_matrices_window(
    log: &BehavioralLog,
    grain: f64,
    cells: usize,
    end: f64,
) -> Result<Vec<CountMatrix>> {
    check_grid(grain, cells)?;
    let origin = end - grain * cells as f64;
    let nc = log.num_categories();
    let mut rows: Vec<Vec<Vec<(usize, u32)>>> = vec![Vec::with_capacity(log.num_users()); nc];
    for u in log.users() {
        let mut per_cat: Vec<Vec<(usize, u32)>> = vec![Vec::new(); nc];
        for e in &u.events {
            if let Some(s) = cell_of(e.timestamp, origin, grain, cells) {
                per_cat[e.category].push((s, 1));
            }
        }
        for (c, r) in per_cat.into_iter().enumerate() {
            rows[c].push(r);
        }
    }
    rows.into_iter()
        .enumerate()
        .map(|(c, r)| CountMatrix::from_rows(c, grain, cells, origin, r))
        .collect()
}

fn build_counts(log: &BehavioralLog, c: usize, grain: f64, cells: usize, origin: f64) -> Result<CountMatrix> {
    if c >= log.num_categories() {
        return Err(Error::invalid(format!("category index {c} out of range")));
    }
    let rows = log
        .users()
        .iter()
        .map(|u| {
            u.events
                .iter()
                .filter(|e| e.category == c)
                .filter_map(|e| cell_of(e.timestamp, origin, grain, cells))
                .map(|s| (s, 1))
                .collect()
        })
        .collect();
    CountMatrix::from_rows(c, grain, cells, origin, rows)
}

#[inline]
fn cell_of(t: f64, origin: f64, grain: f64, cells: usize) -> Option<usize> {
    if t < origin {
        return None;
    }
    let s = ((t - origin) / grain).floor();
    if s < cells as f64 {
        Some(s as usize)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn ev(user: &str, cat: &str, t: f64) -> PurchaseEvent {
        PurchaseEvent {
            user_id: user.into(),
            item_id: None,
            category_id: cat.into(),
            timestamp_days: t,
            price: None,
            promo_flag: false,
        }
    }

    #[test]
    fn sequences_are_sorted() {
        let log = BehavioralLog::from_events(
            vec![ev("u", "a", 5.0), ev("u", "a", 1.0), ev("u", "b", 3.0)],
            None,
            None,
        )
        .unwrap();
        let ts: Vec<f64> = log.user(0).events.iter().map(|e| e.timestamp).collect();
        assert_eq!(ts, vec![1.0, 3.0, 5.0]);
        assert_eq!(log.window(), 6.0);
    }

    #[test]
    fn empty_log_is_valid() {
        let log = BehavioralLog::from_events(vec![], None, None).unwrap();
        assert_eq!(log.num_users(), 0);
        assert_eq!(log.window(), 0.0);
    }

    #[test]
    fn ids_order_numerically() {
        let log = BehavioralLog::from_events(
            vec![ev("10", "a", 0.0), ev("9", "a", 0.0), ev("x", "a", 0.0)],
            None,
            None,
        )
        .unwrap();
        assert_eq!(log.user_ids(), vec!["9", "10", "x"]);
    }

    #[test]
    fn fixed_index_rejects_unknown_category() {
        let idx = CategoryIndex::new(["a"]);
        let err = BehavioralLog::from_events(vec![ev("u", "b", 0.0)], Some(idx), None).unwrap_err();
        assert!(matches!(err, Error::UnknownCategory(c) if c == "b"));
    }

    #[test]
    fn window_override_is_checked() {
        assert!(BehavioralLog::from_events(vec![ev("u", "a", 10.0)], None, Some(10.0)).is_err());
        let log = BehavioralLog::from_events(vec![ev("u", "a", 9.5)], None, Some(10.0)).unwrap();
        assert_eq!(log.window(), 10.0);
    }

    #[test]
    fn count_matrix_single_purchase_at_zero() {
        let log = BehavioralLog::from_events(vec![ev("u", "a", 0.0)], None, None).unwrap();
        let m = count_matrix(&log, 0, 1.0, 3).unwrap();
        assert_eq!(m.dense_row(0), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn count_matrix_half_open_cells() {
        let log = BehavioralLog::from_events(
            vec![ev("u", "a", 0.5), ev("u", "a", 8.9), ev("u", "a", 9.0)],
            None,
            None,
        )
        .unwrap();
        let m = count_matrix(&log, 0, 9.0, 2).unwrap();
        assert_eq!(m.get(0, 0), 2);
        assert_eq!(m.get(0, 1), 1);
    }

    #[test]
    fn count_matrix_requires_cover() {
        let log = BehavioralLog::from_events(vec![ev("u", "a", 20.0)], None, None).unwrap();
        assert!(count_matrix(&log, 0, 1.0, 10).is_err());
        assert!(count_matrix(&log, 0, 0.0, 10).is_err());
        let m = count_matrix_window(&log, 0, 1.0, 10, 21.0).unwrap();
        assert_eq!(m.get(0, 9), 1);
        assert_eq!(m.origin(), 11.0);
    }

    #[test]
    fn counts_upto_is_strict() {
        let log = BehavioralLog::from_events(
            vec![ev("u", "a", 1.0), ev("u", "a", 5.0), ev("u", "a", 9.0)],
            None,
            None,
        )
        .unwrap();
        assert_eq!(counts_upto(&log, "u", 0, 0.0), 0);
        assert_eq!(counts_upto(&log, "u", 0, 5.0), 1);
        assert_eq!(counts_upto(&log, "u", 0, 5.0001), 2);
        assert_eq!(counts_upto(&log, "nobody", 0, 5.0), 0);
    }

    #[test]
    fn count_strictly_between_excludes_endpoints() {
        let log = BehavioralLog::from_events(
            vec![
                ev("u", "a", 1.0),
                ev("u", "b", 1.0),
                ev("u", "b", 2.0),
                ev("u", "a", 3.0),
            ],
            None,
            None,
        )
        .unwrap();
        assert_eq!(log.user(0).count_strictly_between(1.0, 3.0), 1);
    }

    #[test]
    fn category_index_serde() {
        let idx = CategoryIndex::new(["b", "a"]).with_path("a", "grocery/sugar").unwrap();
        let json = serde_json::to_string(&idx).unwrap();
        let back: CategoryIndex = serde_json::from_str(&json).unwrap();
        assert_eq!(back, idx);
        assert_eq!(back.index_of("b"), Some(0));
        assert_eq!(back.path(1), Some("grocery/sugar"));
    }
}
