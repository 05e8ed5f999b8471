//! Noise filters and attribution matching.
//!
//! Order in the pipeline is fixed: promotions are removed first, re-sellers
//! are judged on the remaining organic purchases, then matchings are built.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::events::BehavioralLog;

pub const DEFAULT_RESELLER_THRESHOLD: usize = 10;
pub const DEFAULT_RESELLER_WINDOW_DAYS: f64 = 7.0;
pub const DEFAULT_ATTRIBUTION_WINDOW_DAYS: f64 = 10.0;

/// Drops promotional purchases; every user stays registered.
pub fn filter_promotions(log: &BehavioralLog) -> BehavioralLog {
    log.retain_events(|_, e| !e.promo)
}

/// True when some category has `threshold` purchases inside a half-open
/// window `[t, t + window)`.
fn exceeds_velocity(by_category: &[Vec<f64>], threshold: usize, window: f64) -> bool {
    by_category.iter().any(|times| {
        times.len() >= threshold
            && times
                .windows(threshold)
                .any(|w| w[threshold - 1] - w[0] < window)
    })
}

/// Removes every user who made `threshold` or more purchases in one category
/// within a sliding window of `window` days. Returns the filtered log and the
/// removed user ids.
pub fn filter_resellers(
    log: &BehavioralLog,
    threshold: usize,
    window: f64,
) -> Result<(BehavioralLog, BTreeSet<String>)> {
    if threshold == 0 {
        return Err(Error::invalid("re-seller threshold must be at least 1"));
    }
    if !(window > 0.0) {
        return Err(Error::invalid("re-seller window must be positive"));
    }
    let nc = log.num_categories();
    let removed: BTreeSet<String> = log
        .users()
        .par_iter()
        .filter(|u| exceeds_velocity(&u.by_category(nc), threshold, window))
        .map(|u| u.id.clone())
        .collect();
    let kept = log.retain_users(|u| !removed.contains(&u.id));
    Ok((kept, removed))
}

/// Pairs of (earlier source purchase, later target purchase) for one user.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Matching {
    pub user: usize,
    pub source: usize,
    pub target: usize,
    pub window: f64,
    /// `(t_source, t_target)` with `t_source < t_target < t_source + window`.
    pub pairs: Vec<(f64, f64)>,
}

impl Matching {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn intervals(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|&(s, t)| t - s)
    }
}

/// Greedy nearest-successor matching over sorted timestamp lists: each source
/// time, in ascending order, takes the earliest unused target time strictly
/// after it and strictly within `window`.
pub fn greedy_match(source: &[f64], target: &[f64], window: f64) -> Vec<(f64, f64)> {
    let mut pairs = Vec::new();
    let mut next = 0;
    for &s in source {
        while next < target.len() && target[next] <= s {
            next += 1;
        }
        if next < target.len() && target[next] < s + window {
            pairs.push((s, target[next]));
            next += 1;
        }
    }
    pairs
}

/// Attribution matching of user `user` from `source` purchases to later
/// `target` purchases.
pub fn match_attribution(
    log: &BehavioralLog,
    user: usize,
    source: usize,
    target: usize,
    window: f64,
) -> Result<Matching> {
    if source == target {
        return Err(Error::invalid(
            "attribution matching needs distinct categories; same-category gaps come from estimation",
        ));
    }
    if !(window > 0.0) {
        return Err(Error::invalid("attribution window must be positive"));
    }
    let u = log.user(user);
    Ok(Matching {
        user,
        source,
        target,
        window,
        pairs: greedy_match(&u.timestamps(source), &u.timestamps(target), window),
    })
}

/// Non-empty matchings keyed by `(target, source)` category pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchingSet {
    pub window: f64,
    pub by_pair: BTreeMap<(usize, usize), Vec<Matching>>,
}

impl MatchingSet {
    /// Matchings whose source is `source` and target is `target`.
    pub fn get(&self, target: usize, source: usize) -> &[Matching] {
        self.by_pair
            .get(&(target, source))
            .map_or(&[], Vec::as_slice)
    }

    pub fn total_pairs(&self) -> usize {
        self.by_pair.values().flatten().map(Matching::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_pair.is_empty()
    }

    /// Audit dump: `user_id,source_category,target_category,t_source,t_target`.
    pub fn write_csv<W: Write>(&self, log: &BehavioralLog, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["user_id", "source_category", "target_category", "t_source", "t_target"])?;
        let cats = log.categories();
        for m in self.by_pair.values().flatten() {
            for &(s, t) in &m.pairs {
                w.write_record([
                    log.user(m.user).id.as_str(),
                    cats.id(m.source),
                    cats.id(m.target),
                    &s.to_string(),
                    &t.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Attribution matchings for every ordered pair of distinct categories and
/// every user. Empty matchings are omitted.
pub fn all_matchings(log: &BehavioralLog, window: f64) -> Result<MatchingSet> {
    if !(window > 0.0) {
        return Err(Error::invalid("attribution window must be positive"));
    }
    let nc = log.num_categories();
    let per_user: Vec<Vec<Matching>> = log
        .users()
        .par_iter()
        .enumerate()
        .map(|(ui, u)| {
            let times = u.by_category(nc);
            let mut out = Vec::new();
            for target in 0..nc {
                if times[target].is_empty() {
                    continue;
                }
                for source in 0..nc {
                    if source == target || times[source].is_empty() {
                        continue;
                    }
                    let pairs = greedy_match(&times[source], &times[target], window);
                    if !pairs.is_empty() {
                        out.push(Matching {
                            user: ui,
                            source,
                            target,
                            window,
                            pairs,
                        });
                    }
                }
            }
            out
        })
        .collect();
    let mut by_pair: BTreeMap<(usize, usize), Vec<Matching>> = BTreeMap::new();
    for m in per_user.into_iter().flatten() {
        by_pair.entry((m.target, m.source)).or_default().push(m);
    }
    Ok(MatchingSet { window, by_pair })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::PurchaseEvent;

    fn ev(user: &str, cat: &str, t: f64, promo: bool) -> PurchaseEvent {
        PurchaseEvent {
            user_id: user.into(),
            item_id: None,
            category_id: cat.into(),
            timestamp_days: t,
            price: None,
            promo_flag: promo,
        }
    }

    fn log_of(events: Vec<PurchaseEvent>) -> BehavioralLog {
        BehavioralLog::from_events(events, None, None).unwrap()
    }

    #[test]
    fn promotion_filter_identity_and_annihilation() {
        let organic = log_of(vec![ev("u", "a", 1.0, false), ev("v", "b", 2.0, false)]);
        assert_eq!(filter_promotions(&organic), organic);
        let promo = log_of(vec![ev("u", "a", 1.0, true), ev("v", "b", 2.0, true)]);
        assert_eq!(filter_promotions(&promo).num_events(), 0);
    }

    #[test]
    fn promotion_filter_count() {
        let events: Vec<_> = (0..100)
            .map(|i| ev(&format!("u{}", i % 7), "a", i as f64, i < 37))
            .collect();
        let log = log_of(events);
        let f = filter_promotions(&log);
        assert_eq!(f.num_events(), 63);
        for u in f.users() {
            assert!(u.events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        }
    }

    #[test]
    fn nine_in_a_day_is_retained() {
        let events: Vec<_> = (0..9).map(|i| ev("u", "a", 1.0 + i as f64 * 0.1, false)).collect();
        let (kept, removed) = filter_resellers(&log_of(events), 10, 7.0).unwrap();
        assert!(removed.is_empty());
        assert_eq!(kept.num_events(), 9);
    }

    #[test]
    fn ten_within_seven_days_removes_user_everywhere() {
        let mut events: Vec<_> = (0..10)
            .map(|i| ev("r", "a", 5.0 + i as f64 * 6.9 / 9.0, false))
            .collect();
        events.push(ev("r", "b", 40.0, false));
        events.push(ev("ok", "a", 3.0, false));
        let (kept, removed) = filter_resellers(&log_of(events), 10, 7.0).unwrap();
        assert_eq!(removed.into_iter().collect::<Vec<_>>(), vec!["r"]);
        assert_eq!(kept.num_users(), 1);
        assert_eq!(kept.num_events(), 1);
    }

    #[test]
    fn spread_purchases_are_not_resellers() {
        // 10 purchases over 30 days, at most 3 in any 7-day window
        let events: Vec<_> = (0..10).map(|i| ev("u", "a", i as f64 * 3.1, false)).collect();
        let (_, removed) = filter_resellers(&log_of(events), 10, 7.0).unwrap();
        assert!(removed.is_empty());
    }

    #[test]
    fn exactly_window_span_is_outside() {
        // first at 0, tenth at 7.0: the window [0, 7) holds only nine
        let events: Vec<_> = (0..10).map(|i| ev("u", "a", i as f64 * 7.0 / 9.0, false)).collect();
        let (_, removed) = filter_resellers(&log_of(events), 10, 7.0).unwrap();
        assert!(removed.is_empty());
    }

    #[test]
    fn reseller_arguments_validated() {
        let log = log_of(vec![]);
        assert!(filter_resellers(&log, 0, 7.0).is_err());
        assert!(filter_resellers(&log, 10, 0.0).is_err());
    }

    #[test]
    fn matching_examples() {
        assert_eq!(greedy_match(&[1.0], &[3.0], 10.0), vec![(1.0, 3.0)]);
        assert!(greedy_match(&[1.0], &[12.0], 10.0).is_empty());
        assert_eq!(
            greedy_match(&[1.0, 2.0], &[3.0, 4.0], 10.0),
            vec![(1.0, 3.0), (2.0, 4.0)]
        );
        // simultaneous events are not successors
        assert!(greedy_match(&[1.0], &[1.0], 10.0).is_empty());
        // a target is used once
        assert_eq!(greedy_match(&[1.0, 1.5], &[3.0], 10.0), vec![(1.0, 3.0)]);
    }

    #[test]
    fn match_attribution_rejects_diagonal() {
        let log = log_of(vec![ev("u", "a", 1.0, false)]);
        assert!(match_attribution(&log, 0, 0, 0, 10.0).is_err());
    }

    #[test]
    fn single_category_has_no_matchings() {
        let log = log_of(vec![ev("u", "a", 1.0, false), ev("u", "a", 2.0, false)]);
        assert!(all_matchings(&log, 10.0).unwrap().is_empty());
    }

    #[test]
    fn two_categories_one_user() {
        let log = log_of(vec![
            ev("u", "a", 1.0, false),
            ev("u", "b", 2.0, false),
            ev("u", "a", 3.0, false),
        ]);
        let set = all_matchings(&log, 10.0).unwrap();
        assert!(set.by_pair.len() <= 2);
        // a → b: (1, 2); b → a: (2, 3)
        assert_eq!(set.get(1, 0)[0].pairs, vec![(1.0, 2.0)]);
        assert_eq!(set.get(0, 1)[0].pairs, vec![(2.0, 3.0)]);
        let mut buf = Vec::new();
        set.write_csv(&log, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("user_id,source_category,target_category,t_source,t_target\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
