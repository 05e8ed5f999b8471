//! Likelihood-free estimation: base intensities, interval samples and the
//! kernel bank, and the Markov / lifted Markov latent-network estimators.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{BehavioralLog, CategoryIndex, UserHistory};
use crate::kernels::{fit_mow, fit_weibull, KernelBank, KernelParams, Provenance};
use crate::numeric::{derive_seed, median};
use crate::preprocess::MatchingSet;

pub const DEFAULT_COMPONENTS: usize = 5;
pub const DEFAULT_MIN_SAMPLES: usize = 30;
pub const DEFAULT_ALPHA_S: f64 = 3.0;
pub const DEFAULT_BETA_S: f64 = 0.1;

/// Per-category base rates μ⁰ in events/day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseIntensities {
    pub categories: CategoryIndex,
    pub rates: Vec<f64>,
    /// Training span T in days.
    pub span: f64,
}

/// `μ⁰_c = N_c(T) / T`, with `N_c(T)` summed over all users.
pub fn estimate_base_intensity(log: &BehavioralLog) -> Result<BaseIntensities> {
    let span = log.window();
    if !(span > 0.0) {
        return Err(Error::invalid("base intensity needs a positive training span"));
    }
    Ok(BaseIntensities {
        categories: log.categories().clone(),
        rates: log.category_totals().iter().map(|&n| n as f64 / span).collect(),
        span,
    })
}

/// Weighted mean of pair intervals, each pair weighted by
/// `1 / log₂(2 + m)` where `m` counts the user's purchases (any category)
/// strictly inside the pair's open interval.
pub fn weighted_mean_interval(user: &UserHistory, pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(from, to) in pairs {
        let m = user.count_strictly_between(from, to) as f64;
        let w = 1.0 / (2.0 + m).log2();
        num += w * (to - from);
        den += w;
    }
    Some(num / den)
}

/// Weighted average interval d̄ of a matching.
pub fn weighted_interval(matching: &crate::preprocess::Matching, log: &BehavioralLog) -> Result<f64> {
    weighted_mean_interval(log.user(matching.user), &matching.pairs).ok_or(Error::NoMatches)
}

/// Consecutive same-category purchases with a positive gap.
pub fn consecutive_pairs(times: &[f64]) -> Vec<(f64, f64)> {
    times
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| (w[0], w[1]))
        .collect()
}

/// d̄ for one `(user, target, source)` triple.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalSummary {
    pub user: usize,
    pub target: usize,
    pub source: usize,
    pub mean_interval: f64,
    pub matches: usize,
}

/// One d̄ per user with a non-empty matching for `(target, source)`. The
/// diagonal uses consecutive same-category gaps, without the attribution cap.
pub fn extract_samples(
    log: &BehavioralLog,
    matchings: &MatchingSet,
    target: usize,
    source: usize,
) -> Vec<IntervalSummary> {
    if target == source {
        return log
            .users()
            .iter()
            .enumerate()
            .filter_map(|(ui, u)| {
                let pairs = consecutive_pairs(&u.timestamps(target));
                weighted_mean_interval(u, &pairs).map(|d| IntervalSummary {
                    user: ui,
                    target,
                    source,
                    mean_interval: d,
                    matches: pairs.len(),
                })
            })
            .collect();
    }
    matchings
        .get(target, source)
        .iter()
        .filter_map(|m| {
            weighted_mean_interval(log.user(m.user), &m.pairs).map(|d| IntervalSummary {
                user: m.user,
                target,
                source,
                mean_interval: d,
                matches: m.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimationOptions {
    pub components: usize,
    pub min_samples: usize,
    pub seed: u64,
}

impl Default for KernelEstimationOptions {
    fn default() -> Self {
        Self {
            components: DEFAULT_COMPONENTS,
            min_samples: DEFAULT_MIN_SAMPLES,
            seed: 0,
        }
    }
}

/// Diagonal default when no category has usable repeat gaps.
fn default_diagonal() -> KernelParams {
    KernelParams::mow(&[(30.0, 1.0, 1.0)])
}

fn default_off_diagonal(window: f64) -> KernelParams {
    KernelParams::weibull(window / 2.0, 1.0)
}

enum PairFit {
    Fitted(KernelParams, usize),
    Insufficient(Vec<f64>),
}

/// Fits the full |C|² kernel bank: a Weibull per ordered pair of distinct
/// categories and a Weibull mixture per category. Pairs with fewer than
/// `min_samples` samples (or failed fits) borrow a prior: the median fitted
/// off-diagonal Weibull, or a mixture fitted on the pooled diagonal samples.
pub fn estimate_kernels(
    log: &BehavioralLog,
    matchings: &MatchingSet,
    options: &KernelEstimationOptions,
) -> Result<KernelBank> {
    if options.components == 0 {
        return Err(Error::invalid("mixture component count must be positive"));
    }
    let n = log.num_categories();
    let fits: Vec<PairFit> = (0..n * n)
        .into_par_iter()
        .map(|i| {
            let (target, source) = (i / n, i % n);
            let samples: Vec<f64> = extract_samples(log, matchings, target, source)
                .into_iter()
                .map(|s| s.mean_interval)
                .collect();
            let enough = samples.len() >= options.min_samples.max(options.components);
            let fitted = if !enough {
                None
            } else if target == source {
                fit_mow(&samples, options.components, derive_seed(options.seed, i as u64))
                    .map(|f| f.params)
                    .ok()
            } else {
                fit_weibull(&samples).map(|f| f.params()).ok()
            };
            match fitted {
                Some(p) => PairFit::Fitted(p, samples.len()),
                None => PairFit::Insufficient(samples),
            }
        })
        .collect();

    let mut fitted_scales = Vec::new();
    let mut fitted_shapes = Vec::new();
    let mut pooled_off = Vec::new();
    let mut pooled_diag = Vec::new();
    for (i, f) in fits.iter().enumerate() {
        let diagonal = i / n == i % n;
        match (f, diagonal) {
            (PairFit::Fitted(KernelParams::Weibull { scale, shape }, _), false) => {
                fitted_scales.push(*scale);
                fitted_shapes.push(*shape);
            }
            (PairFit::Insufficient(s), false) => pooled_off.extend_from_slice(s),
            (PairFit::Insufficient(s), true) => pooled_diag.extend_from_slice(s),
            _ => {}
        }
    }
    let any_off_fallback = fits
        .iter()
        .enumerate()
        .any(|(i, f)| i / n != i % n && matches!(f, PairFit::Insufficient(_)));
    let off_prior = if !any_off_fallback {
        None
    } else if let (Some(scale), Some(shape)) = (median(&fitted_scales), median(&fitted_shapes)) {
        Some((KernelParams::weibull(scale, shape), Provenance::Prior))
    } else {
        match fit_weibull(&pooled_off) {
            Ok(f) => Some((f.params(), Provenance::Prior)),
            Err(_) => Some((default_off_diagonal(matchings.window), Provenance::Default)),
        }
    };
    let any_diag_fallback = (0..n).any(|c| matches!(fits[c * n + c], PairFit::Insufficient(_)));
    let diag_prior = if !any_diag_fallback {
        None
    } else {
        // pool every category's repeat gaps, including the fitted ones
        let mut pooled = pooled_diag;
        for c in 0..n {
            if matches!(fits[c * n + c], PairFit::Fitted(..)) {
                pooled.extend(extract_samples(log, matchings, c, c).into_iter().map(|s| s.mean_interval));
            }
        }
        match fit_mow(&pooled, options.components, derive_seed(options.seed, u64::MAX)) {
            Ok(f) => Some((f.params, Provenance::Prior)),
            Err(_) => Some((default_diagonal(), Provenance::Default)),
        }
    };

    let mut bank = KernelBank::new(log.categories().clone());
    for (i, f) in fits.into_iter().enumerate() {
        let (target, source) = (i / n, i % n);
        match f {
            PairFit::Fitted(p, count) => bank.set(target, source, p, Provenance::Fitted, count),
            PairFit::Insufficient(samples) => {
                let (p, prov) = if target == source {
                    diag_prior.clone()
                } else {
                    off_prior.clone()
                }
                .expect("prior computed whenever a fallback exists");
                bank.set(target, source, p, prov, samples.len());
            }
        }
    }
    Ok(bank)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkEstimator {
    Mkv,
    Lmkv,
}

/// Non-negative category network; `weight(c, c')` is the excitation of `c`
/// by purchases in `c'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentNetwork {
    pub categories: CategoryIndex,
    pub estimator: NetworkEstimator,
    pub alpha_s: f64,
    pub beta_s: f64,
    /// Row-major `|C|×|C|`, row = target, column = source.
    pub matrix: Vec<Vec<f64>>,
}

impl LatentNetwork {
    pub fn from_matrix(categories: CategoryIndex, matrix: Vec<Vec<f64>>) -> Result<Self> {
        let n = categories.len();
        if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension(format!("network must be {n}×{n}")));
        }
        if matrix.iter().flatten().any(|&b| !(b >= 0.0 && b.is_finite())) {
            return Err(Error::invalid("network entries must be non-negative and finite"));
        }
        Ok(Self {
            categories,
            estimator: NetworkEstimator::Mkv,
            alpha_s: 0.0,
            beta_s: 0.0,
            matrix,
        })
    }

    pub fn num_categories(&self) -> usize {
        self.matrix.len()
    }

    pub fn weight(&self, target: usize, source: usize) -> f64 {
        self.matrix[target][source]
    }

    /// Dense CSV with a header of source ids and one row per target.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["target\\source".to_string()];
        header.extend(self.categories.ids().iter().cloned());
        w.write_record(&header)?;
        for (c, row) in self.matrix.iter().enumerate() {
            let mut rec = vec![self.categories.id(c).to_string()];
            rec.extend(row.iter().map(|b| b.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn repeat_pair_counts(log: &BehavioralLog) -> Vec<u64> {
    let n = log.num_categories();
    let mut counts = vec![0u64; n];
    for u in log.users() {
        for (c, times) in u.by_category(n).iter().enumerate() {
            counts[c] += consecutive_pairs(times).len() as u64;
        }
    }
    counts
}

/// Markov estimator:
/// `β_{c,c'} = (Σ_u |M_{u,c,c'}| + α_s) / (Σ_u N_{u,c'}(T) + |C|·β_s)`.
/// Diagonal entries count consecutive same-category pairs.
pub fn estimate_network_mkv(
    log: &BehavioralLog,
    matchings: &MatchingSet,
    alpha_s: f64,
    beta_s: f64,
) -> Result<LatentNetwork> {
    if !(alpha_s >= 0.0 && beta_s > 0.0) {
        return Err(Error::invalid("smoothing needs α_s ≥ 0 and β_s > 0"));
    }
    let n = log.num_categories();
    let totals = log.category_totals();
    let repeats = repeat_pair_counts(log);
    let mut matrix = vec![vec![0.0; n]; n];
    for (target, row) in matrix.iter_mut().enumerate() {
        for (source, cell) in row.iter_mut().enumerate() {
            let matched = if target == source {
                repeats[target]
            } else {
                matchings.get(target, source).iter().map(|m| m.len() as u64).sum()
            };
            *cell = (matched as f64 + alpha_s) / (totals[source] as f64 + n as f64 * beta_s);
        }
    }
    Ok(LatentNetwork {
        categories: log.categories().clone(),
        estimator: NetworkEstimator::Mkv,
        alpha_s,
        beta_s,
        matrix,
    })
}

/// Lifted Markov estimator: divides every row `c` by the popularity share
/// `N_c(T) / Σ N(T)`. Rows of categories without purchases are set to
/// `zero_count_cap`, or, when `None`, to the largest lifted entry of the
/// other rows.
pub fn lift_network(mkv: &LatentNetwork, totals: &[u64], zero_count_cap: Option<f64>) -> Result<LatentNetwork> {
    let n = mkv.num_categories();
    if totals.len() != n {
        return Err(Error::Dimension(format!("{} totals for {n} categories", totals.len())));
    }
    let all: u64 = totals.iter().sum();
    let mut lifted = mkv.clone();
    lifted.estimator = NetworkEstimator::Lmkv;
    let mut zero_rows = Vec::new();
    for (c, row) in lifted.matrix.iter_mut().enumerate() {
        if totals[c] == 0 {
            zero_rows.push(c);
            continue;
        }
        let share = totals[c] as f64 / all as f64;
        for b in row.iter_mut() {
            *b /= share;
        }
    }
    if !zero_rows.is_empty() {
        let cap = zero_count_cap.unwrap_or_else(|| {
            lifted
                .matrix
                .iter()
                .enumerate()
                .filter(|(c, _)| totals[*c] > 0)
                .flat_map(|(_, r)| r.iter().copied())
                .fold(0.0, f64::max)
        });
        for &c in &zero_rows {
            log::warn!(
                "category `{}` has no purchases; lifted row capped at {cap}",
                mkv.categories.id(c)
            );
            lifted.matrix[c] = vec![cap; n];
        }
    }
    Ok(lifted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::PurchaseEvent;
    use crate::preprocess::all_matchings;

    fn ev(user: &str, cat: &str, t: f64) -> PurchaseEvent {
        PurchaseEvent {
            user_id: user.into(),
            item_id: None,
            category_id: cat.into(),
            timestamp_days: t,
            price: None,
            promo_flag: false,
        }
    }

    fn log_of(events: Vec<PurchaseEvent>, window: f64) -> BehavioralLog {
        BehavioralLog::from_events(events, None, Some(window)).unwrap()
    }

    #[test]
    fn base_intensity_division() {
        let mut events: Vec<_> = (0..90).map(|i| ev(&format!("u{}", i % 9), "a", i as f64 * 4.0)).collect();
        events.push(ev("x", "b", 1.0));
        let log = BehavioralLog::from_events(
            events,
            Some(CategoryIndex::new(["a", "b", "empty"])),
            Some(450.0),
        )
        .unwrap();
        let mu = estimate_base_intensity(&log).unwrap();
        assert!((mu.rates[0] - 0.2).abs() < 1e-15);
        assert_eq!(mu.rates[2], 0.0);
        assert!(estimate_base_intensity(&BehavioralLog::empty(CategoryIndex::new(["a"]), 0.0)).is_err());
    }

    #[test]
    fn single_pair_interval() {
        let log = log_of(vec![ev("u", "a", 1.0), ev("u", "b", 4.0)], 10.0);
        let set = all_matchings(&log, 10.0).unwrap();
        let m = &set.get(1, 0)[0];
        assert_eq!(weighted_interval(m, &log).unwrap(), 3.0);
    }

    #[test]
    fn weighted_interval_examples() {
        // d = 10 with no interleaving, d = 20 with 2 interleaving purchases
        let log = log_of(
            vec![
                ev("u", "a", 0.0),
                ev("u", "b", 10.0),
                ev("u", "a", 100.0),
                ev("u", "c", 105.0),
                ev("u", "c", 110.0),
                ev("u", "b", 120.0),
            ],
            200.0,
        );
        let u = log.user(0);
        let d = weighted_mean_interval(u, &[(0.0, 10.0), (100.0, 120.0)]).unwrap();
        assert!((d - 20.0 / 1.5).abs() < 1e-12);

        // 62 interleaving purchases → weight 1/log₂(64) = 1/6
        let mut events = vec![ev("v", "a", 0.0), ev("v", "b", 10.0), ev("v", "a", 100.0), ev("v", "b", 120.0)];
        for i in 0..62 {
            events.push(ev("v", "c", 100.1 + i as f64 * 0.3));
        }
        let log = log_of(events, 200.0);
        let d = weighted_mean_interval(log.user(0), &[(0.0, 10.0), (100.0, 120.0)]).unwrap();
        assert!((d - (10.0 + 20.0 / 6.0) / (1.0 + 1.0 / 6.0)).abs() < 1e-12);
        assert!(weighted_mean_interval(log.user(0), &[]).is_none());
    }

    #[test]
    fn diagonal_samples_use_gaps() {
        let log = log_of(vec![ev("u", "a", 0.0), ev("u", "a", 30.0), ev("u", "a", 61.0)], 100.0);
        let set = all_matchings(&log, 10.0).unwrap();
        let s = extract_samples(&log, &set, 0, 0);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].matches, 2);
        assert!((s[0].mean_interval - 30.5).abs() < 1e-12);
    }

    #[test]
    fn empty_pair_has_no_samples() {
        let log = log_of(vec![ev("u", "a", 0.0), ev("u", "b", 50.0)], 100.0);
        let set = all_matchings(&log, 10.0).unwrap();
        assert!(extract_samples(&log, &set, 1, 0).is_empty());
    }

    #[test]
    fn one_purchase_per_user_is_all_fallback() {
        let events: Vec<_> = (0..50)
            .map(|i| ev(&i.to_string(), if i % 2 == 0 { "a" } else { "b" }, i as f64))
            .collect();
        let log = log_of(events, 100.0);
        let set = all_matchings(&log, 10.0).unwrap();
        let bank = estimate_kernels(&log, &set, &KernelEstimationOptions::default()).unwrap();
        assert!(bank.is_complete());
        assert_eq!(bank.len(), 4);
        assert!(bank.iter().all(|(_, _, e)| e.provenance != Provenance::Fitted));
    }

    #[test]
    fn mkv_smoothing_only() {
        let log = BehavioralLog::empty(CategoryIndex::new(["a", "b"]), 10.0);
        let set = all_matchings(&log, 10.0).unwrap();
        let net = estimate_network_mkv(&log, &set, 3.0, 0.1).unwrap();
        for row in &net.matrix {
            for &b in row {
                assert!((b - 15.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mkv_direct_evaluation() {
        // 10 categories; source "s" has 100 purchases, 50 of them followed
        // within 10 days by a purchase in "t"
        let mut events = Vec::new();
        for i in 0..100 {
            let user = format!("u{i}");
            events.push(ev(&user, "s", 0.0));
            if i < 50 {
                events.push(ev(&user, "t", 2.0));
            }
        }
        let cats = CategoryIndex::new(["s", "t", "c2", "c3", "c4", "c5", "c6", "c7", "c8", "c9"]);
        let log = BehavioralLog::from_events(events, Some(cats), Some(10.0)).unwrap();
        let set = all_matchings(&log, 10.0).unwrap();
        let net = estimate_network_mkv(&log, &set, 3.0, 0.1).unwrap();
        assert!((net.weight(1, 0) - 53.0 / 101.0).abs() < 1e-12);
    }

    #[test]
    fn lifting_uniform_and_skewed() {
        let cats = CategoryIndex::new(["a", "b"]);
        let mut mkv = LatentNetwork::from_matrix(cats, vec![vec![0.2, 0.4], vec![0.6, 0.8]]).unwrap();
        mkv.estimator = NetworkEstimator::Mkv;
        let uniform = lift_network(&mkv, &[10, 10], None).unwrap();
        for c in 0..2 {
            for s in 0..2 {
                assert!((uniform.weight(c, s) - 2.0 * mkv.weight(c, s)).abs() < 1e-12);
            }
        }
        let skewed = lift_network(&mkv, &[90, 10], None).unwrap();
        assert!((skewed.weight(1, 0) / mkv.weight(1, 0) - 10.0).abs() < 1e-12);
        assert!((skewed.weight(0, 1) / mkv.weight(0, 1) - 1.0 / 0.9).abs() < 1e-12);
    }

    #[test]
    fn lifting_zero_count_row() {
        let cats = CategoryIndex::new(["a", "b"]);
        let mkv = LatentNetwork::from_matrix(cats, vec![vec![0.2, 0.4], vec![0.6, 0.8]]).unwrap();
        let l = lift_network(&mkv, &[10, 0], None).unwrap();
        assert_eq!(l.matrix[1], vec![0.4, 0.4]);
        let l = lift_network(&mkv, &[10, 0], Some(7.0)).unwrap();
        assert_eq!(l.matrix[1], vec![7.0, 7.0]);
        assert!(lift_network(&mkv, &[1], None).is_err());
    }

    #[test]
    fn network_csv_layout() {
        let cats = CategoryIndex::new(["a", "b"]);
        let net = LatentNetwork::from_matrix(cats, vec![vec![0.5, 0.25], vec![0.0, 1.0]]).unwrap();
        let mut buf = Vec::new();
        net.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "target\\source,a,b\na,0.5,0.25\nb,0,1\n");
    }
}
