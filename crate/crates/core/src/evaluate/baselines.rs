//! Count-based, matrix-factorization and Poisson repeat-rate baselines.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{BehavioralLog, CategoryIndex};
use crate::inference::IntensityMatrix;

/// `N_{u,c}(t) − N_{u,c}(t − window)`; `window = None` gives the all-time count.
pub fn baseline_top(log: &BehavioralLog, t: f64, window: Option<f64>) -> Result<IntensityMatrix> {
    if let Some(w) = window {
        if !(w > 0.0) {
            return Err(Error::invalid(format!("Top window {w} must be positive")));
        }
    }
    let n = log.num_categories();
    let mut values = vec![0.0; log.num_users() * n];
    for (u, user) in log.users().iter().enumerate() {
        let lo = window.map_or(f64::NEG_INFINITY, |w| t - w);
        for e in &user.events {
            if e.timestamp >= t {
                break;
            }
            if e.timestamp >= lo {
                values[u * n + e.category] += 1.0;
            }
        }
    }
    IntensityMatrix::from_scores(log.user_ids(), log.categories().clone(), values, t)
}

/// Sparse `|U|×|C|` purchase counts strictly before a tick.
#[derive(Debug, Clone, PartialEq)]
pub struct CountSnapshot {
    pub user_ids: Vec<String>,
    pub categories: CategoryIndex,
    pub at: f64,
    /// Per user, `(category, count)` for non-zero counts in category order.
    pub rows: Vec<Vec<(usize, f64)>>,
}

pub fn count_snapshot(log: &BehavioralLog, t: f64) -> CountSnapshot {
    let n = log.num_categories();
    let rows = log
        .users()
        .iter()
        .map(|user| {
            let mut dense = vec![0.0; n];
            for e in user.events.iter().take_while(|e| e.timestamp < t) {
                dense[e.category] += 1.0;
            }
            dense
                .into_iter()
                .enumerate()
                .filter(|(_, v)| *v > 0.0)
                .collect()
        })
        .collect();
    CountSnapshot {
        user_ids: log.user_ids(),
        categories: log.categories().clone(),
        at: t,
        rows,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfOptions {
    pub rank: usize,
    pub iterations: usize,
    pub regularization: f64,
    pub seed: u64,
}

impl Default for MfOptions {
    fn default() -> Self {
        Self {
            rank: 16,
            iterations: 15,
            regularization: 0.1,
            seed: 0,
        }
    }
}

/// Implicit-feedback factorization: preference 1 where the count is positive,
/// confidence `1 + count`, squared loss with L2 penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct MfModel {
    pub rank: usize,
    /// Row-major `|U|×rank`.
    pub user_factors: Vec<f64>,
    /// Row-major `|C|×rank`.
    pub category_factors: Vec<f64>,
    /// Objective at initialization and after every sweep.
    pub objective: Vec<f64>,
}

impl MfModel {
    pub fn score(&self, user: usize, category: usize) -> f64 {
        let f = self.rank;
        self.user_factors[user * f..(user + 1) * f]
            .iter()
            .zip(&self.category_factors[category * f..(category + 1) * f])
            .map(|(a, b)| a * b)
            .sum()
    }
}

fn gram(factors: &[f64], rank: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(rank, rank);
    for row in factors.chunks_exact(rank) {
        let v = DVector::from_column_slice(row);
        g.ger(1.0, &v, &v, 1.0);
    }
    g
}

/// Solves every row of `target` given the fixed `other` factors, where
/// `entries[r]` lists `(column, count)` pairs of that row.
fn solve_side(target: &mut [f64], other: &[f64], entries: &[Vec<(usize, f64)>], rank: usize, reg: f64) {
    let base = gram(other, rank) + DMatrix::identity(rank, rank) * reg;
    target
        .par_chunks_mut(rank)
        .zip(entries.par_iter())
        .for_each(|(out, row)| {
            let mut a = base.clone();
            let mut b = DVector::zeros(rank);
            for &(j, count) in row {
                let y = DVector::from_column_slice(&other[j * rank..(j + 1) * rank]);
                a.ger(count, &y, &y, 1.0);
                b.axpy(1.0 + count, &y, 1.0);
            }
            let x = a.cholesky().expect("regularized normal equations are positive definite").solve(&b);
            out.copy_from_slice(x.as_slice());
        });
}

fn objective(model: &MfModel, rows: &[Vec<(usize, f64)>], reg: f64) -> f64 {
    let f = model.rank;
    let yty = gram(&model.category_factors, f);
    let mut total = 0.0;
    for (u, row) in rows.iter().enumerate() {
        let x = DVector::from_column_slice(&model.user_factors[u * f..(u + 1) * f]);
        // every cell at confidence 1, preference 0
        total += (x.transpose() * &yty * &x)[(0, 0)];
        for &(c, count) in row {
            let s = model.score(u, c);
            total += (1.0 + count) * (1.0 - s).powi(2) - s * s;
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    total + reg * (norm(&model.user_factors) + norm(&model.category_factors))
}

/// Alternating least squares on the implicit-feedback objective. Each sweep
/// solves users then categories exactly, so the objective never increases.
pub fn baseline_mf(snapshot: &CountSnapshot, options: &MfOptions) -> Result<MfModel> {
    let rank = options.rank;
    if rank == 0 || !(options.regularization > 0.0) {
        return Err(Error::invalid("factorization needs rank ≥ 1 and a positive regularization"));
    }
    if snapshot.rows.iter().flatten().any(|(_, v)| !(*v >= 0.0)) {
        return Err(Error::invalid("count snapshot has negative entries"));
    }
    let users = snapshot.rows.len();
    let n = snapshot.categories.len();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let normal = Normal::new(0.0, 0.1).expect("valid normal");
    let mut model = MfModel {
        rank,
        user_factors: (0..users * rank).map(|_| normal.sample(&mut rng)).collect(),
        category_factors: (0..n * rank).map(|_| normal.sample(&mut rng)).collect(),
        objective: Vec::with_capacity(options.iterations + 1),
    };
    let mut by_category: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (u, row) in snapshot.rows.iter().enumerate() {
        for &(c, v) in row {
            by_category[c].push((u, v));
        }
    }
    let reg = options.regularization;
    model.objective.push(objective(&model, &snapshot.rows, reg));
    for _ in 0..options.iterations {
        let mut uf = std::mem::take(&mut model.user_factors);
        solve_side(&mut uf, &model.category_factors, &snapshot.rows, rank, reg);
        model.user_factors = uf;
        let mut cf = std::mem::take(&mut model.category_factors);
        solve_side(&mut cf, &model.user_factors, &by_category, rank, reg);
        model.category_factors = cf;
        model.objective.push(objective(&model, &snapshot.rows, reg));
    }
    Ok(model)
}

pub fn mf_scores(snapshot: &CountSnapshot, model: &MfModel) -> Result<IntensityMatrix> {
    let n = snapshot.categories.len();
    let values = (0..snapshot.rows.len())
        .flat_map(|u| (0..n).map(move |c| (u, c)))
        .map(|(u, c)| model.score(u, c))
        .collect();
    IntensityMatrix::from_scores(snapshot.user_ids.clone(), snapshot.categories.clone(), values, snapshot.at)
}

/// Pseudo-purchases of prior evidence blended into each user's repeat rate.
pub const BUY_IT_AGAIN_PRIOR_EVENTS: f64 = 1.0;

/// Probability of at least one purchase in `[t, t + δ)` under a homogeneous
/// Poisson repeat rate. The rate is the gamma-Poisson posterior mean
/// `(N_{u,c}(t) + m) / (t + m/ρ_c)` with `ρ_c` the category's mean per-user
/// rate and `m` = [`BUY_IT_AGAIN_PRIOR_EVENTS`].
pub fn baseline_buy_it_again(log: &BehavioralLog, t: f64, horizon: f64) -> Result<IntensityMatrix> {
    if !(t > 0.0) || !(horizon > 0.0) {
        return Err(Error::invalid("buy-it-again needs a positive history and horizon"));
    }
    let snapshot = count_snapshot(log, t);
    let n = log.num_categories();
    let users = log.num_users().max(1) as f64;
    let mut totals = vec![0.0; n];
    for row in &snapshot.rows {
        for &(c, v) in row {
            totals[c] += v;
        }
    }
    let prior: Vec<f64> = totals.iter().map(|tot| tot / users / t).collect();
    let m = BUY_IT_AGAIN_PRIOR_EVENTS;
    let mut values = vec![0.0; log.num_users() * n];
    for (u, row) in snapshot.rows.iter().enumerate() {
        let mut counts = vec![0.0; n];
        for &(c, v) in row {
            counts[c] = v;
        }
        for c in 0..n {
            let rate = if prior[c] > 0.0 {
                (counts[c] + m) / (t + m / prior[c])
            } else {
                counts[c] / t
            };
            values[u * n + c] = -(-rate * horizon).exp_m1();
        }
    }
    IntensityMatrix::from_scores(snapshot.user_ids, snapshot.categories, values, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::PurchaseEvent;

    fn log_of(rows: &[(&str, &str, f64)], window: f64) -> BehavioralLog {
        let events = rows
            .iter()
            .map(|(u, c, t)| PurchaseEvent {
                user_id: u.to_string(),
                item_id: None,
                category_id: c.to_string(),
                timestamp_days: *t,
                price: None,
                promo_flag: false,
            })
            .collect();
        BehavioralLog::from_events(events, Some(CategoryIndex::new(["a", "b"])), Some(window)).unwrap()
    }

    #[test]
    fn top_window_semantics() {
        let log = log_of(&[("1", "a", 1.0), ("1", "a", 5.0), ("1", "a", 10.0), ("2", "b", 90.0)], 100.0);
        let all = baseline_top(&log, 80.0, None).unwrap();
        let recent = baseline_top(&log, 80.0, Some(45.0)).unwrap();
        assert_eq!(all.get(0, 0), 3.0);
        assert_eq!(recent.get(0, 0), 0.0);
        assert_eq!(all.get(1, 1), 0.0);
        let empty = baseline_top(&log, 0.0, None).unwrap();
        assert!(empty.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn buy_it_again_properties() {
        let log = log_of(
            &[("1", "a", 1.0), ("1", "a", 30.0), ("1", "a", 60.0), ("2", "a", 50.0), ("3", "b", 10.0)],
            100.0,
        );
        let s = baseline_buy_it_again(&log, 80.0, 9.0).unwrap();
        // user 3 has no history in a: prior only
        let rho = 4.0 / 3.0 / 80.0;
        let prior_only = 1.0 - (-(1.0 / (80.0 + 1.0 / rho)) * 9.0f64).exp();
        assert!((s.get(2, 0) - prior_only).abs() < 1e-15);
        assert!(s.get(0, 0) > s.get(1, 0) && s.get(1, 0) > s.get(2, 0));
        assert!(s.values.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn mf_objective_never_increases() {
        let mut rows = Vec::new();
        let mut x: u64 = 7;
        for _ in 0..60 {
            let mut row = Vec::new();
            for c in 0..8 {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                if (x >> 60) < 5 {
                    row.push((c, ((x >> 40) % 5 + 1) as f64));
                }
            }
            rows.push(row);
        }
        let snap = CountSnapshot {
            user_ids: (0..60).map(|u| u.to_string()).collect(),
            categories: CategoryIndex::new((0..8).map(|c| c.to_string())),
            at: 1.0,
            rows,
        };
        let m = baseline_mf(&snap, &MfOptions { rank: 4, ..MfOptions::default() }).unwrap();
        assert_eq!(m.objective.len(), 16);
        for w in m.objective.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{w:?}");
        }
    }

    #[test]
    fn mf_full_rank_fits_tiny_matrix() {
        let rows = vec![vec![(0, 2.0), (1, 1.0)], vec![(2, 3.0)], vec![(0, 1.0), (2, 1.0)]];
        let snap = CountSnapshot {
            user_ids: vec!["0".into(), "1".into(), "2".into()],
            categories: CategoryIndex::new(["a", "b", "c"]),
            at: 1.0,
            rows,
        };
        let opts = MfOptions {
            rank: 3,
            iterations: 300,
            regularization: 1e-9,
            seed: 1,
        };
        let m = baseline_mf(&snap, &opts).unwrap();
        assert!(*m.objective.last().unwrap() < 1e-6 * m.objective[0], "{:?}", m.objective.last());
    }

    #[test]
    fn mf_block_structure() {
        // users 0..20 buy categories 0..3, users 20..40 buy categories 3..6
        let rows: Vec<Vec<(usize, f64)>> = (0..40)
            .map(|u| {
                let base = if u < 20 { 0 } else { 3 };
                (base..base + 3).filter(|c| (u + c) % 4 != 0).map(|c| (c, 1.0 + (u % 3) as f64)).collect()
            })
            .collect();
        let snap = CountSnapshot {
            user_ids: (0..40).map(|u| u.to_string()).collect(),
            categories: CategoryIndex::new((0..6).map(|c| c.to_string())),
            at: 1.0,
            rows,
        };
        let m = baseline_mf(&snap, &MfOptions::default()).unwrap();
        let (mut within, mut cross) = (0.0, 0.0);
        for u in 0..40 {
            for c in 0..6 {
                if (u < 20) == (c < 3) {
                    within += m.score(u, c);
                } else {
                    cross += m.score(u, c);
                }
            }
        }
        assert!(within / 120.0 > cross / 120.0);
    }
}
