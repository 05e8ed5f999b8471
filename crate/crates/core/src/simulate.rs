//! Synthetic behavioral logs sampled from a known intensity.
//!
//! Each user is an independent multivariate point process with intensity
//! `λ_c(t) = μ⁰_c + Σ_{c'} β_{c,c'} Σ_{τ < t} κ_{c,c'}(t − τ)`, sampled by
//! thinning against a bound that is recomputed over short lookahead windows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{BehavioralLog, CategoryIndex, Event, UserHistory};
use crate::kernels::KernelBank;
use crate::numeric::derive_seed;
use crate::preprocess::{DEFAULT_RESELLER_THRESHOLD, DEFAULT_RESELLER_WINDOW_DAYS};

/// Ages below this many days are evaluated at this age, which keeps shape < 1
/// kernels bounded.
pub const SIMULATION_AGE_CLAMP: f64 = 1e-3;
/// Width in days of the window over which each thinning bound holds.
pub const LOOKAHEAD_DAYS: f64 = 5.0;
/// A user exceeding this many events is treated as an explosive process.
pub const MAX_EVENTS_PER_USER: usize = 100_000;

/// Parameters of the generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthModel {
    pub categories: CategoryIndex,
    pub base_rates: Vec<f64>,
    /// Row = target category, column = source category. Pairs with zero
    /// weight need no kernel.
    pub network: Vec<Vec<f64>>,
    pub kernels: KernelBank,
    /// Window length T in days.
    pub horizon: f64,
    pub users: usize,
}

impl GroundTruthModel {
    pub fn validate(&self) -> Result<()> {
        let n = self.categories.len();
        if self.base_rates.len() != n || self.network.len() != n || self.network.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension(format!("model with {n} categories has mismatched rates or network")));
        }
        if self.kernels.categories() != &self.categories {
            return Err(Error::Dimension("kernel bank categories differ from the model's".into()));
        }
        if self.base_rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::invalid("base rates must be finite and non-negative"));
        }
        if self.network.iter().flatten().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::invalid("network weights must be finite and non-negative"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("horizon must be positive"));
        }
        for c in 0..n {
            for s in (0..n).filter(|&s| self.network[c][s] > 0.0) {
                let k = self.kernels.get(c, s)?;
                k.validate()?;
                if !k.sup_on(0.0, self.horizon, SIMULATION_AGE_CLAMP).is_finite() {
                    return Err(Error::NonFinite(format!(
                        "kernel ({}, {}) is unbounded on the horizon",
                        self.categories.id(c),
                        self.categories.id(s)
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn read_json<R: std::io::Read>(reader: R) -> Result<Self> {
        let model: Self = serde_json::from_reader(reader)?;
        model.validate()?;
        Ok(model)
    }

    pub fn write_json<W: std::io::Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }
}

struct Sampler<'a> {
    model: &'a GroundTruthModel,
    mu_total: f64,
}

impl Sampler<'_> {
    fn kernel_sum<F>(&self, history: &[(f64, usize)], target: usize, mut term: F) -> f64
    where
        F: FnMut(f64, &crate::kernels::KernelParams) -> f64,
    {
        let mut v = 0.0;
        for &(tau, src) in history {
            let beta = self.model.network[target][src];
            if beta > 0.0 {
                v += beta * term(tau, self.model.kernels.get(target, src).expect("validated"));
            }
        }
        v
    }

    fn bound(&self, history: &[(f64, usize)], from: f64, to: f64) -> f64 {
        let mut b = self.mu_total;
        for c in 0..self.model.num_categories() {
            b += self.kernel_sum(history, c, |tau, k| k.sup_on(from - tau, to - tau, SIMULATION_AGE_CLAMP));
        }
        b
    }

    fn intensities(&self, history: &[(f64, usize)], t: f64, out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.model.base_rates[c]
                + self.kernel_sum(history, c, |tau, k| k.level((t - tau).max(SIMULATION_AGE_CLAMP), SIMULATION_AGE_CLAMP));
        }
    }

    fn user(&self, rng: &mut ChaCha8Rng) -> Result<Vec<(f64, usize)>> {
        let n = self.model.num_categories();
        let horizon = self.model.horizon;
        let mut history: Vec<(f64, usize)> = Vec::new();
        let mut lambda = vec![0.0; n];
        let mut t = 0.0;
        while t < horizon {
            let end = (t + LOOKAHEAD_DAYS).min(horizon);
            let bound = self.bound(&history, t, end);
            if !bound.is_finite() {
                return Err(Error::NonFinite(format!("thinning bound {bound} at t = {t}")));
            }
            if bound <= 0.0 {
                t = end;
                continue;
            }
            let wait: f64 = rng.sample::<f64, _>(Exp1) / bound;
            if t + wait >= end {
                t = end;
                continue;
            }
            t += wait;
            self.intensities(&history, t, &mut lambda);
            let total: f64 = lambda.iter().sum();
            if total > bound * (1.0 + 1e-9) {
                return Err(Error::NonFinite(format!(
                    "intensity {total} exceeds thinning bound {bound} at t = {t}"
                )));
            }
            let u: f64 = rng.random::<f64>() * bound;
            if u < total {
                let mut acc = 0.0;
                let mut pick = n - 1;
                for (c, l) in lambda.iter().enumerate() {
                    acc += l;
                    if u < acc {
                        pick = c;
                        break;
                    }
                }
                history.push((t, pick));
                if history.len() > MAX_EVENTS_PER_USER {
                    return Err(Error::NonFinite(format!(
                        "more than {MAX_EVENTS_PER_USER} events for one user; the process is explosive"
                    )));
                }
            }
        }
        Ok(history)
    }
}

/// Samples `model.users` independent users. User `i` is named `"i"` and
/// draws from its own stream seeded by `(seed, i)`.
pub fn simulate_logs(model: &GroundTruthModel, seed: u64) -> Result<BehavioralLog> {
    model.validate()?;
    let sampler = Sampler {
        model,
        mu_total: model.base_rates.iter().sum(),
    };
    let users = (0..model.users)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let history = sampler.user(&mut rng)?;
            Ok(UserHistory {
                id: i.to_string(),
                events: history
                    .into_iter()
                    .map(|(timestamp, category)| Event {
                        timestamp,
                        category,
                        item_id: None,
                        price: None,
                        promo: false,
                    })
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BehavioralLog::from_histories(users, model.categories.clone(), model.horizon))
}

/// Purchases per synthetic re-seller, all in one category.
pub const RESELLER_BURST_SIZE: usize = DEFAULT_RESELLER_THRESHOLD + 2;
/// Span in days of a re-seller burst.
pub const RESELLER_BURST_DAYS: f64 = DEFAULT_RESELLER_WINDOW_DAYS - 2.0;

/// Marks each existing purchase promotional with probability `promo_rate`
/// and adds `reseller_count` users named `reseller-<i>`, each with a burst of
/// [`RESELLER_BURST_SIZE`] non-promotional purchases in one category within
/// [`RESELLER_BURST_DAYS`].
pub fn inject_noise(log: &BehavioralLog, promo_rate: f64, reseller_count: usize, seed: u64) -> Result<BehavioralLog> {
    if !(0.0..=1.0).contains(&promo_rate) {
        return Err(Error::invalid(format!("promo rate {promo_rate} outside [0, 1]")));
    }
    if reseller_count > 0 && (log.num_categories() == 0 || !(log.window() > 0.0)) {
        return Err(Error::invalid("re-sellers need at least one category and a positive window"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut users: Vec<UserHistory> = log.users().to_vec();
    if promo_rate > 0.0 {
        for u in &mut users {
            for e in &mut u.events {
                if rng.random::<f64>() < promo_rate {
                    e.promo = true;
                }
            }
        }
    }
    let window = log.window();
    let span = RESELLER_BURST_DAYS.min(window);
    for i in 0..reseller_count {
        let id = format!("reseller-{i}");
        if log.user_index(&id).is_some() {
            return Err(Error::invalid(format!("user `{id}` already exists")));
        }
        let category = rng.random_range(0..log.num_categories());
        let start = rng.random::<f64>() * (window - span);
        let mut times: Vec<f64> = (0..RESELLER_BURST_SIZE)
            .map(|_| start + rng.random::<f64>() * span)
            .collect();
        times.sort_by(f64::total_cmp);
        users.push(UserHistory {
            id,
            events: times
                .into_iter()
                .map(|timestamp| Event {
                    timestamp: timestamp.min(window * (1.0 - f64::EPSILON)),
                    category,
                    item_id: None,
                    price: None,
                    promo: false,
                })
                .collect(),
        });
    }
    Ok(BehavioralLog::from_histories(users, log.categories().clone(), window))
}
