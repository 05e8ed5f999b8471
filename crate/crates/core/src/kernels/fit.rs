//! Maximum-likelihood Weibull fits and EM for Weibull mixtures.
//!
//! The Weibull MLE profiles the scale out and solves the score equation in
//! the shape,
//!
//! ```text
//! g(k) = Σ wᵢ xᵢᵏ ln xᵢ / Σ wᵢ xᵢᵏ − 1/k − Σ wᵢ ln xᵢ / Σ wᵢ = 0,
//! λ = (Σ wᵢ xᵢᵏ / Σ wᵢ)^(1/k),
//! ```
//!
//! with a bracketed Newton iteration. `g` is strictly increasing, so the root
//! is unique whenever the samples are not all equal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{weibull_ln_pdf, KernelParams, MowComponent};
use crate::error::{Error, Result};
use crate::numeric::{quantile_sorted, CompensatedSum};

pub const WEIBULL_TOLERANCE: f64 = 1e-8;
pub const WEIBULL_MAX_ITERATIONS: usize = 200;
pub const EM_TOLERANCE: f64 = 1e-8;
pub const EM_MAX_ITERATIONS: usize = 500;
/// Components whose mean responsibility drops below this are pruned.
pub const PRUNE_MASS: f64 = 1e-6;
const EM_RESTARTS: usize = 3;
const EM_INIT_SHAPE: f64 = 4.0;
const EM_JITTER: f64 = 0.05;
const SHAPE_MIN: f64 = 1e-3;
const SHAPE_MAX: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeibullFit {
    pub scale: f64,
    pub shape: f64,
    pub loglik: f64,
    pub iterations: usize,
}

impl WeibullFit {
    pub fn params(&self) -> KernelParams {
        KernelParams::weibull(self.scale, self.shape)
    }
}

/// Log-likelihood of samples under a Weibull density.
pub fn weibull_loglik(scale: f64, shape: f64, samples: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for &x in samples {
        acc.add(weibull_ln_pdf(x.ln(), scale, shape));
    }
    acc.value()
}

struct ShapeSolve {
    scale: f64,
    shape: f64,
    iterations: usize,
}

/// Score `g(k)` and its derivative for log-samples `ln_x` with weights.
fn score(ln_y: &[f64], ln_w: &[f64], mean_ln_y: f64, k: f64) -> (f64, f64, f64) {
    let zmax = ln_y
        .iter()
        .zip(ln_w)
        .map(|(&ly, &lw)| lw + k * ly)
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (&ly, &lw) in ln_y.iter().zip(ln_w) {
        let e = (lw + k * ly - zmax).exp();
        s0 += e;
        s1 += e * ly;
        s2 += e * ly * ly;
    }
    let a = s1 / s0;
    let var = (s2 / s0 - a * a).max(0.0);
    let g = a - 1.0 / k - mean_ln_y;
    // log of Σ wᵢ yᵢᵏ, for the scale
    let ln_s0 = zmax + s0.ln();
    (g, var + 1.0 / (k * k), ln_s0)
}

/// Weighted Weibull MLE. Returns `None` when the weighted samples carry no
/// spread (all mass on one value) or no mass at all.
fn solve_shape(ln_x: &[f64], weights: &[f64], init_shape: f64, tol: f64, max_iter: usize) -> Option<ShapeSolve> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let ln_m = ln_x
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let ln_lo = ln_x
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&l, _)| l)
        .fold(f64::INFINITY, f64::min);
    if ln_m - ln_lo < 1e-12 {
        return None;
    }
    let ln_y: Vec<f64> = ln_x.iter().map(|&l| l - ln_m).collect();
    let ln_w: Vec<f64> = weights.iter().map(|&w| w.ln()).collect();
    let mean_ln_y = ln_y.iter().zip(weights).map(|(&l, &w)| l * w).sum::<f64>() / total;
    let g = |k: f64| score(&ln_y, &ln_w, mean_ln_y, k);

    let mut k = init_shape.clamp(SHAPE_MIN, SHAPE_MAX);
    let (mut lo, mut hi) = (k, k);
    while g(lo).0 > 0.0 && lo > SHAPE_MIN {
        lo = (lo * 0.5).max(SHAPE_MIN);
    }
    while g(hi).0 < 0.0 && hi < SHAPE_MAX {
        hi = (hi * 2.0).min(SHAPE_MAX);
    }
    let mut iterations = 0;
    let mut ln_s0;
    loop {
        iterations += 1;
        let (gv, dg, s) = g(k);
        ln_s0 = s;
        if gv < 0.0 {
            lo = k;
        } else {
            hi = k;
        }
        let mut next = k - gv / dg;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let rel = ((next - k) / k).abs();
        k = next;
        if rel < tol || iterations >= max_iter || hi - lo <= tol * k {
            break;
        }
    }
    let (_, _, s) = g(k);
    if s.is_finite() {
        ln_s0 = s;
    }
    let ln_scale = ln_m + (ln_s0 - total.ln()) / k;
    Some(ShapeSolve {
        scale: ln_scale.exp(),
        shape: k,
        iterations,
    })
}

/// Rough moment-based starting shape (`1.2 / sd(ln x)`).
fn initial_shape(ln_x: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    let mean = ln_x.iter().zip(weights).map(|(&l, &w)| l * w).sum::<f64>() / total;
    let var = ln_x
        .iter()
        .zip(weights)
        .map(|(&l, &w)| w * (l - mean).powi(2))
        .sum::<f64>()
        / total;
    if var > 0.0 {
        (1.2 / var.sqrt()).clamp(0.05, 100.0)
    } else {
        1.0
    }
}

fn check_positive(samples: &[f64]) -> Result<()> {
    if let Some(bad) = samples.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::invalid(format!("samples must be positive and finite, got {bad}")));
    }
    Ok(())
}

fn degenerate(samples: &[f64], reason: &str) -> Error {
    let scale = if samples.is_empty() {
        1.0
    } else {
        samples.iter().sum::<f64>() / samples.len() as f64
    };
    Error::FitDegenerate {
        reason: reason.to_string(),
        fallback: KernelParams::weibull(scale, 1.0),
    }
}

/// Maximum-likelihood Weibull fit.
pub fn fit_weibull(samples: &[f64]) -> Result<WeibullFit> {
    fit_weibull_weighted(samples, None)
}

/// Weighted maximum-likelihood Weibull fit (`weights = None` for unit weights).
pub fn fit_weibull_weighted(samples: &[f64], weights: Option<&[f64]>) -> Result<WeibullFit> {
    check_positive(samples)?;
    if samples.len() < 2 {
        return Err(degenerate(samples, "fewer than 2 samples"));
    }
    let ones;
    let weights = match weights {
        Some(w) => {
            if w.len() != samples.len() {
                return Err(Error::Dimension("weights and samples differ in length".into()));
            }
            w
        }
        None => {
            ones = vec![1.0; samples.len()];
            &ones
        }
    };
    let ln_x: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
    let init = initial_shape(&ln_x, weights);
    let solved = solve_shape(&ln_x, weights, init, WEIBULL_TOLERANCE, WEIBULL_MAX_ITERATIONS)
        .ok_or_else(|| degenerate(samples, "all samples identical"))?;
    Ok(WeibullFit {
        scale: solved.scale,
        shape: solved.shape,
        loglik: weibull_loglik(solved.scale, solved.shape, samples),
        iterations: solved.iterations,
    })
}

/// Mixture log-likelihood `Σ log Σᵢ bᵢ·pdf(x; λᵢ, kᵢ)`; weights must sum to 1.
pub fn mow_loglik(params: &KernelParams, samples: &[f64]) -> Result<f64> {
    let comps: Vec<MowComponent> = match params {
        KernelParams::Mow { components } => components.clone(),
        KernelParams::Weibull { scale, shape } => vec![MowComponent {
            scale: *scale,
            shape: *shape,
            weight: 1.0,
        }],
        KernelParams::Exponential { .. } => {
            return Err(Error::invalid("exponential kernel is not a mixture"));
        }
    };
    params.validate()?;
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
    }
    check_positive(samples)?;
    let ln_x: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
    Ok(mixture_loglik(&comps, &ln_x))
}

fn mixture_loglik(comps: &[MowComponent], ln_x: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    let mut terms = vec![0.0; comps.len()];
    for &lx in ln_x {
        acc.add(log_mixture_density(comps, lx, &mut terms));
    }
    acc.value()
}

/// `log Σ bᵢ pdfᵢ(x)`; leaves the per-component log terms in `terms`.
#[inline]
fn log_mixture_density(comps: &[MowComponent], ln_x: f64, terms: &mut [f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (t, c) in terms.iter_mut().zip(comps) {
        *t = if c.weight > 0.0 {
            c.weight.ln() + weibull_ln_pdf(ln_x, c.scale, c.shape)
        } else {
            f64::NEG_INFINITY
        };
        max = max.max(*t);
    }
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MowFit {
    /// Fitted mixture; weights sum to 1.
    pub params: KernelParams,
    pub loglik: f64,
    /// Log-likelihood after initialization and after every EM iteration of
    /// the winning restart.
    pub trace: Vec<f64>,
    /// Trace indices at which a component was pruned; the likelihood is only
    /// monotone between consecutive prune points.
    pub prune_points: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub pruned: usize,
}

impl MowFit {
    /// Largest one-step decrease of the trace, ignoring prune boundaries.
    pub fn worst_decrease(&self) -> f64 {
        self.trace
            .windows(2)
            .enumerate()
            .filter(|(i, _)| !self.prune_points.contains(&(i + 1)))
            .map(|(_, w)| w[0] - w[1])
            .fold(0.0, f64::max)
    }
}

/// Fits a `components`-component Weibull mixture by EM.
///
/// Each restart starts from shapes 4, scales at the `(K+1)`-quantiles of the
/// samples and equal weights; restarts after the first jitter the scales by
/// up to ±5%. The restart with the best final log-likelihood is returned.
pub fn fit_mow(samples: &[f64], components: usize, seed: u64) -> Result<MowFit> {
    if components == 0 {
        return Err(Error::invalid("mixture needs at least one component"));
    }
    check_positive(samples)?;
    if samples.len() < components {
        return Err(Error::TooFewSamples {
            samples: samples.len(),
            components,
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[sorted.len() - 1] - sorted[0] <= 1e-12 * sorted[0] {
        return Err(degenerate(samples, "all samples identical"));
    }
    let ln_x: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<MowFit> = None;
    for restart in 0..EM_RESTARTS {
        let init: Vec<MowComponent> = (1..=components)
            .map(|i| {
                let q = quantile_sorted(&sorted, i as f64 / (components + 1) as f64);
                let jitter = if restart == 0 {
                    1.0
                } else {
                    1.0 + rng.random_range(-EM_JITTER..=EM_JITTER)
                };
                MowComponent {
                    scale: q * jitter,
                    shape: EM_INIT_SHAPE,
                    weight: 1.0 / components as f64,
                }
            })
            .collect();
        let fit = run_em(init, &ln_x);
        if best.as_ref().is_none_or(|b| fit.loglik > b.loglik) {
            best = Some(fit);
        }
    }
    let best = best.expect("at least one restart");
    if best.pruned > 0 {
        log::warn!("mixture fit pruned {} collapsed components", best.pruned);
    }
    Ok(best)
}

fn run_em(mut comps: Vec<MowComponent>, ln_x: &[f64]) -> MowFit {
    let n = ln_x.len();
    let mut resp = vec![vec![0.0; n]; comps.len()];
    let mut terms = vec![0.0; comps.len()];
    let mut ll = mixture_loglik(&comps, ln_x);
    let mut trace = vec![ll];
    let mut prune_points = Vec::new();
    let mut pruned = 0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < EM_MAX_ITERATIONS {
        iterations += 1;
        // E-step
        for (i, &lx) in ln_x.iter().enumerate() {
            let lse = log_mixture_density(&comps, lx, &mut terms);
            for (j, t) in terms.iter().enumerate() {
                resp[j][i] = (t - lse).exp();
            }
        }
        // M-step: weights
        let mass: Vec<f64> = resp.iter().map(|r| r.iter().sum::<f64>()).collect();
        let keep: Vec<bool> = mass.iter().map(|&m| m / n as f64 >= PRUNE_MASS).collect();
        let dropped = keep.iter().filter(|k| !**k).count();
        if dropped > 0 && dropped < comps.len() {
            let mut idx = 0;
            comps.retain(|_| {
                idx += 1;
                keep[idx - 1]
            });
            let mut idx = 0;
            resp.retain(|_| {
                idx += 1;
                keep[idx - 1]
            });
            terms.truncate(comps.len());
            pruned += dropped;
            let total: f64 = comps.iter().map(|c| c.weight).sum();
            for c in &mut comps {
                c.weight /= total;
            }
            ll = mixture_loglik(&comps, ln_x);
            trace.push(ll);
            prune_points.push(trace.len() - 1);
            continue;
        }
        let total_mass: f64 = mass.iter().sum();
        for (c, m) in comps.iter_mut().zip(&mass) {
            c.weight = m / total_mass;
        }
        // M-step: per-component weighted Weibull MLE, warm-started
        for (c, r) in comps.iter_mut().zip(&resp) {
            if let Some(s) = solve_shape(ln_x, r, c.shape, 1e-12, WEIBULL_MAX_ITERATIONS) {
                if s.scale.is_finite() && s.shape.is_finite() {
                    c.scale = s.scale;
                    c.shape = s.shape;
                }
            }
        }
        let next = mixture_loglik(&comps, ln_x);
        trace.push(next);
        let improvement = next - ll;
        ll = next;
        if improvement < EM_TOLERANCE {
            converged = true;
            break;
        }
    }
    MowFit {
        params: KernelParams::Mow { components: comps },
        loglik: ll,
        trace,
        prune_points,
        iterations,
        converged,
        pruned,
    }
}
