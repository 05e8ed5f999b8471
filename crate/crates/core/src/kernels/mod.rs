//! Triggering kernels: parametric families, evaluation, quantization onto a
//! time grid, and the per-category-pair kernel bank.

mod fit;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::CategoryIndex;
use crate::numeric::ln_gamma;

pub use fit::{
    fit_mow, fit_weibull, fit_weibull_weighted, mow_loglik, weibull_loglik, MowFit, WeibullFit,
    EM_MAX_ITERATIONS, EM_TOLERANCE, PRUNE_MASS,
};

/// Age substituted for 0 when a shape < 1 Weibull would diverge, as a
/// fraction of the grid grain.
pub const AGE_ZERO_CLAMP_FRACTION: f64 = 1e-3;

/// Weibull density with scale `scale` and shape `shape`.
#[inline]
pub fn weibull_pdf(x: f64, scale: f64, shape: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if x == 0.0 {
        return match shape.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Greater) => 0.0,
            Some(std::cmp::Ordering::Equal) => 1.0 / scale,
            _ => f64::INFINITY,
        };
    }
    let z = x / scale;
    (shape / scale) * z.powf(shape - 1.0) * (-z.powf(shape)).exp()
}

/// Log of [`weibull_pdf`] for `x > 0`.
#[inline]
pub fn weibull_ln_pdf(ln_x: f64, scale: f64, shape: f64) -> f64 {
    let lz = ln_x - scale.ln();
    shape.ln() - scale.ln() + (shape - 1.0) * lz - (shape * lz).exp()
}

/// Mode of a Weibull density (0 when shape ≤ 1).
pub fn weibull_mode(scale: f64, shape: f64) -> f64 {
    if shape > 1.0 {
        scale * ((shape - 1.0) / shape).powf(1.0 / shape)
    } else {
        0.0
    }
}

pub fn weibull_mean(scale: f64, shape: f64) -> f64 {
    scale * ln_gamma(1.0 + 1.0 / shape).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MowComponent {
    pub scale: f64,
    pub shape: f64,
    pub weight: f64,
}

/// Triggering-kernel parameters. Ages and scales are in days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum KernelParams {
    /// `exp(−age/ω)`
    Exponential { omega: f64 },
    /// Weibull density with scale λ and shape k.
    Weibull { scale: f64, shape: f64 },
    /// Conic combination `Σ bᵢ·Weibull(λᵢ, kᵢ)`.
    Mow { components: Vec<MowComponent> },
}

impl KernelParams {
    pub fn weibull(scale: f64, shape: f64) -> Self {
        KernelParams::Weibull { scale, shape }
    }

    /// Mixture from `(scale, shape, weight)` triples.
    pub fn mow(components: &[(f64, f64, f64)]) -> Self {
        KernelParams::Mow {
            components: components
                .iter()
                .map(|&(scale, shape, weight)| MowComponent { scale, shape, weight })
                .collect(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            KernelParams::Exponential { .. } => "exponential",
            KernelParams::Weibull { .. } => "weibull",
            KernelParams::Mow { .. } => "mow",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match self {
            KernelParams::Exponential { omega } => positive(*omega, "omega"),
            KernelParams::Weibull { scale, shape } => {
                positive(*scale, "scale")?;
                positive(*shape, "shape")
            }
            KernelParams::Mow { components } => {
                if components.is_empty() {
                    return Err(Error::invalid("mixture needs at least one component"));
                }
                for c in components {
                    positive(c.scale, "scale")?;
                    positive(c.shape, "shape")?;
                    if !(c.weight >= 0.0 && c.weight.is_finite()) {
                        return Err(Error::invalid(format!("weight must be non-negative, got {}", c.weight)));
                    }
                }
                Ok(())
            }
        }
    }

    /// Kernel level at `age`, with the default age-zero clamp of a one-day grid.
    pub fn eval(&self, age: f64) -> Result<f64> {
        self.eval_clamped(age, AGE_ZERO_CLAMP_FRACTION)
    }

    /// Kernel level at `age`. A Weibull with shape < 1 evaluated at exactly
    /// age 0 returns its value at `clamp_age` instead of diverging.
    pub fn eval_clamped(&self, age: f64, clamp_age: f64) -> Result<f64> {
        if !(age >= 0.0) {
            return Err(Error::invalid(format!("kernel age must be non-negative, got {age}")));
        }
        Ok(self.level(age, clamp_age))
    }

    #[inline]
    pub(crate) fn level(&self, age: f64, clamp_age: f64) -> f64 {
        let weibull = |scale: f64, shape: f64| {
            let a = if age == 0.0 && shape < 1.0 { clamp_age } else { age };
            weibull_pdf(a, scale, shape)
        };
        match self {
            KernelParams::Exponential { omega } => (-age / omega).exp(),
            KernelParams::Weibull { scale, shape } => weibull(*scale, *shape),
            KernelParams::Mow { components } => components
                .iter()
                .filter(|c| c.weight > 0.0)
                .map(|c| c.weight * weibull(c.scale, c.shape))
                .sum(),
        }
    }

    /// An upper bound of the kernel over ages in `[from, to]`, exact for the
    /// single-component families. Ages below `clamp_age` are treated as
    /// `clamp_age` for divergent shapes.
    pub fn sup_on(&self, from: f64, to: f64, clamp_age: f64) -> f64 {
        let from = from.max(0.0);
        let to = to.max(from);
        let weibull_sup = |scale: f64, shape: f64| {
            if shape < 1.0 {
                weibull_pdf(from.max(clamp_age), scale, shape)
            } else {
                weibull_pdf(weibull_mode(scale, shape).clamp(from, to), scale, shape)
            }
        };
        match self {
            KernelParams::Exponential { omega } => (-from / omega).exp(),
            KernelParams::Weibull { scale, shape } => weibull_sup(*scale, *shape),
            KernelParams::Mow { components } => components
                .iter()
                .map(|c| c.weight * weibull_sup(c.scale, c.shape))
                .sum(),
        }
    }

    /// Mixture weights summed; 1 for the single-component families.
    pub fn total_weight(&self) -> f64 {
        match self {
            KernelParams::Mow { components } => components.iter().map(|c| c.weight).sum(),
            _ => 1.0,
        }
    }
}

/// Piecewise-constant kernel on a grid: `levels[s] = κ(s·grain)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantizedKernel {
    pub levels: Vec<f64>,
    pub grain: f64,
    pub source: KernelParams,
}

impl QuantizedKernel {
    /// Level of the staircase at a continuous age.
    pub fn at(&self, age: f64) -> f64 {
        let s = (age / self.grain).floor();
        if s < 0.0 || s >= self.levels.len() as f64 {
            0.0
        } else {
            self.levels[s as usize]
        }
    }
}

pub fn quantize_kernel(params: &KernelParams, grain: f64, cells: usize) -> Result<QuantizedKernel> {
    if !(grain > 0.0 && grain.is_finite()) {
        return Err(Error::invalid(format!("grain {grain} must be positive")));
    }
    if cells == 0 {
        return Err(Error::invalid("quantized kernel needs at least one cell"));
    }
    params.validate()?;
    let clamp = grain * AGE_ZERO_CLAMP_FRACTION;
    let levels = (0..cells)
        .map(|s| params.eval_clamped(s as f64 * grain, clamp))
        .collect::<Result<Vec<_>>>()?;
    if let Some(bad) = levels.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("quantized kernel level {bad}")));
    }
    Ok(QuantizedKernel {
        levels,
        grain,
        source: params.clone(),
    })
}

/// Where a bank entry came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Fitted to this pair's own samples.
    Fitted,
    /// Too few samples; borrowed from the pooled / median prior.
    Prior,
    /// No usable data anywhere; built-in default kernel.
    Default,
    /// Supplied directly (ground-truth models, hand-written banks).
    Given,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub params: KernelParams,
    pub provenance: Provenance,
    pub samples: usize,
}

/// One kernel per ordered category pair `(target c, source c')`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    categories: CategoryIndex,
    entries: Vec<Option<BankEntry>>,
}

#[derive(Serialize, Deserialize)]
struct WireEntry {
    pair: [String; 2],
    #[serde(flatten)]
    params: KernelParams,
    #[serde(default = "given")]
    provenance: Provenance,
    #[serde(default)]
    samples: usize,
}

fn given() -> Provenance {
    Provenance::Given
}

#[derive(Serialize, Deserialize)]
struct WireBank {
    categories: CategoryIndex,
    kernels: Vec<WireEntry>,
}

impl KernelBank {
    pub fn new(categories: CategoryIndex) -> Self {
        let n = categories.len();
        Self {
            categories,
            entries: vec![None; n * n],
        }
    }

    /// A bank with the same kernel for every pair.
    pub fn uniform(categories: CategoryIndex, params: KernelParams) -> Self {
        let n = categories.len();
        let mut bank = Self::new(categories);
        for c in 0..n {
            for s in 0..n {
                bank.set(c, s, params.clone(), Provenance::Given, 0);
            }
        }
        bank
    }

    pub fn categories(&self) -> &CategoryIndex {
        &self.categories
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn set(&mut self, target: usize, source: usize, params: KernelParams, provenance: Provenance, samples: usize) {
        let n = self.num_categories();
        self.entries[target * n + source] = Some(BankEntry {
            params,
            provenance,
            samples,
        });
    }

    pub fn entry(&self, target: usize, source: usize) -> Option<&BankEntry> {
        let n = self.num_categories();
        self.entries.get(target * n + source).and_then(Option::as_ref)
    }

    /// Kernel for `(target, source)`, or an error naming the missing pair.
    pub fn get(&self, target: usize, source: usize) -> Result<&KernelParams> {
        self.entry(target, source)
            .map(|e| &e.params)
            .ok_or_else(|| Error::MissingKernel {
                target: self.categories.id(target).to_string(),
                source_category: self.categories.id(source).to_string(),
            })
    }

    pub fn len(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_complete(&self) -> bool {
        self.entries.iter().all(Option::is_some)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &BankEntry)> {
        let n = self.num_categories();
        self.entries
            .iter()
            .enumerate()
            .filter_map(move |(i, e)| e.as_ref().map(|e| (i / n, i % n, e)))
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &self.to_wire())?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let wire: WireBank = serde_json::from_reader(reader)?;
        Self::from_wire(wire)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self.to_wire()).expect("bank serializes")
    }

    pub fn from_json_value(v: serde_json::Value) -> Result<Self> {
        Self::from_wire(serde_json::from_value(v)?)
    }

    fn to_wire(&self) -> WireBank {
        WireBank {
            categories: self.categories.clone(),
            kernels: self
                .iter()
                .map(|(c, s, e)| WireEntry {
                    pair: [
                        self.categories.id(c).to_string(),
                        self.categories.id(s).to_string(),
                    ],
                    params: e.params.clone(),
                    provenance: e.provenance,
                    samples: e.samples,
                })
                .collect(),
        }
    }

    fn from_wire(wire: WireBank) -> Result<Self> {
        let mut bank = Self::new(wire.categories);
        for e in wire.kernels {
            e.params.validate()?;
            let idx = |id: &str| {
                bank.categories
                    .index_of(id)
                    .ok_or_else(|| Error::UnknownCategory(id.to_string()))
            };
            let (c, s) = (idx(&e.pair[0])?, idx(&e.pair[1])?);
            bank.set(c, s, e.params, e.provenance, e.samples);
        }
        Ok(bank)
    }
}

impl Serialize for KernelBank {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_wire().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for KernelBank {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let wire = WireBank::deserialize(deserializer)?;
        Self::from_wire(wire).map_err(serde::de::Error::custom)
    }
}
