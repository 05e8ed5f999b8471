//! Configuration and orchestration of the full estimate → infer → rank flow.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{
    estimate_base_intensity, estimate_kernels, estimate_network_mkv, lift_network, BaseIntensities,
    KernelEstimationOptions, LatentNetwork, NetworkEstimator, DEFAULT_ALPHA_S, DEFAULT_BETA_S, DEFAULT_COMPONENTS,
    DEFAULT_MIN_SAMPLES,
};
use crate::evaluate::{
    Method, MfOptions, DEFAULT_REACH_MULTIPLIERS, DEFAULT_SEGMENTS, DEFAULT_SEGMENT_DAYS, DEFAULT_TEST_DAYS,
};
use crate::events::{BehavioralLog, CategoryIndex};
use crate::inference::{
    build_precompute, infer_for_log, IntensityMatrix, PrecomputeBank, DEFAULT_GRAIN_DAYS, DEFAULT_HORIZON_DAYS,
};
use crate::kernels::KernelBank;
use crate::preprocess::{
    all_matchings, filter_promotions, filter_resellers, MatchingSet, DEFAULT_ATTRIBUTION_WINDOW_DAYS,
    DEFAULT_RESELLER_THRESHOLD, DEFAULT_RESELLER_WINDOW_DAYS,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub events: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub grain_days: f64,
    pub horizon_days: f64,
    /// δ: length of the window a ranking predicts purchases for.
    pub prediction_window_days: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            grain_days: DEFAULT_GRAIN_DAYS,
            horizon_days: DEFAULT_HORIZON_DAYS,
            prediction_window_days: DEFAULT_SEGMENT_DAYS,
        }
    }
}

impl GridConfig {
    /// Cells of the history horizon, `round(horizon / grain)`.
    pub fn cells(&self) -> usize {
        (self.horizon_days / self.grain_days).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub promotions: bool,
    pub reseller_threshold: usize,
    pub reseller_window_days: f64,
    pub attribution_window_days: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            promotions: true,
            reseller_threshold: DEFAULT_RESELLER_THRESHOLD,
            reseller_window_days: DEFAULT_RESELLER_WINDOW_DAYS,
            attribution_window_days: DEFAULT_ATTRIBUTION_WINDOW_DAYS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub estimator: NetworkEstimator,
    pub alpha: f64,
    pub beta: f64,
    /// LMKV value for categories without purchases; defaults to the largest
    /// lifted entry.
    pub zero_count_cap: Option<f64>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            estimator: NetworkEstimator::Lmkv,
            alpha: DEFAULT_ALPHA_S,
            beta: DEFAULT_BETA_S,
            zero_count_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub components: usize,
    pub min_samples: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            components: DEFAULT_COMPONENTS,
            min_samples: DEFAULT_MIN_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub test_days: f64,
    pub segments: usize,
    pub reach_multipliers: Vec<u32>,
    pub mf_rank: usize,
    pub mf_iterations: usize,
    pub mf_regularization: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        let mf = MfOptions::default();
        Self {
            test_days: DEFAULT_TEST_DAYS,
            segments: DEFAULT_SEGMENTS,
            reach_multipliers: DEFAULT_REACH_MULTIPLIERS.to_vec(),
            mf_rank: mf.rank,
            mf_iterations: mf.iterations,
            mf_regularization: mf.regularization,
        }
    }
}

/// Every tunable of the pipeline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub grid: GridConfig,
    pub filters: FilterConfig,
    pub network: NetworkConfig,
    pub kernels: KernelConfig,
    pub evaluation: EvaluationConfig,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        positive("grid.grain_days", self.grid.grain_days)?;
        positive("grid.horizon_days", self.grid.horizon_days)?;
        positive("grid.prediction_window_days", self.grid.prediction_window_days)?;
        if self.grid.cells() == 0 {
            return Err(Error::invalid("grid.horizon_days must cover at least one cell"));
        }
        if self.filters.reseller_threshold == 0 {
            return Err(Error::invalid("filters.reseller_threshold must be at least 1"));
        }
        positive("filters.reseller_window_days", self.filters.reseller_window_days)?;
        positive("filters.attribution_window_days", self.filters.attribution_window_days)?;
        positive("network.alpha", self.network.alpha)?;
        positive("network.beta", self.network.beta)?;
        if let Some(cap) = self.network.zero_count_cap {
            if !(cap >= 0.0 && cap.is_finite()) {
                return Err(Error::invalid("network.zero_count_cap must be finite and non-negative"));
            }
        }
        if self.kernels.components == 0 {
            return Err(Error::invalid("kernels.components must be at least 1"));
        }
        positive("evaluation.test_days", self.evaluation.test_days)?;
        if self.evaluation.segments == 0 {
            return Err(Error::invalid("evaluation.segments must be at least 1"));
        }
        if self.evaluation.reach_multipliers.is_empty() || self.evaluation.reach_multipliers.contains(&0) {
            return Err(Error::invalid("evaluation.reach_multipliers must be non-empty and positive"));
        }
        if self.evaluation.mf_rank == 0 {
            return Err(Error::invalid("evaluation.mf_rank must be at least 1"));
        }
        positive("evaluation.mf_regularization", self.evaluation.mf_regularization)?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn mf_options(&self) -> MfOptions {
        MfOptions {
            rank: self.evaluation.mf_rank,
            iterations: self.evaluation.mf_iterations,
            regularization: self.evaluation.mf_regularization,
            seed: self.seed,
        }
    }

    pub fn kernel_options(&self) -> KernelEstimationOptions {
        KernelEstimationOptions {
            components: self.kernels.components,
            min_samples: self.kernels.min_samples,
            seed: self.seed,
        }
    }
}

/// What pre-processing removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub events_in: usize,
    pub promotions_removed: usize,
    pub resellers: BTreeSet<String>,
    pub events_out: usize,
}

/// Promotion filter (when enabled), then the re-seller filter.
pub fn preprocess_log(log: &BehavioralLog, config: &PipelineConfig) -> Result<(BehavioralLog, PreprocessReport)> {
    let events_in = log.num_events();
    let organic = if config.filters.promotions {
        filter_promotions(log)
    } else {
        log.clone()
    };
    let promotions_removed = events_in - organic.num_events();
    let (clean, resellers) = filter_resellers(
        &organic,
        config.filters.reseller_threshold,
        config.filters.reseller_window_days,
    )?;
    let report = PreprocessReport {
        events_in,
        promotions_removed,
        resellers,
        events_out: clean.num_events(),
    };
    Ok((clean, report))
}

/// Everything needed to score users: μ⁰, the latent network, the kernel bank
/// and the inference grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub categories: CategoryIndex,
    pub window: f64,
    pub grain_days: f64,
    pub cells: usize,
    pub base: BaseIntensities,
    pub network: LatentNetwork,
    pub kernels: KernelBank,
    pub preprocess: PreprocessReport,
    pub matched_pairs: usize,
}

impl ModelArtifact {
    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }

    pub fn precompute(&self) -> Result<PrecomputeBank> {
        build_precompute(&self.network, &self.kernels, self.grain_days, self.cells)
    }
}

/// Estimated model together with the pre-processed log it was fitted on.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub model: ModelArtifact,
    pub log: BehavioralLog,
    pub matchings: MatchingSet,
}

/// Pre-processing, attribution matching, base intensities, kernels and the
/// latent network.
pub fn estimate_model(log: &BehavioralLog, config: &PipelineConfig) -> Result<Estimate> {
    config.validate()?;
    let (clean, preprocess) = preprocess_log(log, config)?;
    let matchings = all_matchings(&clean, config.filters.attribution_window_days)?;
    let base = estimate_base_intensity(&clean)?;
    let kernels = estimate_kernels(&clean, &matchings, &config.kernel_options())?;
    let mkv = estimate_network_mkv(&clean, &matchings, config.network.alpha, config.network.beta)?;
    let network = match config.network.estimator {
        NetworkEstimator::Mkv => mkv,
        NetworkEstimator::Lmkv => lift_network(&mkv, &clean.category_totals(), config.network.zero_count_cap)?,
    };
    let model = ModelArtifact {
        categories: clean.categories().clone(),
        window: clean.window(),
        grain_days: config.grid.grain_days,
        cells: config.grid.cells(),
        base,
        network,
        kernels,
        preprocess,
        matched_pairs: matchings.total_pairs(),
    };
    Ok(Estimate {
        model,
        log: clean,
        matchings,
    })
}

/// Λ at `at` for every user of `users`. Users missing from `scored` (removed
/// by pre-processing) get intensity 0 and rank last.
pub fn infer_for_users(model: &ModelArtifact, scored: &BehavioralLog, users: &[String], at: f64) -> Result<IntensityMatrix> {
    let pre = model.precompute()?;
    let lambda = infer_for_log(scored, &model.base, &pre, at)?;
    let n = lambda.num_categories();
    let mut values = vec![0.0; users.len() * n];
    for (i, id) in users.iter().enumerate() {
        if let Some(u) = scored.user_index(id) {
            values[i * n..(i + 1) * n].copy_from_slice(lambda.row(u));
        }
    }
    Ok(IntensityMatrix {
        user_ids: users.to_vec(),
        values,
        ..lambda
    })
}

/// The full model, re-estimated on the history before each evaluation tick.
#[derive(Debug, Clone)]
pub struct SuperMat {
    pub config: PipelineConfig,
}

impl Method for SuperMat {
    fn name(&self) -> String {
        "SuperMAT".into()
    }

    fn score(&self, history: &BehavioralLog, at: f64) -> Result<IntensityMatrix> {
        let est = estimate_model(history, &self.config)?;
        infer_for_users(&est.model, &est.log, &history.user_ids(), at)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_constants() {
        let c = PipelineConfig::default();
        assert_eq!(c.grid.cells(), 180);
        assert_eq!(c.grid.prediction_window_days, 9.0);
        assert_eq!(c.kernels.components, 5);
        assert_eq!((c.network.alpha, c.network.beta), (3.0, 0.1));
        assert_eq!((c.filters.reseller_threshold, c.filters.reseller_window_days), (10, 7.0));
        assert_eq!(c.filters.attribution_window_days, 10.0);
        assert_eq!(c.network.estimator, NetworkEstimator::Lmkv);
        assert_eq!(c.evaluation.reach_multipliers, vec![5, 10, 20, 40]);
        c.validate().unwrap();
    }

    #[test]
    fn toml_roundtrip_and_unknown_keys() {
        let c = PipelineConfig::from_toml("seed = 4\n[grid]\ngrain_days = 0.5\n[network]\nestimator = \"mkv\"\n").unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.grid.cells(), 360);
        assert_eq!(c.network.estimator, NetworkEstimator::Mkv);
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert!(PipelineConfig::from_toml("[grid]\ngrain = 1.0\n").is_err());
        assert!(PipelineConfig::from_toml("colour = 1\n").is_err());
        assert!(PipelineConfig::from_toml("[grid]\ngrain_days = -1.0\n").is_err());
    }
}
