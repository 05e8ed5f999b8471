use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use audience_core::evaluate::{
    run_experiment, split_protocol, BuyItAgain, MatrixFactorization, Method, Top,
};
use audience_core::events::{
    log_stats, parse_epoch, read_events_file, IngestOptions, InputFormat, DEFAULT_HEAD_PURCHASES,
    DEFAULT_REGULAR_MONTHS,
};
use audience_core::inference::{rank_audience, IntensityMatrix};
use audience_core::numeric::derive_seed;
use audience_core::pipeline::{estimate_model, infer_for_users, preprocess_log, ModelArtifact, PipelineConfig, SuperMat};
use audience_core::preprocess::all_matchings;
use audience_core::simulate::{inject_noise, simulate_logs, GroundTruthModel};
use audience_core::{BehavioralLog, Error, Result};
use serde_json::json;

use crate::manifest::Manifest;
use crate::{Cli, Command, EventsArgs, Format, GridArgs, MatrixFormat, MethodName};

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::from_toml(&fs::read_to_string(path)?)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn apply_grid(config: &mut PipelineConfig, grid: &GridArgs) -> Result<()> {
    if let Some(g) = grid.grain_days {
        config.grid.grain_days = g;
    }
    if let Some(h) = grid.horizon_days {
        config.grid.horizon_days = h;
    }
    config.validate()
}

fn load_events(args: &EventsArgs, config: &PipelineConfig, manifest: &mut Manifest) -> Result<BehavioralLog> {
    let path = args.events.as_path();
    let options = IngestOptions {
        format: match args.format {
            Some(Format::Csv) => InputFormat::Csv,
            Some(Format::Jsonl) => InputFormat::Jsonl,
            None => InputFormat::from_path(path),
        },
        lenient: args.lenient,
        categories: None,
        window: args.window,
        epoch: args.epoch.as_deref().map(parse_epoch).transpose()?,
    };
    let resolved = config.paths.events.as_deref().filter(|_| path.as_os_str().is_empty()).unwrap_or(path);
    manifest.input(resolved)?;
    let (log, summary) = manifest.time("ingest", || read_events_file(resolved, &options))?;
    if summary.skipped > 0 {
        log::warn!("skipped {} malformed rows of {}", summary.skipped, summary.rows);
    }
    Ok(log)
}

fn create(out_dir: &Path, name: &str, manifest: &mut Manifest) -> Result<BufWriter<File>> {
    let path = out_dir.join(name);
    manifest.output(&path);
    Ok(BufWriter::new(File::create(path)?))
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn write_audiences(
    lambda: &IntensityMatrix,
    category: Option<&str>,
    reach: impl Fn(usize) -> usize,
    out_dir: &Path,
    manifest: &mut Manifest,
) -> Result<()> {
    let targets: Vec<usize> = match category {
        Some(id) => vec![lambda
            .categories
            .index_of(id)
            .ok_or_else(|| Error::UnknownCategory(id.to_string()))?],
        None => (0..lambda.num_categories()).collect(),
    };
    for c in targets {
        let audience = rank_audience(lambda, c, reach(c))?;
        let name = format!("audience-{}.csv", file_safe(lambda.categories.id(c)));
        let mut w = create(out_dir, &name, manifest)?;
        audience.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn read_intensities(path: &Path) -> Result<IntensityMatrix> {
    let reader = BufReader::new(File::open(path)?);
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => IntensityMatrix::read_binary(reader),
        _ => IntensityMatrix::read_csv(reader),
    }
}

/// Mean purchases per prediction window over the whole log, per category.
fn window_rates(log: &BehavioralLog, window: f64) -> Vec<f64> {
    let segments = (log.window() / window).floor().max(1.0);
    log.category_totals().iter().map(|&n| n as f64 / segments).collect()
}

fn methods_for(names: &[MethodName], config: &PipelineConfig) -> Vec<Box<dyn Method>> {
    names
        .iter()
        .map(|m| -> Box<dyn Method> {
            match m {
                MethodName::Top => Box::new(Top { window: None }),
                MethodName::Top45 => Box::new(Top { window: Some(45.0) }),
                MethodName::Mf => Box::new(MatrixFactorization(config.mf_options())),
                MethodName::Buyitagain => Box::new(BuyItAgain {
                    horizon: config.grid.prediction_window_days,
                }),
                MethodName::Supermat => Box::new(SuperMat { config: config.clone() }),
            }
        })
        .collect()
}

const ALL_METHODS: [MethodName; 5] = [
    MethodName::Top,
    MethodName::Top45,
    MethodName::Mf,
    MethodName::Buyitagain,
    MethodName::Supermat,
];

fn evaluate_stage(
    log: &BehavioralLog,
    config: &PipelineConfig,
    names: &[MethodName],
    ks: &[u32],
    out_dir: &Path,
    manifest: &mut Manifest,
) -> Result<()> {
    let protocol = split_protocol(
        log,
        config.evaluation.test_days,
        config.grid.prediction_window_days,
        config.evaluation.segments,
    )?;
    let methods = methods_for(names, config);
    let refs: Vec<&dyn Method> = methods.iter().map(|m| m.as_ref()).collect();
    let report = manifest.time("evaluate", || run_experiment(log, &protocol, &refs, ks))?;
    let mut w = create(out_dir, "metrics.csv", manifest)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let table = report.format_table();
    let mut s = create(out_dir, "summary.txt", manifest)?;
    s.write_all(table.as_bytes())?;
    s.flush()?;
    print!("{table}");
    if report.excluded_users > 0 {
        println!("{} users appear only in the test span and were excluded", report.excluded_users);
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidParameter("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    }
    let mut config = load_config(&cli)?;
    let out_dir: PathBuf = cli.out_dir.clone();
    fs::create_dir_all(&out_dir)?;
    let config_path = cli.config.clone();

    match &cli.command {
        Command::Stats {
            events,
            regular_months,
            head_threshold,
        } => {
            let mut m = Manifest::new("stats", &config, json!({ "regular_months": regular_months, "head_threshold": head_threshold }));
            let log = load_events(events, &config, &mut m)?;
            let report = m.time("stats", || {
                log_stats(
                    &log,
                    regular_months.unwrap_or(DEFAULT_REGULAR_MONTHS),
                    head_threshold.unwrap_or(DEFAULT_HEAD_PURCHASES),
                )
            });
            let mut w = create(&out_dir, "stats.json", &mut m)?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            w.flush()?;
            finish(m, config_path, &out_dir)
        }
        Command::Preprocess { events } => {
            let mut m = Manifest::new("preprocess", &config, json!({}));
            let log = load_events(events, &config, &mut m)?;
            let (clean, report) = m.time("filters", || preprocess_log(&log, &config))?;
            let matchings = m.time("matching", || all_matchings(&clean, config.filters.attribution_window_days))?;
            let mut w = create(&out_dir, "events.clean.csv", &mut m)?;
            clean.write_csv(&mut w)?;
            w.flush()?;
            let mut w = create(&out_dir, "matchings.csv", &mut m)?;
            matchings.write_csv(&clean, &mut w)?;
            w.flush()?;
            let mut w = create(&out_dir, "preprocess.json", &mut m)?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            w.flush()?;
            finish(m, config_path, &out_dir)
        }
        Command::Estimate { events, grid } => {
            apply_grid(&mut config, grid)?;
            let mut m = Manifest::new("estimate", &config, json!({}));
            let log = load_events(events, &config, &mut m)?;
            let est = m.time("estimate", || estimate_model(&log, &config))?;
            write_model(&est.model, &out_dir, &mut m)?;
            finish(m, config_path, &out_dir)
        }
        Command::Infer {
            events,
            model,
            at,
            output_format,
        } => {
            let mut m = Manifest::new("infer", &config, json!({ "at": at }));
            m.input(model)?;
            let artifact = ModelArtifact::read_json(BufReader::new(File::open(model)?))?;
            let log = load_events(events, &config, &mut m)?;
            let (clean, _) = preprocess_log(&log, &config)?;
            let at = at.unwrap_or(log.window());
            let lambda = m.time("infer", || infer_for_users(&artifact, &clean, &log.user_ids(), at))?;
            write_intensities(&lambda, *output_format, &out_dir, &mut m)?;
            finish(m, config_path, &out_dir)
        }
        Command::Rank {
            intensities,
            reach,
            category,
        } => {
            let mut m = Manifest::new("rank", &config, json!({ "reach": reach, "category": category }));
            m.input(intensities)?;
            let lambda = read_intensities(intensities)?;
            let reach = *reach as usize;
            write_audiences(&lambda, category.as_deref(), |_| reach, &out_dir, &mut m)?;
            finish(m, config_path, &out_dir)
        }
        Command::Simulate {
            model,
            users,
            promo_rate,
            resellers,
        } => {
            let mut m = Manifest::new("simulate", &config, json!({ "users": users, "promo_rate": promo_rate, "resellers": resellers }));
            m.input(model)?;
            let mut truth = GroundTruthModel::read_json(BufReader::new(File::open(model)?))?;
            if let Some(n) = users {
                truth.users = *n;
            }
            let mut log = m.time("simulate", || simulate_logs(&truth, config.seed))?;
            if *promo_rate > 0.0 || *resellers > 0 {
                log = inject_noise(&log, *promo_rate, *resellers, derive_seed(config.seed, u64::MAX))?;
            }
            let mut w = create(&out_dir, "events.csv", &mut m)?;
            log.write_csv(&mut w)?;
            w.flush()?;
            finish(m, config_path, &out_dir)
        }
        Command::Evaluate {
            events,
            grid,
            methods,
            k,
        } => {
            apply_grid(&mut config, grid)?;
            if let Some(k) = k {
                config.evaluation.reach_multipliers = k.clone();
                config.validate()?;
            }
            let names = methods.clone().unwrap_or_else(|| ALL_METHODS.to_vec());
            let mut m = Manifest::new("evaluate", &config, json!({ "methods": format!("{names:?}") }));
            let log = load_events(events, &config, &mut m)?;
            let ks = config.evaluation.reach_multipliers.clone();
            evaluate_stage(&log, &config, &names, &ks, &out_dir, &mut m)?;
            finish(m, config_path, &out_dir)
        }
        Command::Pipeline {
            events,
            grid,
            reach,
            category,
            no_evaluate,
        } => {
            apply_grid(&mut config, grid)?;
            let mut m = Manifest::new("pipeline", &config, json!({ "reach": reach, "category": category }));
            let log = load_events(events, &config, &mut m)?;
            let est = m.time("estimate", || estimate_model(&log, &config))?;
            write_model(&est.model, &out_dir, &mut m)?;
            let at = log.window();
            let lambda = m.time("infer", || infer_for_users(&est.model, &est.log, &log.user_ids(), at))?;
            write_intensities(&lambda, MatrixFormat::Csv, &out_dir, &mut m)?;
            let rates = window_rates(&est.log, config.grid.prediction_window_days);
            let k0 = config.evaluation.reach_multipliers[0] as f64;
            let reach_for = |c: usize| match reach {
                Some(r) => *r as usize,
                None => ((k0 * rates[c]).round() as usize).max(1),
            };
            m.time("rank", || write_audiences(&lambda, category.as_deref(), reach_for, &out_dir, &mut Manifest::new("rank", &config, json!({}))))?;
            for c in 0..lambda.num_categories() {
                if category.as_deref().is_none_or(|id| id == lambda.categories.id(c)) {
                    m.output(&out_dir.join(format!("audience-{}.csv", file_safe(lambda.categories.id(c)))));
                }
            }
            if !no_evaluate {
                let ks = config.evaluation.reach_multipliers.clone();
                evaluate_stage(&log, &config, &ALL_METHODS, &ks, &out_dir, &mut m)?;
            }
            finish(m, config_path, &out_dir)
        }
    }
}

fn write_model(model: &ModelArtifact, out_dir: &Path, manifest: &mut Manifest) -> Result<()> {
    let mut w = create(out_dir, "model.json", manifest)?;
    model.write_json(&mut w)?;
    w.write_all(b"\n")?;
    w.flush()?;
    let mut w = create(out_dir, "network.csv", manifest)?;
    model.network.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_intensities(lambda: &IntensityMatrix, format: MatrixFormat, out_dir: &Path, manifest: &mut Manifest) -> Result<()> {
    match format {
        MatrixFormat::Csv => {
            let mut w = create(out_dir, "intensities.csv", manifest)?;
            lambda.write_csv(&mut w)?;
            w.flush()?;
        }
        MatrixFormat::Binary => {
            let mut w = create(out_dir, "intensities.bin", manifest)?;
            lambda.write_binary(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn finish(mut manifest: Manifest, config_path: Option<PathBuf>, out_dir: &Path) -> Result<()> {
    if let Some(p) = config_path {
        manifest.input(&p)?;
    }
    let path = manifest.finish(out_dir)?;
    log::info!("wrote {}", path.display());
    Ok(())
}
