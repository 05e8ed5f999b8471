use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::time::Instant;

use audience_core::pipeline::PipelineConfig;
use audience_core::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

/// Everything needed to replay a run: inputs by content hash, the effective
/// configuration, outputs and per-stage timings.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub threads: usize,
    pub config_sha256: String,
    pub config: PipelineConfig,
    pub arguments: serde_json::Value,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<PathBuf>,
    pub timings_ms: BTreeMap<String, f64>,
    #[serde(skip)]
    started: Option<Instant>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex(&Sha256::digest(data))
}

impl Manifest {
    pub fn new(command: &str, config: &PipelineConfig, arguments: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            threads: rayon::current_num_threads(),
            config_sha256: sha256_hex(config.to_toml().as_bytes()),
            config: config.clone(),
            arguments,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings_ms: BTreeMap::new(),
            started: Some(Instant::now()),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let mut reader = BufReader::new(File::open(path)?);
        let mut hasher = Sha256::new();
        let mut buf = vec![0u8; 1 << 16];
        let mut bytes = 0u64;
        loop {
            let n = reader.read(&mut buf)?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
            bytes += n as u64;
        }
        self.inputs.push(InputRecord {
            path: path.to_path_buf(),
            sha256: hex(&hasher.finalize()),
            bytes,
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Runs `f`, recording its wall time under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.timings_ms
            .insert(stage.to_string(), t0.elapsed().as_secs_f64() * 1e3);
        out
    }

    pub fn finish(mut self, out_dir: &Path) -> Result<PathBuf> {
        if let Some(t0) = self.started.take() {
            self.timings_ms
                .insert("total".into(), t0.elapsed().as_secs_f64() * 1e3);
        }
        let path = out_dir.join(format!("{}.manifest.json", self.command));
        serde_json::to_writer_pretty(File::create(&path)?, &self)?;
        Ok(path)
    }
}
