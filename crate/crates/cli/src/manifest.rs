//! Run manifests, execution and replay.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::experiments::run_experiment;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to reproduce a run, plus hashes of what it wrote.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub experiment: String,
    /// Effective seed; overrides the one inside `config` on replay.
    pub seed: u64,
    pub n_paths: usize,
    pub threads: Option<usize>,
    /// Config file text as given.
    pub config: String,
    pub wall_time_s: f64,
    /// File name to lowercase hex SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub failed_criteria: usize,
}

impl Manifest {
    pub fn load(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Manifest(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Manifest(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| CliError::Manifest(e.to_string()))?;
        fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Run `f` on a pool of `threads` workers, or on the global pool.
pub fn in_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> CliResult<R> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::config("threads", "must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::config("threads", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunRequest {
    pub config_text: String,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    /// Suppress the per-criterion lines of suite runs.
    pub quiet: bool,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

/// Parse, validate, run, hash the outputs and write the manifest.
pub fn execute(req: &RunRequest) -> CliResult<RunSummary> {
    let mut cfg = ExperimentConfig::parse(&req.config_text)?;
    if let Some(seed) = req.seed {
        cfg.seed = seed;
    }
    let dir = req
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from(format!("runs/{}-{}", cfg.experiment.name(), cfg.seed)));
    let start = Instant::now();
    let outcome = in_pool(req.threads, || run_experiment(&cfg, &dir, !req.quiet))??;
    let mut outputs = BTreeMap::new();
    for f in &outcome.files {
        outputs.insert(f.clone(), sha256_file(&dir.join(f))?);
    }
    let manifest = Manifest {
        tool: "qmon".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        core_version: qmon_core::VERSION.into(),
        experiment: cfg.experiment.name().into(),
        seed: cfg.seed,
        n_paths: cfg.n_paths,
        threads: req.threads,
        config: req.config_text.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs,
        failed_criteria: outcome.failed_criteria,
    };
    manifest.write(&dir)?;
    Ok(RunSummary { dir, manifest })
}

#[derive(Clone, Debug)]
pub struct ReplayReport {
    pub dir: PathBuf,
    /// Files whose hash differs from the manifest, or that are missing/extra.
    pub mismatches: Vec<String>,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-run the manifest's config with its recorded seed into `out`
/// (default `<dir>/replay`) and compare output hashes.
pub fn replay(dir: &Path, out: Option<&Path>, threads: Option<usize>) -> CliResult<ReplayReport> {
    let m = Manifest::load(dir)?;
    let target = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join("replay"));
    let run = execute(&RunRequest {
        config_text: m.config.clone(),
        seed: Some(m.seed),
        out: Some(target.clone()),
        threads,
        quiet: true,
    })?;
    let mut mismatches = Vec::new();
    for (name, hash) in &m.outputs {
        match run.manifest.outputs.get(name) {
            Some(h) if h == hash => {}
            Some(h) => mismatches.push(format!("{name}: checksum {h} != recorded {hash}")),
            None => mismatches.push(format!("{name}: not produced")),
        }
    }
    for name in run.manifest.outputs.keys() {
        if !m.outputs.contains_key(name) {
            mismatches.push(format!("{name}: not in the recorded manifest"));
        }
    }
    Ok(ReplayReport {
        dir: target,
        mismatches,
    })
}
