//! Scenario runner for the glued hybrid-systems toolkit.
//!
//! A scenario names a model, a mode and its settings. Running it executes
//! the pipeline, writes the CSV and JSON artifacts into an output directory
//! together with a `manifest.json` that hashes every file, and reports
//! whether all checks passed.

pub mod config;
pub mod error;
pub mod pipeline;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use glued_core::models::{ExampleBundle, Registry};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{Mode, ScenarioConfig};
pub use error::{CliError, CliResult};
pub use pipeline::{Artifact, CheckOutcome, PipelineOutput};

/// Version of the manifest layout.
pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";
pub const DEFAULT_OUT_DIR: &str = "glued-out";

/// Command-line settings layered over a config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub overrides: BTreeMap<String, f64>,
    /// Worker threads for sweeps; 0 picks the default.
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub config: ScenarioConfig,
    /// Parameters the model was built with, overrides included.
    pub model_params: BTreeMap<String, f64>,
    pub pass: bool,
    pub checks: Vec<CheckOutcome>,
    pub files: Vec<FileEntry>,
    pub notes: Vec<String>,
    /// Run time in seconds. The only field that changes between identical runs.
    pub wall_time_s: f64,
}

/// What one scenario run left on disk.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl RunArtifacts {
    pub fn pass(&self) -> bool {
        self.manifest.pass
    }
}

/// One line per registered model with its parameters and defaults.
pub fn list_models(registry: &Registry) -> String {
    registry.listing()
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Maps model construction failures: bad parameters are configuration
/// errors, failed build-time checks are pipeline errors.
fn build_error(id: &str, e: glued_core::Error) -> CliError {
    use glued_core::Error as E;
    match e {
        E::InvalidParameter(_) | E::BadEnergyBand { .. } | E::NotHurwitz { .. } => {
            CliError::Config(format!("{id}: {e}"))
        }
        other => CliError::Pipeline {
            context: format!("building {id}"),
            source: other,
        },
    }
}

/// Checks the parts of a config that depend on the registry, without
/// running anything.
pub fn preflight(cfg: &ScenarioConfig, registry: &Registry) -> CliResult<()> {
    cfg.validate()?;
    let entry = registry
        .get(&cfg.model_id)
        .ok_or_else(|| CliError::ModelNotFound(cfg.model_id.clone()))?;
    for key in cfg.overrides.keys().chain(cfg.sweep.iter().flat_map(|s| s.keys())) {
        if !entry.defaults.contains_key(key) {
            return Err(CliError::Config(format!("{} has no parameter {key}", cfg.model_id)));
        }
    }
    Ok(())
}

pub fn build_bundle(cfg: &ScenarioConfig, registry: &Registry) -> CliResult<ExampleBundle> {
    registry
        .build(&cfg.model_id, &cfg.overrides)
        .map_err(|e| build_error(&cfg.model_id, e))
}

/// Runs a single (non-sweep) scenario into `dir`. The model is built and
/// the pipeline completed before anything is written.
pub fn run_config(cfg: &ScenarioConfig, registry: &Registry, dir: &Path) -> CliResult<RunArtifacts> {
    let start = Instant::now();
    preflight(cfg, registry)?;
    let bundle = build_bundle(cfg, registry)?;
    let output = pipeline::run_pipeline(cfg, &bundle)?;
    write_run(cfg, &bundle, output, dir, start)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_run(
    cfg: &ScenarioConfig,
    bundle: &ExampleBundle,
    output: PipelineOutput,
    dir: &Path,
    start: Instant,
) -> CliResult<RunArtifacts> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files = Vec::with_capacity(output.artifacts.len());
    for a in &output.artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes).map_err(io_err(&path))?;
        files.push(FileEntry {
            path: a.name.clone(),
            sha256: sha256_hex(&a.bytes),
            bytes: a.bytes.len() as u64,
        });
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool: "glued",
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        model_params: bundle.params.clone(),
        pass: output.pass(),
        checks: output.checks.clone(),
        files,
        notes: output.notes.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let path = dir.join(MANIFEST_NAME);
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    std::fs::write(&path, bytes).map_err(io_err(&path))?;
    Ok(RunArtifacts {
        dir: dir.to_path_buf(),
        manifest,
    })
}

/// Layers command-line options over a parsed config.
pub fn apply_options(cfg: &mut ScenarioConfig, opts: &RunOptions) {
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &opts.out_dir {
        cfg.out_dir = Some(out.clone());
    }
    cfg.overrides.extend(opts.overrides.iter().map(|(k, v)| (k.clone(), *v)));
}

/// Runs a config and its sweep. Sweep entries go to `run_000`, `run_001`, ...
/// under the output directory and run on `opts.jobs` threads. Every entry is
/// checked before any runs.
pub fn run_scenario_config(
    mut cfg: ScenarioConfig,
    registry: &Registry,
    opts: &RunOptions,
) -> CliResult<Vec<RunArtifacts>> {
    apply_options(&mut cfg, opts);
    let root = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let runs = cfg.expand();
    for run in &runs {
        preflight(run, registry)?;
    }
    if cfg.sweep.is_empty() {
        return Ok(vec![run_config(&runs[0], registry, &root)?]);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} jobs: {e}", opts.jobs)))?;
    pool.install(|| {
        runs.par_iter()
            .enumerate()
            .map(|(i, run)| run_config(run, registry, &root.join(format!("run_{i:03}"))))
            .collect()
    })
}

/// Loads a TOML config and runs it.
pub fn run_scenario(config_path: &Path, registry: &Registry, opts: &RunOptions) -> CliResult<Vec<RunArtifacts>> {
    let cfg = ScenarioConfig::load(config_path)?;
    run_scenario_config(cfg, registry, opts)
}

/// Process exit code for a finished run.
pub fn exit_code(result: &CliResult<Vec<RunArtifacts>>) -> i32 {
    match result {
        Ok(runs) if runs.iter().all(RunArtifacts::pass) => 0,
        Ok(_) => 1,
        Err(e) => e.exit_code(),
    }
}
