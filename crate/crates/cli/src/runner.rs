use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::{check_ranges, ExperimentConfig};
use crate::error::RunError;
use crate::experiments::{execute, Check, ExperimentOutput};

pub const OUTPUT_DIR_ENV: &str = "OUTPUT_DIR";

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub smoke: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_echo: ExperimentConfig,
    pub library_version: String,
    pub seed: u64,
    pub smoke: bool,
    pub wall_time_seconds: f64,
    /// Milliseconds since the Unix epoch; also the file-name suffix.
    pub timestamp: u128,
    pub results: Vec<PathBuf>,
    pub checks: Vec<CheckRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl From<&Check> for CheckRecord {
    fn from(c: &Check) -> Self {
        CheckRecord {
            name: c.name.clone(),
            passed: c.passed,
            detail: c.detail.clone(),
        }
    }
}

impl RunManifest {
    pub fn failed_checks(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect()
    }

    pub fn read(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(|source| RunError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| {
            RunError::Config(crate::error::ConfigError::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })
        })
    }
}

/// Applies overrides. Output directory precedence: flag, then `OUTPUT_DIR`,
/// then the config.
pub fn resolve(mut config: ExperimentConfig, opts: &RunOptions) -> Result<ExperimentConfig, RunError> {
    if let Some(w) = opts.workers {
        config.workers = w;
    }
    if let Some(dir) = &opts.output_dir {
        config.output_dir = dir.clone();
    } else if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
        config.output_dir = PathBuf::from(dir);
    }
    if opts.smoke {
        config = config.smoke();
    }
    check_ranges(&config)?;
    Ok(config)
}

/// Runs the experiment on a pool of `config.workers` threads. Results do not
/// depend on the worker count.
pub fn compute(config: &ExperimentConfig) -> Result<ExperimentOutput, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    pool.install(|| execute(config))
}

fn write(path: &Path, contents: &str) -> Result<(), RunError> {
    fs::write(path, contents).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Resolves, runs, and writes `<experiment>-<seed>-<timestamp>.{csv,json}`
/// plus a `.manifest.json`. Failed acceptance checks are recorded in the
/// manifest, not returned as errors.
pub fn run(config: ExperimentConfig, opts: &RunOptions) -> Result<RunManifest, RunError> {
    let config = resolve(config, opts)?;
    let started = Instant::now();
    let output = compute(&config)?;
    let wall_time_seconds = started.elapsed().as_secs_f64();

    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.clone(),
        source,
    })?;
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let stem = format!("{}-{}-{}", config.experiment, config.seed, timestamp);
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    let manifest_path = dir.join(format!("{stem}.manifest.json"));
    write(&csv_path, &output.csv)?;
    let mut json = serde_json::to_string_pretty(&output.json).expect("values serialize");
    json.push('\n');
    write(&json_path, &json)?;

    let manifest = RunManifest {
        seed: config.seed,
        smoke: opts.smoke,
        config_echo: config,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_seconds,
        timestamp,
        results: vec![csv_path, json_path],
        checks: output.checks.iter().map(CheckRecord::from).collect(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write(&manifest_path, &text)?;
    Ok(manifest)
}

/// Re-runs the config echoed in a manifest. The smoke reduction is
/// idempotent, so replaying a smoke manifest reproduces it exactly.
pub fn replay(manifest: &RunManifest, workers: Option<usize>, output_dir: Option<PathBuf>) -> Result<RunManifest, RunError> {
    let opts = RunOptions {
        workers,
        output_dir,
        smoke: manifest.smoke,
    };
    run(manifest.config_echo.clone(), &opts)
}
