use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stablesde_cli::config::Experiment;
use stablesde_cli::error::ConfigError;
use stablesde_cli::{replay, run, validate_config, ExperimentConfig, RunError, RunManifest, RunOptions};

#[derive(Parser)]
#[command(name = "stablesde", version, about = "Run stablesde experiments from a config file")]
struct Cli {
    /// Print the experiment registry and exit.
    #[arg(long)]
    list_experiments: bool,

    /// Worker threads (overrides the config).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory (overrides OUTPUT_DIR and the config).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Tiny Monte Carlo sizes; checks are reported but do not fail the run.
    #[arg(long, global = true)]
    smoke: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config. With --smoke and no
    /// config, runs a small sde_weak_rate.
    Run { config: Option<PathBuf> },
    /// Re-run the config echoed in a manifest.
    Replay { manifest: PathBuf },
}

fn load(path: Option<PathBuf>, smoke: bool) -> Result<ExperimentConfig, RunError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|source| RunError::Io { path: p, source })?;
            Ok(validate_config(&text)?)
        }
        None if smoke => Ok(ExperimentConfig::defaults(Experiment::SdeWeakRate)),
        None => Err(ConfigError::Range {
            field: "config",
            value: "missing".into(),
            legal: "a config path (optional only with --smoke)",
        }
        .into()),
    }
}

fn execute(cli: Cli) -> Result<Option<RunManifest>, RunError> {
    if cli.list_experiments {
        for e in Experiment::ALL {
            println!("{:<20} {}", e.name(), e.summary());
        }
        return Ok(None);
    }
    let manifest = match cli.command {
        Some(Command::Run { config }) => {
            let config = load(config, cli.smoke)?;
            let opts = RunOptions {
                workers: cli.workers,
                output_dir: cli.output_dir,
                smoke: cli.smoke,
            };
            run(config, &opts)?
        }
        Some(Command::Replay { manifest }) => replay(&RunManifest::read(&manifest)?, cli.workers, cli.output_dir)?,
        None => {
            return Err(ConfigError::Range {
                field: "command",
                value: "none".into(),
                legal: "run, replay or --list-experiments",
            }
            .into())
        }
    };
    for c in &manifest.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for p in &manifest.results {
        println!("wrote {}", p.display());
    }
    let failed = manifest.failed_checks();
    if !failed.is_empty() && !manifest.smoke {
        return Err(RunError::Acceptance(failed));
    }
    Ok(Some(manifest))
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::to_string(&e.record()).expect("record serializes");
            eprintln!("{record}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
