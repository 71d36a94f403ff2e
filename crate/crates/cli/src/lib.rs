//! `pec-lab`: characterize, decompose, benchmark and report, driven by one config file.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;

pub use config::{Overrides, PipelineConfig, Stage};
pub use error::CliError;
pub use pipeline::{Artifacts, Pipeline};
pub use report::Summary;

#[derive(Parser, Debug)]
#[command(name = "pec-lab", version, about = "Probabilistic error cancellation laboratory")]
pub struct Cli {
    /// Pipeline config (TOML). Relative names are also looked up in the search path.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// `:`-separated directories searched for configs.
    #[arg(long, global = true, env = config::CONFIG_PATH_ENV, hide_env_values = true)]
    pub config_path: Option<String>,

    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    /// Stage to run with `run` (repeatable).
    #[arg(long = "stage", global = true, value_parser = clap::value_parser!(Stage))]
    pub stages: Vec<Stage>,

    /// Shots per setting for tomography, raw RB and validation.
    #[arg(long, global = true)]
    pub shots: Option<u64>,

    /// Sampled circuits per mitigated RB sequence.
    #[arg(long, global = true)]
    pub circuits: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

impl clap::builder::ValueParserFactory for Stage {
    type Parser = clap::builder::ValueParser;

    fn value_parser() -> Self::Parser {
        clap::builder::ValueParser::new(|s: &str| s.parse::<Stage>())
    }
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Gate set tomography: dataset, Gram matrices, rates and PTM differences.
    Characterize,
    /// Quasi-probability decompositions from the characterized model.
    Decompose,
    /// Raw randomized benchmarking.
    Rb,
    /// Paired raw and error-mitigated randomized benchmarking.
    MitigateRb,
    /// Sampled-versus-simulated check of the Pauli-error assumption.
    Validate,
    /// MS gate fidelity against the crosstalk ratio.
    SweepCrosstalk,
    /// Summary of the outputs present in the output directory.
    Report,
    /// Configured (or `--stage`-selected) stages, then the report.
    Run,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Characterize => "characterize",
            Command::Decompose => "decompose",
            Command::Rb => "rb",
            Command::MitigateRb => "mitigate-rb",
            Command::Validate => "validate",
            Command::SweepCrosstalk => "sweep-crosstalk",
            Command::Report => "report",
            Command::Run => "run",
        }
    }
}

#[derive(Serialize)]
struct Metadata {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: String,
    seed: u64,
    stages: Vec<&'static str>,
    started_unix: f64,
    elapsed_seconds: f64,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Parses the config, validates CLI overrides and runs `cli.command`.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    if cli.shots == Some(0) {
        return Err(CliError::Config("--shots must be >= 1".into()));
    }
    if cli.circuits.is_some_and(|c| c < 2) {
        return Err(CliError::Config("--circuits must be >= 2".into()));
    }
    if !cli.stages.is_empty() && cli.command != Command::Run {
        return Err(CliError::Config(format!(
            "--stage only applies to `run`, not `{}`",
            cli.command.name()
        )));
    }
    let path = config::resolve_config_path(cli.config.as_deref(), cli.config_path.as_deref())?;
    let overrides = Overrides {
        seed: cli.seed,
        output_dir: cli.output.clone(),
        stages: cli.stages.clone(),
        shots: cli.shots,
        circuits: cli.circuits,
    };
    let cfg = PipelineConfig::load(&path, &overrides)?;
    let started = unix_now();
    let clock = Instant::now();
    let pipeline = Pipeline::new(cfg);
    let stages: Vec<Stage> = match cli.command {
        Command::Characterize => vec![Stage::Gst],
        Command::Decompose => vec![Stage::Qpd],
        Command::Rb => vec![Stage::RbRaw],
        Command::MitigateRb => vec![Stage::RbRaw, Stage::RbMitigated],
        Command::Validate => vec![Stage::Validate],
        Command::SweepCrosstalk => vec![Stage::CrosstalkSweep],
        Command::Report => Vec::new(),
        Command::Run => pipeline.config.run_stages(),
    };
    let result = pipeline.run(&stages).and_then(|()| {
        if matches!(cli.command, Command::Run | Command::Report) {
            write_report(&pipeline, cli.command == Command::Run)
        } else {
            Ok(())
        }
    });
    let meta = Metadata {
        tool: "pec-lab",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        config: path.display().to_string(),
        seed: pipeline.config.seed,
        stages: stages.iter().map(|s| s.name()).collect(),
        started_unix: started,
        elapsed_seconds: clock.elapsed().as_secs_f64(),
    };
    if std::fs::create_dir_all(&pipeline.artifacts.root).is_ok() {
        let text = serde_json::to_string_pretty(&meta).expect("plain data serializes");
        let _ = std::fs::write(pipeline.artifacts.metadata(), text + "\n");
    }
    result
}

fn write_report(pipeline: &Pipeline, require: bool) -> Result<(), CliError> {
    let summary = Summary::collect(&pipeline.artifacts);
    let path = pipeline.artifacts.report();
    std::fs::create_dir_all(&pipeline.artifacts.root)
        .and_then(|()| std::fs::write(&path, summary.to_text()))
        .map_err(|e| CliError::Stage {
            stage: "report".into(),
            message: format!("cannot write {}: {e}", path.display()),
        })?;
    summary.check(&pipeline.config.thresholds, require)
}
