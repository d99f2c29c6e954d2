//! Pipeline orchestrator: subcommands over a single run directory.

mod config;
mod pipeline;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::RunConfig;
use crate::rundir::{RunDir, RunState};

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Upstream(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Upstream(_) => 3,
            CliError::Validation(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<streetscore::geojson::GeoJsonError> for CliError {
    fn from(e: streetscore::geojson::GeoJsonError) -> Self {
        CliError::Other(e.to_string())
    }
}

/// Score street-level scenes over an OSM street network: sample points,
/// fetch directional street-view images, score them with a prompted
/// vision-language backend, aggregate and map the results.
#[derive(Debug, Parser)]
#[command(name = "streetscore", version)]
struct Cli {
    /// Run configuration (defaults to <run-dir>/config.toml).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding caches, images, logs, layers, maps and reports.
    #[arg(long, global = true, default_value = ".")]
    run_dir: PathBuf,
    /// Redo the stage even if its completion marker is present.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Download the street network and place sample points.
    Sample,
    /// Batch-download directional street-view images for every point.
    Fetch,
    /// Score available images with the configured backend.
    Score {
        /// Restrict to one task (default: every enabled task).
        #[arg(long)]
        task: Option<String>,
        /// Append at most this many new records, then stop (resumable).
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Summarize image scores to point and street statistics.
    Aggregate {
        #[arg(long)]
        task: Option<String>,
    },
    /// Render the point-level and street-level thematic maps.
    Render {
        #[arg(long)]
        task: Option<String>,
        /// mean or sum (default: the task's convention).
        #[arg(long)]
        stat: Option<String>,
    },
    /// Compare predictions with human annotations, or draw a sample for
    /// annotation.
    Validate {
        #[arg(long)]
        task: String,
        /// Completed annotation CSV (point_id,heading_deg,task_id,predicted,human).
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Write a stratified sample template to this path instead.
        #[arg(long)]
        draw_sample: Option<PathBuf>,
        /// Records per predicted class for --draw-sample.
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        /// Sampling seed for --draw-sample.
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Write the task definitions (prompt blocks + answer domains) as TOML.
    ExportTasks {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let run = RunDir::new(&cli.run_dir);
    let config_path = cli
        .config
        .clone()
        .unwrap_or_else(|| cli.run_dir.join("config.toml"));
    let config = RunConfig::load(&config_path)?;
    let config_hash = hex::encode(Sha256::digest(std::fs::read(&config_path)?));

    let mut state = RunState::load(&run)?;
    state.observe_config(&config_hash, TOOL_VERSION);

    match &cli.command {
        Command::Sample => pipeline::cmd_sample(&config, &run, &mut state, cli.force),
        Command::Fetch => pipeline::cmd_fetch(&config, &run, &mut state, cli.force),
        Command::Score { task, limit } => {
            pipeline::cmd_score(&config, &run, &mut state, cli.force, task, *limit)
        }
        Command::Aggregate { task } => {
            pipeline::cmd_aggregate(&config, &run, &mut state, cli.force, task)
        }
        Command::Render { task, stat } => {
            pipeline::cmd_render(&config, &run, &mut state, cli.force, task, stat)
        }
        Command::Validate {
            task,
            annotations,
            draw_sample,
            per_class,
            seed,
        } => pipeline::cmd_validate(
            &config,
            &run,
            &state,
            task,
            annotations,
            draw_sample,
            *per_class,
            *seed,
        ),
        Command::ExportTasks { out } => pipeline::cmd_export_tasks(&config, &run, out),
    }
}
