//! `fatesim` command line: validate and generate models, run exploration
//! experiments, and recompute statistics from stored traces.

pub mod config;
pub mod experiment;
pub mod svg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fatesim_core::model::Severity;
use fatesim_core::{parse_model, suite, validate_model};
use thiserror::Error;

pub use config::{ExperimentConfig, Resolved};
pub use experiment::{execute, report_from_traces, Outcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } | CliError::Run(_) => EXIT_FAILURE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "fatesim",
    version,
    about = "RL-driven exploration of FSM app models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run algorithms x repetitions on one model and write all artifacts.
    Run(MatrixArgs),
    /// Run every cell of one algorithm's tuning grid.
    Sweep {
        /// Algorithm whose grid to run.
        #[arg(long)]
        grid: String,
        #[command(flatten)]
        matrix: MatrixArgs,
    },
    /// Check a model file; exits 0 iff it has no errors.
    Validate { model: PathBuf },
    /// Write a synthetic benchmark model as JSON.
    Gen {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the comparison report from the traces in a run directory.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Print JSON instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// List the synthetic benchmark presets.
    Presets,
}

#[derive(Debug, Clone, Default, Args)]
pub struct MatrixArgs {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    /// Model JSON file instead of a preset.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Comma-separated algorithm names.
    #[arg(long, value_delimiter = ',')]
    pub algos: Option<Vec<String>>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Base seed; repetition i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub episode_len: Option<usize>,
    #[arg(long, env = config::OUT_ENV)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Hyperparameter override, `algo.key=value`; repeatable.
    #[arg(long = "set", value_name = "ALGO.KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl MatrixArgs {
    pub fn to_config(&self) -> Result<ExperimentConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if self.preset.is_some() || self.model.is_some() {
            c.preset = self.preset.clone();
            c.model = self.model.clone();
        }
        if let Some(a) = &self.algos {
            c.algorithms = a.clone();
        }
        macro_rules! take {
            ($($field:ident),*) => { $( if let Some(v) = &self.$field { c.$field = v.clone(); } )* };
        }
        take!(reps, seed, steps, episode_len, out, jobs, alpha);
        for spec in &self.overrides {
            c.add_override(spec)?;
        }
        Ok(c)
    }
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Run(args) => {
            let config = args.to_config()?;
            run_matrix(&config.resolve()?)
        }
        Command::Sweep { grid, matrix } => {
            let config = matrix.to_config()?;
            run_matrix(&config.resolve_grid(&grid)?)
        }
        Command::Validate { model } => validate(&model),
        Command::Gen { preset, out } => {
            let cfg = suite::preset(&preset).map_err(|e| CliError::Usage(e.to_string()))?;
            let model = suite::generate(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
            std::fs::write(&out, model.to_json()).map_err(|e| CliError::io(&out, e))?;
            println!("wrote {} ({} nodes)", out.display(), model.nodes.len());
            Ok(EXIT_OK)
        }
        Command::Stats { input, alpha, json } => {
            let report = report_from_traces(&input, alpha)?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report)
                        .map_err(|e| CliError::Run(e.to_string()))?
                );
            } else {
                print!("{}", report.to_text());
            }
            Ok(EXIT_OK)
        }
        Command::Presets => {
            for (name, cfg) in suite::list_presets() {
                println!(
                    "{name:<16} pool {:>3}  dummy buttons {}",
                    cfg.string_pool_size, cfg.dummy_buttons
                );
            }
            Ok(EXIT_OK)
        }
    }
}

fn run_matrix(resolved: &Resolved) -> Result<i32, CliError> {
    let cfg = &resolved.config;
    if cfg.reps < 30 {
        eprintln!(
            "note: {} repetitions per algorithm; the full study protocol uses 30 to 60",
            cfg.reps
        );
    }
    let out = &cfg.out;
    let outcome = execute(resolved, out)?;
    println!(
        "{}: {} of {} runs completed, artifacts in {}",
        resolved.source,
        outcome.records.len(),
        resolved.agents.len() * cfg.reps,
        out.display()
    );
    if let Some(report) = &outcome.report {
        print!("{}", report.to_text());
    }
    for f in &outcome.failures {
        eprintln!("run {} failed: {}", f.run_id, f.error);
    }
    Ok(if outcome.failures.is_empty() {
        EXIT_OK
    } else {
        EXIT_FAILURE
    })
}

fn validate(path: &Path) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let model = match parse_model(&text) {
        Ok(m) => m,
        Err(e) => {
            println!("error: {e}");
            return Ok(EXIT_FAILURE);
        }
    };
    let diagnostics = validate_model(&model);
    for d in &diagnostics {
        println!("{d}");
    }
    let errors = diagnostics
        .iter()
        .filter(|d| d.severity == Severity::Error)
        .count();
    println!(
        "{}: {} nodes, {} errors, {} warnings",
        path.display(),
        model.nodes.len(),
        errors,
        diagnostics.len() - errors
    );
    Ok(if errors == 0 { EXIT_OK } else { EXIT_FAILURE })
}
