//! Experiment runner behind the `ringlab` binary: scenario documents in,
//! `report.csv` / `report.json` (and optional plot data) out.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod drivers;
pub mod pipeline;
pub mod report;

use ringlab_core::RinglabError;
use thiserror::Error;

pub use config::ScenarioConfig;
pub use pipeline::{run_pipeline, run_scenario, run_sweep};
pub use report::{Row, RunReport};

/// Relative size of the rounding allowance on certified inequalities.
pub const ROUNDING_REL: f64 = 1e-12;

pub const SUBCOMMANDS: [&str; 7] = ["extract", "prony", "band-isolate", "pseudospectrum", "window-check", "pipeline", "sweep"];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown subcommand `{0}`")]
    Usage(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] RinglabError),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    /// Configuration and usage problems exit with 2; anything else with 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Core(
                RinglabError::Config(_) | RinglabError::GridMismatch(_) | RinglabError::Domain(_),
            ) => 2,
            _ => 1,
        }
    }
}

/// Dispatches to a module driver. With `jobs`, sweeps run on a pool of that size.
pub fn run_subcommand(name: &str, cfg: &ScenarioConfig, jobs: Option<usize>) -> Result<RunReport, CliError> {
    let run = || match name {
        "extract" => drivers::run_extract(cfg),
        "prony" => drivers::run_prony(cfg),
        "band-isolate" => drivers::run_band(cfg),
        "pseudospectrum" => drivers::run_pseudospectrum(cfg),
        "window-check" => drivers::run_window_check(cfg),
        "pipeline" => run_pipeline(cfg),
        "sweep" => run_sweep(cfg),
        other => Err(CliError::Usage(other.to_string())),
    };
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("cannot build a pool of {n} threads: {e}")))?
            .install(run),
        None => run(),
    }
}
