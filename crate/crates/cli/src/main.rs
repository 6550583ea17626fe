use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ringlab_cli::{run_subcommand, CliError, ScenarioConfig};

#[derive(Parser)]
#[command(name = "ringlab", version, about = "Deterministic ringdown extraction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario document (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.csv, report.json and plotdata/
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads for sweeps
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// One-mode shift Rayleigh-quotient extraction
    Extract(RunArgs),
    /// Four-sample two-node Prony fits
    Prony(RunArgs),
    /// Contour subtraction between two horizontal lines
    BandIsolate(RunArgs),
    /// Pseudospectral inclusion scan of the scalar model
    Pseudospectrum(RunArgs),
    /// Window identities, robustness draws and FD convergence
    WindowCheck(RunArgs),
    /// End-to-end extraction, inversion and bias ledger
    Pipeline(RunArgs),
    /// The pipeline over one swept axis
    Sweep(RunArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (name, args) = match cli.command {
        Command::Extract(a) => ("extract", a),
        Command::Prony(a) => ("prony", a),
        Command::BandIsolate(a) => ("band-isolate", a),
        Command::Pseudospectrum(a) => ("pseudospectrum", a),
        Command::WindowCheck(a) => ("window-check", a),
        Command::Pipeline(a) => ("pipeline", a),
        Command::Sweep(a) => ("sweep", a),
    };
    match run(name, &args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("ringlab {name}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(name: &str, args: &RunArgs) -> Result<i32, CliError> {
    let cfg = ScenarioConfig::load(&args.config)?;
    let rep = run_subcommand(name, &cfg, args.jobs)?;
    rep.write(&args.out)?;
    let (violations, failed) = (rep.violations(), rep.failed_rows());
    eprintln!("ringlab {name}: {} rows, {violations} violations, {failed} failed", rep.rows.len());
    Ok(rep.exit_code())
}
