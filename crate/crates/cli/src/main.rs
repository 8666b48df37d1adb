//! `heterokink` command-line driver.
//!
//! Exit codes: 0 on success, 2 for usage, configuration or input-file
//! errors, 3 for numerical failures (a diagnostics JSON goes to stderr and,
//! when an output path is given, next to it).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use heterokink::ModelKind;

use crate::output::CliError;

#[derive(Parser, Debug)]
#[command(name = "heterokink", version, about = "Heteroclinic fronts of the driven Cahn-Hilliard equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Linearisation at both far-field equilibria, as JSON.
    Eig(EigArgs),
    /// Distance-function scan over A at fixed delta.
    Scan(ScanArgs),
    /// Follow one het_k branch through a delta schedule.
    Trace(TraceArgs),
    /// Solve the boundary-value problem for het_k.
    Bvp(BvpArgs),
    /// Small-delta predictions.
    Asym(AsymArgs),
    /// Scaling-law fits on branch files.
    Fit(FitArgs),
    /// Branch files against the predictions, with fits.
    Compare(FitArgs),
    /// Print the effective configuration.
    Config,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: heterokink::systems::SystemError| e.to_string())
}

#[derive(Args, Debug)]
pub struct EigArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: ModelKind,
    #[arg(long = "A", visible_alias = "a", allow_negative_numbers = true)]
    pub a: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub delta: f64,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: ModelKind,
    #[arg(long, allow_negative_numbers = true)]
    pub delta: f64,
    #[arg(long)]
    pub a_min: Option<f64>,
    #[arg(long)]
    pub a_max: Option<f64>,
    #[arg(long)]
    pub a_step: Option<f64>,
    #[arg(long)]
    pub accept_tol: Option<f64>,
    /// Branch CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Distance-profile CSV.
    #[arg(long)]
    pub distance_out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Shoot,
    Bvp,
}

#[derive(Args, Debug)]
pub struct TraceArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: ModelKind,
    #[arg(long)]
    pub k: u32,
    /// Defaults to shooting for CCH and collocation for HCCH.
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Explicit schedule, comma separated, in tracing order.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["delta_from", "delta_to"])]
    pub deltas: Option<Vec<f64>>,
    /// First delta of a log-spaced schedule.
    #[arg(long, requires = "delta_to")]
    pub delta_from: Option<f64>,
    /// Last delta of a log-spaced schedule.
    #[arg(long, requires = "delta_from")]
    pub delta_to: Option<f64>,
    /// Points in the log-spaced schedule.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Branch CSV whose het_k row seeds the trace (shooting only).
    #[arg(long, conflicts_with = "start_a")]
    pub from_scan: Option<PathBuf>,
    /// Guess for A at the first delta (shooting only).
    #[arg(long)]
    pub start_a: Option<f64>,
    /// Branch CSV; rows already present are kept and skipped.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormulationArg {
    Half,
    Full,
}

#[derive(Args, Debug)]
pub struct BvpArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: ModelKind,
    #[arg(long)]
    pub k: u32,
    #[arg(long, allow_negative_numbers = true)]
    pub delta: f64,
    /// Profile CSV used as the initial guess.
    #[arg(long, conflicts_with = "auto_guess", required_unless_present = "auto_guess")]
    pub guess: Option<PathBuf>,
    /// Seed from the small-delta asymptotics and continue in delta.
    #[arg(long)]
    pub auto_guess: bool,
    /// Starting A for a file guess; defaults to the guess sidecar, then the
    /// asymptotic prediction.
    #[arg(long)]
    pub a0: Option<f64>,
    #[arg(long, value_enum, default_value = "half")]
    pub formulation: FormulationArg,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Profile CSV; metadata goes to the same path with a `.json` extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AsymArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: ModelKind,
    #[arg(long)]
    pub k: u32,
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub deltas: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Branch CSV; repeat for several families.
    #[arg(long, required = true)]
    pub branch: Vec<PathBuf>,
    #[arg(long)]
    pub delta_min: Option<f64>,
    #[arg(long)]
    pub delta_max: Option<f64>,
    /// JSON report; the aligned table always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = config::RunConfig::load().map_err(CliError::Usage)?;
    match cli.command {
        Command::Eig(a) => commands::eig(&a),
        Command::Scan(a) => commands::scan(&a, cfg),
        Command::Trace(a) => commands::trace(&a, cfg),
        Command::Bvp(a) => commands::bvp(&a, cfg),
        Command::Asym(a) => commands::asym(&a),
        Command::Fit(a) => commands::fit(&a, cfg, false),
        Command::Compare(a) => commands::fit(&a, cfg, true),
        Command::Config => {
            cfg.validate().map_err(CliError::Usage)?;
            print!("{}", cfg.dump());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}
