//! `longpeer` command-line driver.

mod commands;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use longpeer::{Error, ErrorCategory};

#[derive(Parser)]
#[command(
    name = "longpeer",
    version,
    about = "Longitudinal penalized functional regression"
)]
struct Cli {
    /// Cap on worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model to a dataset and write estimates, bands and residuals.
    Fit(FitArgs),
    /// Run a simulation study.
    Simulate(SimulateArgs),
    /// Choose `phi_a` or the time structure by AIC.
    Select(SelectArgs),
    /// Compare the GSVD expansions with the direct solver.
    GsvdCheck(GsvdArgs),
}

#[derive(Args, Clone)]
pub struct DataArgs {
    #[arg(long)]
    outcomes: std::path::PathBuf,
    #[arg(long)]
    curves: std::path::PathBuf,
    /// Grid spec JSON file.
    #[arg(long)]
    grid: std::path::PathBuf,
    /// Comma separated covariate names to keep; all by default.
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// `unit` or `riemann`.
    #[arg(long, default_value = "unit")]
    quadrature: String,
    /// Subtract the pointwise grand mean of the curves.
    #[arg(long)]
    center: bool,
}

#[derive(Args, Clone)]
pub struct PenaltyArgs {
    /// `decomposition`, `ridge` or `second-difference`; decomposition when
    /// `--q-basis` is given, ridge otherwise.
    #[arg(long)]
    penalty: Option<String>,
    /// Headerless CSV with one column per basis vector.
    #[arg(long)]
    q_basis: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = 10.0)]
    phi_a: f64,
    #[arg(long, default_value_t = 1.0)]
    phi_b: f64,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    penalty: PenaltyArgs,
    /// Time functions, e.g. `t`, `t,t2`, `expm1`, `log1p`; `none` for a
    /// time-invariant coefficient.
    #[arg(long, default_value = "none")]
    time_basis: String,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Times at which to write bands for `γ(t, ·)`.
    #[arg(long = "t", value_delimiter = ',', default_value = "0")]
    t_values: Vec<f64>,
    /// Use the unconditional coefficient covariance.
    #[arg(long)]
    unconditional: bool,
    #[arg(long, env = "LONGPEER_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    out: std::path::PathBuf,
    /// Replace a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Scenario JSON file or preset name (`time-invariant`, `time-varying`,
    /// `coverage`, `partial-information`).
    #[arg(long)]
    scenario: String,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    replicates: u64,
    /// Overrides the scenario seed.
    #[arg(long, env = "LONGPEER_SEED")]
    seed: Option<u64>,
    /// Also write the data, penalty basis and fit of this replicate.
    #[arg(long)]
    export_replicate: Option<u64>,
    #[arg(long)]
    out: std::path::PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
pub struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    penalty: PenaltyArgs,
    #[arg(long, default_value = "none")]
    time_basis: String,
    /// Comma separated `phi_a` values; the default grid is `10^k`,
    /// `k = 0, 0.25, …, 3`.
    #[arg(long, value_delimiter = ',')]
    phi_grid: Option<Vec<f64>>,
    /// Semicolon separated time structures to compare instead of a `phi_a`
    /// search, e.g. `none;t;t,t2`.
    #[arg(long)]
    compare: Option<String>,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, env = "LONGPEER_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    out: std::path::PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
pub struct GsvdArgs {
    /// Observations in the random instance.
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Grid size of the random instance.
    #[arg(long, default_value_t = 10)]
    p: usize,
    /// Scalar covariates of the random instance; 0 checks the `X = 0` path only.
    #[arg(long, default_value_t = 0)]
    k: usize,
    /// `ridge`, `second-difference` or `decomposition` (random basis).
    #[arg(long, default_value = "ridge")]
    penalty: String,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, env = "LONGPEER_SEED", default_value_t = 0)]
    seed: u64,
    /// Check a dataset instead: a directory with `outcomes.csv`,
    /// `curves.csv` and `grid.json`, fitted at fixed variance components.
    #[arg(long)]
    dataset_dir: Option<std::path::PathBuf>,
    #[arg(long, default_value = "none")]
    time_basis: String,
    #[arg(long, default_value_t = 1.0)]
    sigma_eps_sq: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_b_sq: f64,
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Numerical => 1,
        ErrorCategory::Input => 2,
        ErrorCategory::Shape => 3,
    }
}

fn report(kind: &str, message: &str) {
    let body = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{body}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            report("Usage", e.to_string().trim_end());
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
        {
            report("Usage", &e.to_string());
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Fit(a) => commands::fit(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Select(a) => commands::select(&a),
        Command::GsvdCheck(a) => commands::gsvd_check(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            report(e.kind(), &e.to_string());
            ExitCode::from(exit_code(&e))
        }
    }
}
