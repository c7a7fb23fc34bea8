//! `netsel`: simulate, fit, select, evaluate and report.
//!
//! Exit codes: 0 on success, 2 for invalid input or configuration, 3 when
//! the computation itself fails.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Overrides;

#[derive(Parser, Debug)]
#[command(name = "netsel", version, about = "Penalty selection for sparse Gaussian graphical models")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate ground-truth networks, precision matrices and data.
    Simulate(SimulateArgs),
    /// Fit a regularisation path and write per-penalty edge lists.
    Fit(FitArgs),
    /// Fit a path and select the penalty with one or more methods.
    Select(SelectArgs),
    /// Score selection reports against ground truth.
    Eval(EvalArgs),
    /// Run a whole simulation scenario end to end and write tables.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Preset name such as p170-hubs or p50-powerlaw.
    #[arg(long, conflicts_with = "spec")]
    pub preset: Option<String>,
    /// SimSpec JSON file.
    #[arg(long)]
    pub spec: Option<std::path::PathBuf>,
    /// Sample size (overrides the spec).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Args, Debug, Clone, Default)]
pub struct FitFlags {
    /// Data matrix, CSV or TSV, one observation per row.
    #[arg(long)]
    pub input: Option<std::path::PathBuf>,
    /// JSON run configuration; flags take precedence.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long)]
    pub grid_min: Option<f64>,
    #[arg(long)]
    pub grid_max: Option<f64>,
    #[arg(long)]
    pub grid_count: Option<usize>,
    /// glasso or mb.
    #[arg(long)]
    pub estimator: Option<String>,
    /// correlation, centered or raw.
    #[arg(long)]
    pub scaling: Option<String>,
    #[arg(long)]
    pub penalize_diagonal: bool,
    /// Combine neighbourhoods with the AND rule (MB only).
    #[arg(long)]
    pub and_rule: bool,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub fit: FitFlags,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SelectFlags {
    /// Comma-separated subset of pc,amse,agnes,stars,aic,bic.
    #[arg(long)]
    pub methods: Option<String>,
    /// Subsamples per method (T).
    #[arg(long)]
    pub subsamples: Option<usize>,
    /// A-MSE subsample size B (default ceil(n/2)).
    #[arg(long)]
    pub subsample_size: Option<usize>,
    /// StARS subsample size (default min(ceil(10 sqrt n), floor(0.8 n))).
    #[arg(long)]
    pub stars_subsample_size: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use the backward running average for PC.
    #[arg(long)]
    pub pc_backward: bool,
    /// Average linkage: wpgma or upgma.
    #[arg(long)]
    pub linkage: Option<String>,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[command(flatten)]
    pub fit: FitFlags,
    #[command(flatten)]
    pub select: SelectFlags,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Report JSON written by `select`; pair each with a --truth.
    #[arg(long, required = true)]
    pub report: Vec<std::path::PathBuf>,
    /// Replicate directory written by `simulate`.
    #[arg(long, required = true)]
    pub truth: Vec<std::path::PathBuf>,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub preset: Option<String>,
    /// Comma-separated sample sizes.
    #[arg(long)]
    pub ns: Option<String>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[command(flatten)]
    pub fit: FitFlags,
    #[command(flatten)]
    pub select: SelectFlags,
}

/// Marks an error as a validation failure (exit code 2).
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[macro_export]
macro_rules! invalid {
    ($($t:tt)*) => { anyhow::Error::new($crate::Invalid(format!($($t)*))) };
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => Overrides::load(&a.fit, None).and_then(|o| commands::fit(&o)),
        Command::Select(a) => Overrides::load(&a.fit, Some(&a.select)).and_then(|o| commands::select(&o)),
        Command::Eval(a) => commands::eval(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<Invalid>()) { ExitCode::from(2) } else { ExitCode::from(3) }
        }
    }
}
