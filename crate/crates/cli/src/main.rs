//! `skorokhod` command-line tool.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use skorokhod::{BarrierKind, Mode};

#[derive(Debug, Parser)]
#[command(name = "skorokhod", version, about = "Root and Rost fields for discrete Skorokhod embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the stopping field of a single embedding.
    Solve(SolveArgs),
    /// Solve a convex-ordered chain of targets stage by stage.
    Chain(ChainArgs),
    /// Check the switching and local-time identities for a field.
    Verify(VerifyArgs),
    /// Monte Carlo paths through a field.
    Simulate(SimulateArgs),
    /// Scaling experiment over several grid levels.
    Converge(ConvergeArgs),
    /// Write barrier or potential CSV for a field.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
struct StartArgs {
    /// Initial law.
    #[arg(long)]
    lambda: PathBuf,
    /// Delay file.
    #[arg(long, conflicts_with = "delay_t")]
    delay: Option<PathBuf>,
    /// Deterministic delay in steps.
    #[arg(long)]
    delay_t: Option<usize>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    kind: BarrierKind,
    #[command(flatten)]
    start: StartArgs,
    #[arg(long)]
    mu: PathBuf,
    /// Residual tolerance; defaults to 0 in rational mode and 1e-12 in float mode.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_horizon: Option<usize>,
    #[arg(long, default_value_t = 0)]
    min_horizon: usize,
    /// Physical duration of one step.
    #[arg(long, default_value = "1")]
    time_step: String,
    #[arg(long, default_value = "rational")]
    mode: Mode,
    #[arg(long)]
    out_field: Option<PathBuf>,
    #[arg(long)]
    out_trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ChainArgs {
    #[arg(long)]
    kind: BarrierKind,
    #[command(flatten)]
    start: StartArgs,
    /// Comma-separated target files in increasing convex order.
    #[arg(long, value_delimiter = ',', required = true)]
    mu: Vec<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_horizon: Option<usize>,
    #[arg(long, default_value = "1")]
    time_step: String,
    #[arg(long, default_value = "rational")]
    mode: Mode,
    /// Site window `a,b` for potentials; defaults to the last target's hull padded by two.
    #[arg(long, allow_hyphen_values = true)]
    window: Option<Window>,
    /// Last horizon of the recovered potentials; defaults to the longest stage.
    #[arg(long)]
    tmax: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    field: PathBuf,
    #[command(flatten)]
    start: StartArgs,
    #[arg(long)]
    mu: PathBuf,
    /// Comma-separated horizons; defaults to every materialized row.
    #[arg(long = "T", value_delimiter = ',')]
    horizons: Vec<usize>,
    /// Float tolerance; rational fields are checked exactly.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, allow_hyphen_values = true)]
    window: Option<Window>,
    /// Defaults to the mode recorded in the field file.
    #[arg(long)]
    mode: Option<Mode>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    field: PathBuf,
    #[command(flatten)]
    start: StartArgs,
    /// Report the TV distance to this law on standard error.
    #[arg(long)]
    mu: Option<PathBuf>,
    #[arg(long)]
    paths: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Last simulated row; defaults to the field horizon.
    #[arg(long)]
    cap: Option<usize>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
}

#[derive(Debug, Args)]
struct ConvergeArgs {
    /// Continuous problem file.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long = "Ns", value_delimiter = ',', required = true)]
    ns: Vec<u64>,
    /// Physical times at which the switching identity is checked.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    times: Vec<f64>,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Largest switching gap accepted.
    #[arg(long, default_value_t = 1e-9)]
    switching_tol: f64,
    #[arg(long, default_value = "float")]
    mode: Mode,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExportFormat {
    BarrierCsv,
    PotentialCsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BarrierSide {
    Plus,
    Minus,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    field: PathBuf,
    #[arg(long)]
    format: ExportFormat,
    /// Barrier CSV: cells with `r > 0` (plus) or `r = 1` (minus).
    #[arg(long, default_value = "plus")]
    set: BarrierSide,
    /// Site window `a,b`; defaults to the field's sites.
    #[arg(long, allow_hyphen_values = true)]
    window: Option<Window>,
    /// Initial law, needed for potential CSV.
    #[arg(long)]
    lambda: Option<PathBuf>,
    #[arg(long, conflicts_with = "delay_t")]
    delay: Option<PathBuf>,
    #[arg(long)]
    delay_t: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
}

/// Inclusive site range given as `a,b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Window(i64, i64);

impl std::str::FromStr for Window {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(',').ok_or("expected a,b")?;
        let a: i64 = a.trim().parse().map_err(|e| format!("{e}"))?;
        let b: i64 = b.trim().parse().map_err(|e| format!("{e}"))?;
        if b < a {
            return Err(format!("empty window {a},{b}"));
        }
        Ok(Window(a, b))
    }
}

impl Window {
    fn range(self) -> std::ops::RangeInclusive<i64> {
        self.0..=self.1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
