//! `qac`: quantized average consensus simulator.
//!
//! Subcommands: `run` (seeded random-mode simulation), `replay` (scripted
//! schedules, with a golden check for the built-in `example1`), `campaign`
//! (batch studies over many digraphs), `bound-check` (exact token-probability
//! lower bound), and `gen-graph` (random strongly connected digraph files).
//!
//! Human-readable summaries go to stdout; data goes to files under `--out`,
//! each starting with a reproducibility header. Exit codes: 0 success,
//! 1 usage, 2 validation or I/O error, 3 failed check (non-convergence,
//! bound violation, or golden mismatch).

mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_CHECK_FAILED: u8 = 3;

/// A failed command, classified for the exit-code mapping.
pub enum Failure {
    /// Bad inputs, unreadable files, malformed formats; exit 2.
    Validation(anyhow::Error),
    /// The delegated check did not pass; exit 3.
    Check(String),
}

impl Failure {
    fn validation(err: impl Into<anyhow::Error>) -> Self {
        Failure::Validation(err.into())
    }
}

pub type CmdResult = Result<(), Failure>;

#[derive(Parser)]
#[command(
    name = "qac",
    version,
    about = "Quantized average consensus via event-triggered mass splitting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a seeded random-mode run on a digraph
    Run(RunArgs),
    /// Replay a scripted schedule; `example1` checks the built-in golden trace
    Replay(ReplayArgs),
    /// Run a batch campaign from a config file
    Campaign(CampaignArgs),
    /// Check the exact lower bound on token transition probabilities
    BoundCheck(BoundCheckArgs),
    /// Generate a random strongly connected digraph file
    GenGraph(GenGraphArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Graph edge-list file, or a built-in id (fig1, fig2)
    #[arg(long)]
    graph: String,
    /// Comma-separated integer initial values, one per node
    #[arg(long)]
    init: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    max_rounds: u64,
    /// Confirmation window in rounds (default: node count)
    #[arg(long)]
    window: Option<u64>,
    /// Output directory for trace CSV
    #[arg(long, default_value = "out")]
    out: String,
    /// Also write per-round estimate series for plotting
    #[arg(long)]
    emit_plot_data: bool,
    /// Proceed even if the digraph is not strongly connected
    #[arg(long)]
    allow_weakly_connected: bool,
}

#[derive(Args)]
struct ReplayArgs {
    /// `example1` or a path to a schedule file
    target: String,
    /// Graph file or built-in id; required with a schedule file
    #[arg(long)]
    graph: Option<String>,
    /// Initial values; required with a schedule file
    #[arg(long)]
    init: Option<String>,
    #[arg(long, default_value_t = 100_000)]
    max_rounds: u64,
    #[arg(long, default_value = "out")]
    out: String,
    #[arg(long)]
    emit_plot_data: bool,
}

#[derive(Args)]
struct CampaignArgs {
    /// Campaign config file (TOML)
    #[arg(long)]
    config: String,
    /// Override the number of graphs/runs in the config
    #[arg(long)]
    num_graphs: Option<u64>,
    /// Override the master seed in the config
    #[arg(long)]
    seed: Option<u64>,
    /// Override max rounds per run
    #[arg(long)]
    max_rounds: Option<u64>,
    /// Worker threads for the campaign (default: all cores)
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long, default_value = "out")]
    out: String,
    /// Also write per-run estimate series for plotting
    #[arg(long)]
    emit_plot_data: bool,
}

#[derive(Args)]
struct BoundCheckArgs {
    /// Graph edge-list file, or a built-in id (fig1, fig2)
    #[arg(long)]
    graph: String,
    #[arg(long, default_value = "out")]
    out: String,
}

#[derive(Args)]
struct GenGraphArgs {
    /// Node count (at least 2)
    #[arg(long)]
    n: usize,
    /// Probability of each extra edge beyond the spanning cycle
    #[arg(long, default_value_t = 0.05)]
    extra_edge_prob: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    let outcome = match cli.command {
        Command::Run(args) => commands::run_cmd(args),
        Command::Replay(args) => commands::replay(args),
        Command::Campaign(args) => commands::campaign(args),
        Command::BoundCheck(args) => commands::bound_check(args),
        Command::GenGraph(args) => commands::gen_graph(args),
    };

    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Check(msg)) => {
            println!("{msg}");
            ExitCode::from(EXIT_CHECK_FAILED)
        }
    }
}
