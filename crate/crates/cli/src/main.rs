//! `domino-lab`: coefficient tables, exact stationary distributions,
//! simulations and their comparison for the Random Domino Automaton.
//!
//! Exit codes: 0 on success, 1 on runtime or convergence failure, 2 on usage
//! errors.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "domino-lab", version, about = "Random Domino Automaton toolkit")]
struct Cli {
    /// Output format; `compare` defaults to a text table, everything else to JSON.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write to this file instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Progress messages on stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Float64,
    Exact,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Coefficients c_0..=c_m of the Motzkin-form recurrence.
    Motzkin {
        #[arg(long)]
        m_max: usize,
        /// Omitted means theta = 0 in exact mode, which yields the Motzkin numbers.
        #[arg(long)]
        theta: Option<String>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Exact stationary cluster distribution for mu_i = delta / i.
    Solve {
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long = "n")]
        lattice: usize,
        /// Truncation; chosen adaptively when omitted.
        #[arg(long)]
        i_max: Option<usize>,
    },
    /// Stationary cluster distribution for any mu rule by fixed-point iteration.
    SolveGeneral {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 40)]
        i_max: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
    },
    /// Monte Carlo run, optionally as a parallel ensemble.
    Simulate(SimulateArgs),
    /// Compare a `solve` output with a `simulate` output.
    Compare { theory: PathBuf, simulation: PathBuf },
    /// Tail exponent of the small-theta limit form.
    Asym {
        #[arg(long, default_value_t = 50)]
        i_from: usize,
        #[arg(long, default_value_t = 200)]
        i_to: usize,
    },
}

#[derive(Args, Debug, Default)]
pub struct ModelArgs {
    #[arg(long = "n")]
    pub lattice: Option<usize>,
    #[arg(long)]
    pub nu: Option<f64>,
    /// mu_i = delta / i.
    #[arg(long, conflicts_with_all = ["mu", "theta"])]
    pub delta: Option<f64>,
    /// Constant mu.
    #[arg(long, conflicts_with = "theta")]
    pub mu: Option<f64>,
    /// mu_i = theta * nu / i.
    #[arg(long)]
    pub theta: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// JSON file with any of N, nu, delta, mu, theta, seed, steps, burn_in,
    /// sample_every, batches, replicas. Flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Total steps, burn-in included.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Defaults to 10 N / nu.
    #[arg(long)]
    pub burn_in: Option<u64>,
    /// Defaults to N / 10.
    #[arg(long)]
    pub sample_every: Option<u64>,
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub replicas: Option<u64>,
}

/// Failure split by exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

pub type CmdResult<T> = std::result::Result<T, Failure>;

pub struct Context {
    pub format: Option<Format>,
    pub verbose: bool,
}

impl Context {
    pub fn note(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("domino-lab: {}", msg.as_ref());
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Context { format: cli.format, verbose: cli.verbose };
    let rendered = match cli.command {
        Command::Motzkin { m_max, theta, mode } => commands::motzkin(&ctx, m_max, theta.as_deref(), mode),
        Command::Solve { theta, lattice, i_max } => commands::solve(&ctx, theta, lattice, i_max),
        Command::SolveGeneral { model, i_max, tol, max_iter } => {
            commands::solve_general(&ctx, &model, i_max, tol, max_iter)
        }
        Command::Simulate(args) => commands::simulate(&ctx, &args),
        Command::Compare { theory, simulation } => commands::compare(&ctx, &theory, &simulation),
        Command::Asym { i_from, i_to } => commands::asym(&ctx, i_from, i_to),
    };
    let result = rendered.and_then(|text| output::emit(&text, cli.output.as_deref()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        super::Cli::command().debug_assert();
    }
}
