//! `fptlab`: first-passage analytics, conditioned diffusions, and Monte
//! Carlo verification from the command line.
//!
//! Exit codes: 0 success, 1 a verification ran and failed its criterion,
//! 2 invalid configuration or an execution error.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};

use commands::Outcome;

#[derive(Parser)]
#[command(
    name = "fptlab",
    version,
    about = "Closed-form first-passage analytics, Doob-conditioned diffusions, \
             and Monte Carlo verification for BM, tanh-drift and taboo processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a closed-form quantity on an (x, t) grid
    Eval(commands::EvalArgs),
    /// Run an ensemble; writes OUT.summary.json and OUT.fpt.csv beside --out OUT
    Simulate(commands::SimulateArgs),
    /// Simulate an ensemble and test it against its closed-form law
    Verify(commands::VerifyArgs),
    /// Check every closed-form drift branch against an independent transcription
    TableCheck(commands::TableCheckArgs),
    /// Emit the tanh-drift vs conditioned-BM drift comparison curves
    Fig1(commands::Fig1Args),
    /// Check that mutually inverse conditionings have reciprocal Q functions
    Reciprocity(commands::ReciprocityArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    fptlab::sim::configure_threads_from_env();

    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Eval(args) => commands::run_eval(args),
        Command::Simulate(args) => commands::run_simulate(args),
        Command::Verify(args) => commands::run_verify(args),
        Command::TableCheck(args) => commands::run_table_check(args),
        Command::Fig1(args) => commands::run_fig1(args),
        Command::Reciprocity(args) => commands::run_reciprocity(args),
    };

    let code = match result {
        Ok(Outcome::Pass) => 0,
        Ok(Outcome::Fail) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    };
    std::process::exit(code);
}
