//! `qseq`: file-based pipelines for generating data, training quantum
//! sequence models and running benchmark sweeps.
//!
//! Exit codes: 0 on success, 2 for argument or input errors, 3 for numerical
//! failures (including a failed `gradcheck`).

mod commands;
mod config;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use qseq::QseqError;

#[derive(Debug, Parser)]
#[command(name = "qseq", version, about = "Train and benchmark recurrent quantum sequence models")]
struct Cli {
    /// key = value file supplying option defaults; flags on the command line win
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a trajectory from a process
    Generate(commands::GenerateArgs),
    /// Count (past, future) windows of a trajectory into a conditional table
    Counts(commands::CountsArgs),
    /// Fit a model to a conditional table
    Train(commands::TrainArgs),
    /// Score a trained model against a table or a process
    Eval(commands::EvalArgs),
    /// Compare exact, finite-difference and sampled gradients
    Gradcheck(commands::GradcheckArgs),
    /// Gradient magnitudes at random initializations
    Gradscan(commands::GradscanArgs),
    /// Train every (order, T, model, replica) cell of a grid
    Benchmark(commands::BenchmarkArgs),
}

/// A check that ran to completion but did not pass.
#[derive(Debug)]
pub struct Failure(pub String);

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Failure {}

fn command() -> clap::Command {
    Cli::command().mut_subcommands(|s| s.args_override_self(true))
}

/// Parses `args`, splicing config-file options in front of the subcommand's
/// own flags so that later (command-line) values override them.
fn parse(args: Vec<OsString>) -> Result<Cli, clap::Error> {
    let first = command().try_get_matches_from(&args)?;
    let Some((name, sub_matches)) = first.subcommand() else {
        return Cli::from_arg_matches(&first);
    };
    let Some(path) = sub_matches.get_one::<PathBuf>("config").or(first.get_one::<PathBuf>("config")) else {
        return Cli::from_arg_matches(&first);
    };
    let cmd = command();
    let sub = cmd.find_subcommand(name).expect("parsed subcommand exists");
    let extra = config::load(path)
        .and_then(|entries| config::to_args(&entries, sub))
        .map_err(|e| cmd.clone().error(clap::error::ErrorKind::InvalidValue, format!("{e:#}")))?;
    let at = args.iter().position(|a| a == name).expect("subcommand appears in argv");
    let mut spliced = args[..=at].to_vec();
    spliced.extend(extra);
    spliced.extend_from_slice(&args[at + 1..]);
    Cli::from_arg_matches(&command().try_get_matches_from(spliced)?)
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("QSEQ_THREADS") else { return Ok(()) };
    let n: usize = match value.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => bail!("QSEQ_THREADS must be a positive integer, found {value:?}"),
    };
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    init_threads()?;
    match &cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Counts(a) => commands::counts(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Gradscan(a) => commands::gradscan(a),
        Command::Benchmark(a) => commands::benchmark(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err.chain().any(|e| {
        e.is::<Failure>() || matches!(e.downcast_ref::<QseqError>(), Some(QseqError::Numerical(_)))
    });
    if numerical {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match parse(std::env::args_os().collect()) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
