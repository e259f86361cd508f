//! Command-line entry point: synthesis, ingestion, training, evaluation,
//! transfer, and plotting, all replayable from recorded run manifests.

mod commands;
mod manifest;

use clap::{Parser, Subcommand};

use rdb::error::Error;

#[derive(Parser)]
#[command(name = "rdb", version, about = "Modular trajectory prediction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene dataset (crowd corridor or landmark task).
    Synth(commands::synth::SynthArgs),
    /// Validate a dataset manifest and report its statistics.
    Ingest(commands::ingest::IngestArgs),
    /// Train model stages (r, d, b, or the full pipeline).
    Train(commands::train::TrainArgs),
    /// Evaluate a trained run or a baseline on datasets.
    Eval(commands::eval::EvalArgs),
    /// Recombine source/target modules and evaluate the transfer.
    Transfer(commands::transfer::TransferArgs),
    /// Emit trajectory overlay SVGs for evaluation windows.
    Plot(commands::plot::PlotArgs),
    /// Re-execute a recorded run manifest into a fresh directory.
    Replay(commands::replay::ReplayArgs),
}

/// Exit codes: 0 success, 1 runtime/numeric failure, 2 configuration or
/// validation failure.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::DuplicateRecord { .. }
        | Error::CoordinateRange { .. }
        | Error::Index(_)
        | Error::Dimension { .. }
        | Error::Compatibility(_)
        | Error::Dependency(_)
        | Error::Alignment(_)
        | Error::Checkpoint { .. } => 2,
        Error::Io { .. } | Error::Numeric { .. } | Error::Generation(_) | Error::Image(_) => 1,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Ingest(args) => commands::ingest::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Transfer(args) => commands::transfer::run(args),
        Command::Plot(args) => commands::plot::run(args),
        Command::Replay(args) => commands::replay::run(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
