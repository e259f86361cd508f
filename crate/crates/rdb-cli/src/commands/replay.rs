use std::path::PathBuf;

use clap::Args;

use rdb::error::{Error, Result};

use crate::commands;
use crate::manifest::RunManifest;

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// A run manifest written by a previous command.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Fresh output directory for the replay.
    #[arg(long)]
    pub out: PathBuf,
}

/// Re-execute the recorded command with its resolved configuration. The
/// replay writes the same manifest into the new directory, so replays of
/// replays keep working.
pub fn run(args: ReplayArgs) -> Result<()> {
    let manifest = RunManifest::load(&args.manifest)?;
    let mut copy = manifest.clone();
    copy.input_hashes = manifest.input_hashes.clone();
    copy.write(&args.out)?;
    let config = manifest.config.clone();
    fn from_json<T: serde::de::DeserializeOwned>(
        what: &str,
        v: serde_json::Value,
    ) -> Result<T> {
        serde_json::from_value(v).map_err(|e| Error::Config(format!("manifest {what}: {e}")))
    }
    match manifest.command.as_str() {
        "synth" => {
            let resolved: commands::synth::ResolvedSynth = from_json("synth config", config)?;
            commands::synth::execute(&resolved, &args.out)
        }
        "ingest" => {
            let resolved: commands::ingest::ResolvedIngest = from_json("ingest config", config)?;
            commands::ingest::execute(&resolved, Some(&args.out))
        }
        "train" => {
            let resolved: commands::train::ResolvedTrain = from_json("train config", config)?;
            commands::train::execute(&resolved, &args.out)
        }
        "eval" => {
            let resolved: commands::eval::ResolvedEval = from_json("eval config", config)?;
            commands::eval::execute(&resolved, &args.out)
        }
        "transfer" => {
            let resolved: commands::transfer::ResolvedTransfer =
                from_json("transfer config", config)?;
            commands::transfer::execute(&resolved, &args.out)
        }
        "plot" => {
            let resolved: commands::plot::ResolvedPlot = from_json("plot config", config)?;
            commands::plot::execute(&resolved, &args.out)
        }
        other => Err(Error::Config(format!(
            "manifest records unknown command `{other}`"
        ))),
    }
}
