use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use rdb::error::{Error, Result};
use rdb::eval::{run_transfer, EvalOptions, TransferMode, TransferSetup};
use rdb::train::PipelineConfig;

use crate::commands::{dataset_inputs, load_scenes};
use crate::manifest::RunManifest;

#[derive(Debug, Args)]
pub struct TransferArgs {
    /// Transfer-matrix row: random | targ-s | targ-rdb | src-s | src-rdb |
    /// untrained-d | unsup-rd | weak-d.
    #[arg(long)]
    pub mode: String,
    /// Source run directory (required by src-* and frozen-predictor modes).
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Target suite dataset manifests.
    #[arg(long, num_args = 1.., required = true)]
    pub target: Vec<PathBuf>,
    /// Target pipeline config JSON (training hyperparameters + holdout).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out/transfer")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub holdout: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolvedTransfer {
    pub mode: String,
    pub source: Option<PathBuf>,
    pub target: Vec<PathBuf>,
    pub pipeline: PipelineConfig,
    pub tau: f64,
}

pub fn execute(resolved: &ResolvedTransfer, out: &PathBuf) -> Result<()> {
    let mode = TransferMode::parse(&resolved.mode)?;
    let scenes = load_scenes(&resolved.target, &resolved.pipeline.clahe)?;
    let opts = EvalOptions {
        seed: resolved.pipeline.seed,
        tau: resolved.tau,
        ..EvalOptions::default()
    };
    let setup = TransferSetup {
        source_run: resolved.source.as_deref(),
        target_scenes: &scenes,
        target_cfg: &resolved.pipeline,
        out_dir: out,
        opts,
    };
    let outcome = run_transfer(mode, &setup)?;
    if mode.freezes_source_predictor() && !outcome.source_predictor_unchanged() {
        return Err(Error::Numeric {
            context: "transfer".into(),
            msg: "frozen source predictor checkpoint changed during the run".into(),
        });
    }
    println!(
        "mode {}: ade {:.6} fde {:.6} over {} windows -> {}",
        outcome.mode,
        outcome.report.ade,
        outcome.report.fde,
        outcome.report.n_trajectories,
        outcome.report_path.display()
    );
    Ok(())
}

pub fn run(args: TransferArgs) -> Result<()> {
    TransferMode::parse(&args.mode)?;
    let mut pipeline = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::with_seed("transfer", args.seed.unwrap_or(0)),
    };
    if let Some(seed) = args.seed {
        let reseeded = PipelineConfig::with_seed(&pipeline.name.clone(), seed);
        pipeline.seed = seed;
        pipeline.stage_r.seed = reseeded.stage_r.seed;
        pipeline.stage_d.seed = reseeded.stage_d.seed;
        pipeline.stage_b.seed = reseeded.stage_b.seed;
    }
    if let Some(holdout) = args.holdout {
        pipeline.holdout = Some(holdout);
    }
    let resolved = ResolvedTransfer {
        mode: args.mode.clone(),
        source: args.source.clone(),
        target: args.target.clone(),
        pipeline,
        tau: args.tau,
    };
    let mut inputs = dataset_inputs(&resolved.target)?;
    if let Some(source) = &resolved.source {
        for name in ["r.ckpt", "d.ckpt", "b.ckpt"] {
            let p = source.join(name);
            if p.exists() {
                inputs.push(p);
            }
        }
    }
    RunManifest::new(
        "transfer",
        serde_json::to_value(&resolved).expect("transfer config serializes"),
        resolved.pipeline.seed,
        &inputs,
        &["report.csv"],
    )?
    .write(&args.out)?;
    execute(&resolved, &args.out)
}
