use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use rdb::data::WindowConfig;
use rdb::error::{Error, Result};
use rdb::eval::{
    evaluate_suite, ConstantVelocityModel, EvalOptions, OracleModel, PredictorOnlyModel,
    RandomModel, RdbModel, TrajectoryModel,
};
use rdb::frame::ClaheConfig;
use rdb::train::PipelineBundle;

use crate::commands::{dataset_inputs, load_scenes};
use crate::manifest::RunManifest;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory holding {r,d,b}.ckpt; omit when using --baseline.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Baseline instead of a trained run: cv | random | oracle.
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long, num_args = 1.., required = true)]
    pub data: Vec<PathBuf>,
    #[arg(long, default_value = "out/eval")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub obs: usize,
    #[arg(long, default_value_t = 12)]
    pub pred: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Hold the last observed context through prediction.
    #[arg(long)]
    pub freeze_context: bool,
    /// Sampled best-of-N variant (the default scores the predicted mean).
    #[arg(long)]
    pub best_of: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub clahe_tiles: usize,
    #[arg(long, default_value_t = 2.0)]
    pub clahe_clip: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolvedEval {
    pub run: Option<PathBuf>,
    pub baseline: Option<String>,
    pub data: Vec<PathBuf>,
    pub window: WindowConfig,
    pub seed: u64,
    pub tau: f64,
    pub freeze_context: bool,
    pub best_of: Option<usize>,
    pub stride: usize,
    pub clahe: ClaheConfig,
}

pub fn execute(resolved: &ResolvedEval, out: &PathBuf) -> Result<()> {
    let scenes = load_scenes(&resolved.data, &resolved.clahe)?;
    let opts = EvalOptions {
        seed: resolved.seed,
        tau: resolved.tau,
        freeze_context: resolved.freeze_context,
        best_of: resolved.best_of,
        stride: resolved.stride,
    };
    let report = match (&resolved.baseline, &resolved.run) {
        (Some(name), _) => {
            let model: Box<dyn TrajectoryModel> = match name.as_str() {
                "cv" | "constant-velocity" => Box::new(ConstantVelocityModel),
                "random" => Box::new(RandomModel),
                "oracle" => Box::new(OracleModel),
                other => {
                    return Err(Error::Config(format!(
                        "unknown baseline `{other}` (expected cv, random, or oracle)"
                    )))
                }
            };
            evaluate_suite(model.as_ref(), &scenes, &resolved.window, &opts)?
        }
        (None, Some(run)) => {
            let bundle = PipelineBundle::load(run)?;
            if bundle.predictor.cfg.input_config.uses_latent()
                || bundle.predictor.cfg.input_config.uses_summary()
            {
                let model =
                    RdbModel::new(&bundle.encoder, &bundle.dynamics, &bundle.predictor, opts)?;
                evaluate_suite(&model, &scenes, &resolved.window, &opts)?
            } else {
                let model = PredictorOnlyModel {
                    predictor: &bundle.predictor,
                };
                evaluate_suite(&model, &scenes, &resolved.window, &opts)?
            }
        }
        (None, None) => {
            return Err(Error::Config(
                "eval needs either --run or --baseline".into(),
            ))
        }
    };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("report.csv");
    std::fs::write(&path, report.to_csv()).map_err(|e| Error::io(&path, e))?;
    println!(
        "{} windows: ade {:.6} fde {:.6} -> {}",
        report.n_trajectories,
        report.ade,
        report.fde,
        path.display()
    );
    Ok(())
}

pub fn run(args: EvalArgs) -> Result<()> {
    let resolved = ResolvedEval {
        run: args.run.clone(),
        baseline: args.baseline.clone(),
        data: args.data.clone(),
        window: WindowConfig {
            obs_len: args.obs,
            pred_len: args.pred,
            frame_period: 0.4,
            train_len: 8,
        },
        seed: args.seed,
        tau: args.tau,
        freeze_context: args.freeze_context,
        best_of: args.best_of,
        stride: args.stride,
        clahe: ClaheConfig {
            tiles: args.clahe_tiles,
            clip_limit: args.clahe_clip,
        },
    };
    resolved.window.validate()?;
    let mut inputs = dataset_inputs(&resolved.data)?;
    if let Some(run) = &resolved.run {
        for name in ["r.ckpt", "d.ckpt", "b.ckpt"] {
            let p = run.join(name);
            if p.exists() {
                inputs.push(p);
            }
        }
    }
    RunManifest::new(
        "eval",
        serde_json::to_value(&resolved).expect("eval config serializes"),
        resolved.seed,
        &inputs,
        &["report.csv"],
    )?
    .write(&args.out)?;
    execute(&resolved, &args.out)
}
