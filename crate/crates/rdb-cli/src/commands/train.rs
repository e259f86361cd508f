use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use rdb::dynamics::ConditioningMode;
use rdb::error::{Error, Result};
use rdb::frame::ImageFrame;
use rdb::predictor::InputConfig;
use rdb::train::{
    history_csv, train_dynamics, train_encoder, train_pipeline, train_predictor,
    ModuleCheckpoint, PipelineConfig, PipelinePaths, PredictorUpstream, Stage,
};

use crate::commands::{dataset_inputs, load_scenes};
use crate::manifest::RunManifest;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Stage to train: r | d | b | all.
    pub stage: String,
    /// Pipeline config JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifests (the training suite).
    #[arg(long, num_args = 1.., required = true)]
    pub data: Vec<PathBuf>,
    #[arg(long, default_value = "out/run")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Held-out environment index for the leave-one-out protocol.
    #[arg(long)]
    pub holdout: Option<usize>,
    /// Predictor inputs: s | sl | sh | slh.
    #[arg(long)]
    pub inputs: Option<String>,
    /// Dynamics conditioning: positions | noise | zeros.
    #[arg(long)]
    pub conditioning: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub chunk_stride: Option<usize>,
    /// Reuse checkpoints of already-completed stages in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageSelect {
    R,
    D,
    B,
    All,
}

impl StageSelect {
    fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "r" => Ok(StageSelect::R),
            "d" => Ok(StageSelect::D),
            "b" => Ok(StageSelect::B),
            "all" => Ok(StageSelect::All),
            other => Err(Error::Config(format!(
                "unknown stage `{other}` (expected r, d, b, or all)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolvedTrain {
    pub stage: StageSelect,
    pub pipeline: PipelineConfig,
    pub data: Vec<PathBuf>,
    pub resume: bool,
}

pub fn resolve(args: &TrainArgs) -> Result<ResolvedTrain> {
    let stage = StageSelect::parse(&args.stage)?;
    let mut pipeline = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::with_seed("run", args.seed.unwrap_or(0)),
    };
    if let Some(seed) = args.seed {
        let name = pipeline.name.clone();
        let reseeded = PipelineConfig::with_seed(&name, seed);
        pipeline.seed = seed;
        pipeline.stage_r.seed = reseeded.stage_r.seed;
        pipeline.stage_d.seed = reseeded.stage_d.seed;
        pipeline.stage_b.seed = reseeded.stage_b.seed;
    }
    if let Some(holdout) = args.holdout {
        pipeline.holdout = Some(holdout);
    }
    if let Some(inputs) = &args.inputs {
        pipeline.input_config = InputConfig::parse(inputs)?;
    }
    if let Some(conditioning) = &args.conditioning {
        pipeline.conditioning = match conditioning.to_ascii_lowercase().as_str() {
            "positions" => ConditioningMode::Positions,
            "noise" => ConditioningMode::Noise {
                seed: pipeline.seed ^ 0x6e6f697365,
            },
            "zeros" => ConditioningMode::Zeros,
            other => {
                return Err(Error::Config(format!(
                    "unknown conditioning `{other}` (expected positions, noise, or zeros)"
                )))
            }
        };
    }
    let stages: Vec<&mut rdb::train::StageConfig> = match stage {
        StageSelect::R => vec![&mut pipeline.stage_r],
        StageSelect::D => vec![&mut pipeline.stage_d],
        StageSelect::B => vec![&mut pipeline.stage_b],
        StageSelect::All => vec![
            &mut pipeline.stage_r,
            &mut pipeline.stage_d,
            &mut pipeline.stage_b,
        ],
    };
    for s in stages {
        if let Some(lr) = args.lr {
            s.optim.learning_rate = lr;
        }
        if let Some(batch) = args.batch_size {
            s.batch_size = batch;
        }
        if let Some(epochs) = args.epochs {
            s.epochs = epochs;
        }
        if let Some(clip) = args.grad_clip {
            s.grad_clip = clip;
        }
        if let Some(tau) = args.tau {
            s.tau = tau;
        }
        if let Some(stride) = args.chunk_stride {
            s.chunk_stride = stride;
        }
        s.validate()?;
    }
    Ok(ResolvedTrain {
        stage,
        pipeline,
        data: args.data.clone(),
        resume: args.resume,
    })
}

pub fn execute(resolved: &ResolvedTrain, out: &PathBuf) -> Result<()> {
    let cfg = &resolved.pipeline;
    let scenes = load_scenes(&resolved.data, &cfg.clahe)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let paths = PipelinePaths::in_dir(out);
    match resolved.stage {
        StageSelect::All => {
            let bundle = train_pipeline(&scenes, cfg, out, resolved.resume)?;
            println!(
                "trained pipeline: {} {} {}",
                bundle.paths.r.display(),
                bundle.paths.d.display(),
                bundle.paths.b.display()
            );
        }
        StageSelect::R => {
            // One encoder per environment: the first training-pool scene
            // trains a base from the seed, every other scene (including the
            // held-out one, saved as r.ckpt) re-trains a copy of that base
            // on its own images.
            let (r_scenes, db_scenes) = cfg.split(&scenes)?;
            let mut history_all = Vec::new();
            let mut base: Option<rdb::encoder::SpatialEncoder> = None;
            let mut train_one = |images: &[ImageFrame],
                                 path: &std::path::Path,
                                 base: Option<&rdb::encoder::SpatialEncoder>|
             -> rdb::error::Result<rdb::encoder::SpatialEncoder> {
                let (model, mut history) = match base {
                    Some(b) => {
                        rdb::train::train_encoder_from(b.clone(), images, &cfg.mmd, &cfg.stage_r)?
                    }
                    None => train_encoder(images, cfg.encoder, &cfg.mmd, &cfg.stage_r)?,
                };
                ModuleCheckpoint::Encoder {
                    cfg: cfg.encoder,
                    seed: cfg.stage_r.seed,
                    params: model.params.clone(),
                }
                .save(path)?;
                history_all.append(&mut history);
                Ok(model)
            };
            for (&idx, scene) in cfg.pool_indices(scenes.len()).iter().zip(&db_scenes) {
                let enc = train_one(scene.frames(), &paths.r_env(idx), base.as_ref())?;
                if base.is_none() {
                    base = Some(enc);
                }
            }
            if cfg.holdout.is_none() {
                std::fs::copy(paths.r_env(0), &paths.r)
                    .map_err(|e| Error::io(&paths.r, e))?;
            } else {
                train_one(r_scenes[0].frames(), &paths.r, base.as_ref())?;
            }
            let renumbered: rdb::train::History = history_all
                .into_iter()
                .enumerate()
                .map(|(i, (_, l))| (i as u64, l))
                .collect();
            write_history(&paths.history, Stage::R, &renumbered)?;
            println!("trained stage r: {}", paths.r.display());
        }
        StageSelect::D => {
            let (_, db_scenes) = cfg.split(&scenes)?;
            let pool_encoders = load_pool_encoders(cfg, &paths, scenes.len())?;
            let encoder_refs: Vec<&rdb::encoder::SpatialEncoder> =
                pool_encoders.iter().collect();
            let (model, history) = train_dynamics(
                &db_scenes,
                &encoder_refs,
                cfg.dynamics_config(),
                cfg.window.train_len,
                &cfg.stage_d,
            )?;
            ModuleCheckpoint::Dynamics {
                cfg: cfg.dynamics_config(),
                seed: cfg.stage_d.seed,
                params: model.params,
            }
            .save(&paths.d)?;
            write_history(&paths.history, Stage::D, &history)?;
            println!("trained stage d: {}", paths.d.display());
        }
        StageSelect::B => {
            let pred_cfg = cfg.predictor_config();
            let needs_encoder =
                pred_cfg.input_config.uses_latent() || pred_cfg.input_config.uses_summary();
            let needs_dynamics = pred_cfg.input_config.uses_summary();
            let pool_encoders = if needs_encoder {
                Some(load_pool_encoders(cfg, &paths, scenes.len())?)
            } else {
                None
            };
            let dynamics = if needs_dynamics {
                if !paths.d.exists() {
                    return Err(Error::Dependency(format!(
                        "stage b with inputs `{}` needs {}",
                        pred_cfg.input_config,
                        paths.d.display()
                    )));
                }
                Some(ModuleCheckpoint::load(&paths.d)?.into_dynamics()?)
            } else {
                None
            };
            let (_, db_scenes) = cfg.split(&scenes)?;
            let encoder_refs: Option<Vec<&rdb::encoder::SpatialEncoder>> =
                pool_encoders.as_ref().map(|v| v.iter().collect());
            let (model, history) = train_predictor(
                &db_scenes,
                PredictorUpstream {
                    encoders: encoder_refs.as_deref(),
                    dynamics: dynamics.as_ref(),
                },
                pred_cfg,
                cfg.n_max,
                cfg.window.train_len,
                &cfg.stage_b,
            )?;
            ModuleCheckpoint::Predictor {
                cfg: pred_cfg,
                seed: cfg.stage_b.seed,
                params: model.params,
            }
            .save(&paths.b)?;
            write_history(&paths.history, Stage::B, &history)?;
            println!("trained stage b: {}", paths.b.display());
        }
    }
    Ok(())
}

/// Load the per-environment encoder checkpoints the dynamic stages consume.
fn load_pool_encoders(
    cfg: &PipelineConfig,
    paths: &PipelinePaths,
    n_scenes: usize,
) -> Result<Vec<rdb::encoder::SpatialEncoder>> {
    let mut out = Vec::new();
    for idx in cfg.pool_indices(n_scenes) {
        let path = if cfg.holdout.is_none() && idx == 0 {
            paths.r.clone()
        } else {
            paths.r_env(idx)
        };
        if !path.exists() {
            return Err(Error::Dependency(format!(
                "missing encoder checkpoint {} (train stage r first)",
                path.display()
            )));
        }
        out.push(ModuleCheckpoint::load(&path)?.into_encoder()?);
    }
    Ok(out)
}

fn write_history(path: &PathBuf, stage: Stage, history: &rdb::train::History) -> Result<()> {
    let mut csv = String::from("stage,step,loss\n");
    csv.push_str(&history_csv(stage, history));
    std::fs::write(path, csv).map_err(|e| Error::io(path, e))
}

pub fn run(args: TrainArgs) -> Result<()> {
    let resolved = resolve(&args)?;
    let inputs = dataset_inputs(&resolved.data)?;
    RunManifest::new(
        "train",
        serde_json::to_value(&resolved).expect("train config serializes"),
        resolved.pipeline.seed,
        &inputs,
        &["r.ckpt", "d.ckpt", "b.ckpt", "history.csv"],
    )?
    .write(&args.out)?;
    execute(&resolved, &args.out)
}
