//! Cross-task transfer: recombine encoder, dynamics, and predictor
//! checkpoints across source and target tasks, from fully supervised target
//! training down to frozen-predictor transfer with unsupervised target-side
//! modules.

use std::fs;
use std::path::{Path, PathBuf};

use crate::dynamics::{ConditioningMode, DynamicsConfig, GlobalDynamics};
use crate::encoder::SpatialEncoder;
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_suite, EvalOptions, MetricReport, PreparedEval, RandomModel, RdbModel,
    TrajectoryModel,
};
use crate::predictor::{rollout_agent, InputConfig, LocalPredictor, NullContext, PredictorConfig};
use crate::rng::SeedRng;
use crate::scene::Scene;
use crate::train::{
    file_sha256, train_dynamics, train_encoder_from, train_pipeline, train_predictor,
    ModuleCheckpoint, PipelineConfig, PipelinePaths, PredictorUpstream,
};

/// The transfer matrix rows: which modules come from the source task, which
/// are trained on the target, and how.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferMode {
    /// Uniform-random positions, no model at all.
    Random,
    /// B trained on target positions only (supervised target baseline).
    TargetPositionsOnly,
    /// Full supervised target pipeline: B(s,l,h) + R + D on the target.
    TargetFull,
    /// Frozen source B(s), no target-side training.
    SourcePositionsOnly,
    /// Frozen source B(s,l,h) with source R and D.
    SourceFull,
    /// Frozen source B(s,l,h), target-trained R, untrained (seeded random) D.
    UntrainedDynamics,
    /// Frozen source B(s,l,h), target-trained R, D trained on target images
    /// with noise conditioning (no position labels anywhere).
    UnsupervisedDynamics,
    /// Frozen source B(s,l,h), target-trained R, D trained on target with
    /// positions (weak supervision: labels touch only D).
    WeaklySupervised,
}

impl TransferMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(TransferMode::Random),
            "targ-s" => Ok(TransferMode::TargetPositionsOnly),
            "targ-rdb" => Ok(TransferMode::TargetFull),
            "src-s" => Ok(TransferMode::SourcePositionsOnly),
            "src-rdb" => Ok(TransferMode::SourceFull),
            "untrained-d" => Ok(TransferMode::UntrainedDynamics),
            "unsup-rd" => Ok(TransferMode::UnsupervisedDynamics),
            "weak-d" => Ok(TransferMode::WeaklySupervised),
            other => Err(Error::Config(format!(
                "unknown transfer mode `{other}` (expected one of random, targ-s, targ-rdb, \
                 src-s, src-rdb, untrained-d, unsup-rd, weak-d)"
            ))),
        }
    }

    pub fn slug(&self) -> &'static str {
        match self {
            TransferMode::Random => "random",
            TransferMode::TargetPositionsOnly => "targ-s",
            TransferMode::TargetFull => "targ-rdb",
            TransferMode::SourcePositionsOnly => "src-s",
            TransferMode::SourceFull => "src-rdb",
            TransferMode::UntrainedDynamics => "untrained-d",
            TransferMode::UnsupervisedDynamics => "unsup-rd",
            TransferMode::WeaklySupervised => "weak-d",
        }
    }

    /// Modes that reuse the source predictor without touching it.
    pub fn freezes_source_predictor(&self) -> bool {
        matches!(
            self,
            TransferMode::SourcePositionsOnly
                | TransferMode::SourceFull
                | TransferMode::UntrainedDynamics
                | TransferMode::UnsupervisedDynamics
                | TransferMode::WeaklySupervised
        )
    }

    fn needs_source(&self) -> bool {
        self.freezes_source_predictor()
    }
}

/// Inputs to a transfer run.
pub struct TransferSetup<'a> {
    /// Source run directory holding `{r,d,b}.ckpt` (None for target-only
    /// modes).
    pub source_run: Option<&'a Path>,
    /// The target suite; the holdout in `target_cfg` selects the evaluation
    /// scene, the rest form the target training pool.
    pub target_scenes: &'a [Scene],
    pub target_cfg: &'a PipelineConfig,
    pub out_dir: &'a Path,
    pub opts: EvalOptions,
}

/// What a transfer run produced, including the freeze-verification hashes of
/// the source predictor checkpoint.
#[derive(Debug, Clone)]
pub struct TransferOutcome {
    pub mode: &'static str,
    pub report: MetricReport,
    pub report_path: PathBuf,
    pub source_b_hash_before: Option<String>,
    pub source_b_hash_after: Option<String>,
}

impl TransferOutcome {
    pub fn source_predictor_unchanged(&self) -> bool {
        self.source_b_hash_before == self.source_b_hash_after
    }
}

/// A predictor evaluated without any context (position-only input config).
pub struct PredictorOnlyModel<'a> {
    pub predictor: &'a LocalPredictor,
}

impl TrajectoryModel for PredictorOnlyModel<'_> {
    fn name(&self) -> String {
        format!("b-{}", self.predictor.cfg.input_config)
    }

    fn predict(
        &self,
        window: &crate::data::TrajectoryWindow,
        _prep: &PreparedEval,
        rng: &mut SeedRng,
    ) -> Result<Vec<(f64, f64)>> {
        let (pos, _) = rollout_agent(
            self.predictor,
            window.obs(),
            &mut NullContext,
            window.pred_len(),
            crate::predictor::RolloutMode::Mean,
            rng,
        )?;
        let _ = pos.len();
        Ok(pos)
    }
}

fn eval_scenes(cfg: &PipelineConfig, scenes: &[Scene]) -> Result<Vec<Scene>>
where
    Scene: Clone,
{
    match cfg.holdout {
        Some(i) => {
            if i >= scenes.len() {
                return Err(Error::Index(format!(
                    "holdout {i} out of range for {} scenes",
                    scenes.len()
                )));
            }
            Ok(vec![scenes[i].clone()])
        }
        None => Ok(scenes.to_vec()),
    }
}

fn load_source_predictor(source_run: Option<&Path>, expect: InputConfig) -> Result<(LocalPredictor, PathBuf)> {
    let dir = source_run.ok_or_else(|| {
        Error::Dependency("this transfer mode needs --source pointing at a source run".into())
    })?;
    let paths = PipelinePaths::in_dir(dir);
    if !paths.b.exists() {
        return Err(Error::Dependency(format!(
            "missing source predictor checkpoint {}",
            paths.b.display()
        )));
    }
    let predictor = ModuleCheckpoint::load(&paths.b)?.into_predictor()?;
    if predictor.cfg.input_config != expect {
        return Err(Error::Compatibility(format!(
            "source predictor was trained with inputs `{}`, this mode needs `{}`",
            predictor.cfg.input_config, expect
        )));
    }
    Ok((predictor, paths.b))
}

fn check_bundle_compat(
    predictor: &PredictorConfig,
    encoder: &SpatialEncoder,
    dynamics: &GlobalDynamics,
) -> Result<()> {
    if predictor.input_config.uses_latent() && predictor.latent_dim != encoder.cfg.latent_dim {
        return Err(Error::Compatibility(format!(
            "frozen predictor expects latents of dim {}, target encoder emits {}",
            predictor.latent_dim, encoder.cfg.latent_dim
        )));
    }
    if predictor.input_config.uses_summary() && predictor.summary_dim != dynamics.cfg.hidden_dim {
        return Err(Error::Compatibility(format!(
            "frozen predictor expects summaries of dim {}, dynamics hidden is {}",
            predictor.summary_dim, dynamics.cfg.hidden_dim
        )));
    }
    Ok(())
}

/// Execute one transfer-matrix row and evaluate it on the target's held-out
/// scene. Writes `report.csv` (and any target-side checkpoints) under
/// `out_dir`.
pub fn run_transfer(mode: TransferMode, setup: &TransferSetup<'_>) -> Result<TransferOutcome> {
    fs::create_dir_all(setup.out_dir).map_err(|e| Error::io(setup.out_dir, e))?;
    let cfg = setup.target_cfg;
    let window = cfg.window;
    let evals = eval_scenes(cfg, setup.target_scenes)?;
    let (_r_scenes, db_scenes) = cfg.split(setup.target_scenes)?;

    let source_b_path = if mode.needs_source() {
        let dir = setup.source_run.ok_or_else(|| {
            Error::Dependency("this transfer mode needs --source pointing at a source run".into())
        })?;
        Some(PipelinePaths::in_dir(dir).b)
    } else {
        None
    };
    let hash_before = source_b_path
        .as_ref()
        .map(file_sha256)
        .transpose()?;

    let report = match mode {
        TransferMode::Random => evaluate_suite(&RandomModel, &evals, &window, &setup.opts)?,
        TransferMode::TargetPositionsOnly => {
            let pred_cfg = PredictorConfig {
                hidden_dim: cfg.predictor_hidden,
                input_config: InputConfig::S,
                latent_dim: 0,
                summary_dim: 0,
            };
            let (model, _) = train_predictor(
                &db_scenes,
                PredictorUpstream {
                    encoders: None,
                    dynamics: None,
                },
                pred_cfg,
                cfg.n_max,
                cfg.window.train_len,
                &cfg.stage_b,
            )?;
            ModuleCheckpoint::Predictor {
                cfg: pred_cfg,
                seed: cfg.stage_b.seed,
                params: model.params.clone(),
            }
            .save(setup.out_dir.join("b.ckpt"))?;
            evaluate_suite(&PredictorOnlyModel { predictor: &model }, &evals, &window, &setup.opts)?
        }
        TransferMode::TargetFull => {
            let bundle = train_pipeline(setup.target_scenes, cfg, setup.out_dir, false)?;
            let model = RdbModel::new(
                &bundle.encoder,
                &bundle.dynamics,
                &bundle.predictor,
                setup.opts,
            )?;
            evaluate_suite(&model, &evals, &window, &setup.opts)?
        }
        TransferMode::SourcePositionsOnly => {
            let (predictor, _) = load_source_predictor(setup.source_run, InputConfig::S)?;
            evaluate_suite(
                &PredictorOnlyModel {
                    predictor: &predictor,
                },
                &evals,
                &window,
                &setup.opts,
            )?
        }
        TransferMode::SourceFull => {
            let dir = setup.source_run.unwrap();
            let paths = PipelinePaths::in_dir(dir);
            let encoder = ModuleCheckpoint::load(&paths.r)?.into_encoder()?;
            let dynamics = ModuleCheckpoint::load(&paths.d)?.into_dynamics()?;
            let (predictor, _) = load_source_predictor(setup.source_run, InputConfig::SLH)?;
            check_bundle_compat(&predictor.cfg, &encoder, &dynamics)?;
            let model = RdbModel::new(&encoder, &dynamics, &predictor, setup.opts)?;
            evaluate_suite(&model, &evals, &window, &setup.opts)?
        }
        TransferMode::UntrainedDynamics
        | TransferMode::UnsupervisedDynamics
        | TransferMode::WeaklySupervised => {
            let (predictor, _) = load_source_predictor(setup.source_run, InputConfig::SLH)?;
            // "Re-train only the unsupervised spatial encoding": every
            // target-side encoder warm-starts from the source run's encoder
            // and fine-tunes on one target environment's unlabeled images,
            // which keeps the latent semantics the frozen predictor was
            // trained against.
            let source_paths = PipelinePaths::in_dir(setup.source_run.unwrap());
            let source_encoder = ModuleCheckpoint::load(&source_paths.r)?.into_encoder()?;
            if source_encoder.cfg != cfg.encoder {
                return Err(Error::Compatibility(format!(
                    "target encoder config {:?} differs from source {:?}",
                    cfg.encoder, source_encoder.cfg
                )));
            }
            let r_images: Vec<_> = evals
                .iter()
                .flat_map(|s| s.frames().iter().cloned())
                .collect();
            let (encoder, _) =
                train_encoder_from(source_encoder.clone(), &r_images, &cfg.mmd, &cfg.stage_r)?;
            ModuleCheckpoint::Encoder {
                cfg: cfg.encoder,
                seed: cfg.stage_r.seed,
                params: encoder.params.clone(),
            }
            .save(setup.out_dir.join("r.ckpt"))?;

            let conditioning = match mode {
                TransferMode::UnsupervisedDynamics => ConditioningMode::Noise {
                    seed: cfg.seed ^ 0x6e6f697365,
                },
                _ => ConditioningMode::Positions,
            };
            let dyn_cfg = DynamicsConfig {
                latent_dim: cfg.encoder.latent_dim,
                hidden_dim: cfg.dynamics_hidden,
                components: cfg.mixture_components,
                n_max: cfg.n_max,
                conditioning,
            };
            let dynamics = match mode {
                TransferMode::UntrainedDynamics => GlobalDynamics::new(dyn_cfg, cfg.stage_d.seed),
                _ => {
                    let mut pool_encoders = Vec::with_capacity(db_scenes.len());
                    for scene in &db_scenes {
                        let images: Vec<_> = scene.frames().to_vec();
                        let (enc, _) = train_encoder_from(
                            source_encoder.clone(),
                            &images,
                            &cfg.mmd,
                            &cfg.stage_r,
                        )?;
                        pool_encoders.push(enc);
                    }
                    let encoder_refs: Vec<&SpatialEncoder> = pool_encoders.iter().collect();
                    let (d, _) = train_dynamics(
                        &db_scenes,
                        &encoder_refs,
                        dyn_cfg,
                        cfg.window.train_len,
                        &cfg.stage_d,
                    )?;
                    d
                }
            };
            ModuleCheckpoint::Dynamics {
                cfg: dyn_cfg,
                seed: cfg.stage_d.seed,
                params: dynamics.params.clone(),
            }
            .save(setup.out_dir.join("d.ckpt"))?;

            check_bundle_compat(&predictor.cfg, &encoder, &dynamics)?;
            let model = RdbModel::new(&encoder, &dynamics, &predictor, setup.opts)?;
            evaluate_suite(&model, &evals, &window, &setup.opts)?
        }
    };

    let hash_after = source_b_path
        .as_ref()
        .map(file_sha256)
        .transpose()?;
    let mut report = report;
    for row in &mut report.per_dataset {
        row.mode = mode.slug().to_string();
    }
    report.mode = mode.slug().to_string();
    let report_path = setup.out_dir.join("report.csv");
    fs::write(&report_path, report.to_csv()).map_err(|e| Error::io(&report_path, e))?;

    Ok(TransferOutcome {
        mode: mode.slug(),
        report,
        report_path,
        source_b_hash_before: hash_before,
        source_b_hash_after: hash_after,
    })
}
