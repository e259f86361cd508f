//! The full training pipeline: encoder, then dynamics, then predictor, with
//! the leave-one-out protocol. The encoder trains on the held-out
//! environment's images only (it is unsupervised), while the dynamic
//! components train on the remaining environments.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::WindowConfig;
use crate::dynamics::{ConditioningMode, DynamicsConfig, GlobalDynamics};
use crate::encoder::{EncoderConfig, MmdConfig, SpatialEncoder};
use crate::error::{Error, Result};
use crate::frame::{ClaheConfig, ImageFrame};
use crate::predictor::{InputConfig, LocalPredictor, PredictorConfig};
use crate::scene::Scene;
use crate::train::{
    history_csv, train_dynamics, train_encoder, train_encoder_from, train_predictor, History,
    ModuleCheckpoint, PredictorUpstream, Stage, StageConfig,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub name: String,
    pub seed: u64,
    pub n_max: usize,
    pub window: WindowConfig,
    pub clahe: ClaheConfig,
    pub encoder: EncoderConfig,
    pub mmd: MmdConfig,
    pub dynamics_hidden: usize,
    pub mixture_components: usize,
    pub conditioning: ConditioningMode,
    pub predictor_hidden: usize,
    pub input_config: InputConfig,
    /// Index of the held-out environment; None trains every stage on all
    /// scenes (single-environment mode).
    pub holdout: Option<usize>,
    pub stage_r: StageConfig,
    pub stage_d: StageConfig,
    pub stage_b: StageConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig::with_seed("run", 0)
    }
}

impl PipelineConfig {
    pub fn with_seed(name: &str, seed: u64) -> Self {
        let mut stage_r = StageConfig::for_stage(Stage::R);
        let mut stage_d = StageConfig::for_stage(Stage::D);
        let mut stage_b = StageConfig::for_stage(Stage::B);
        stage_r.seed = seed;
        stage_d.seed = seed.wrapping_add(1);
        stage_b.seed = seed.wrapping_add(2);
        PipelineConfig {
            name: name.to_string(),
            seed,
            n_max: 16,
            window: WindowConfig::default(),
            clahe: ClaheConfig::default(),
            encoder: EncoderConfig::default(),
            mmd: MmdConfig::default(),
            dynamics_hidden: 256,
            mixture_components: 5,
            conditioning: ConditioningMode::Positions,
            predictor_hidden: 64,
            input_config: InputConfig::SLH,
            holdout: None,
            stage_r,
            stage_d,
            stage_b,
        }
    }

    /// Desk-scale preset for the synthetic experiments.
    pub fn desk(name: &str, seed: u64) -> Self {
        let mut cfg = PipelineConfig::with_seed(name, seed);
        cfg.encoder = EncoderConfig::small();
        cfg.dynamics_hidden = 48;
        cfg.mixture_components = 3;
        cfg.predictor_hidden = 48;
        cfg
    }

    pub fn dynamics_config(&self) -> DynamicsConfig {
        DynamicsConfig {
            latent_dim: self.encoder.latent_dim,
            hidden_dim: self.dynamics_hidden,
            components: self.mixture_components,
            n_max: self.n_max,
            conditioning: self.conditioning,
        }
    }

    pub fn predictor_config(&self) -> PredictorConfig {
        PredictorConfig {
            hidden_dim: self.predictor_hidden,
            input_config: self.input_config,
            latent_dim: if self.input_config.uses_latent() {
                self.encoder.latent_dim
            } else {
                0
            },
            summary_dim: if self.input_config.uses_summary() {
                self.dynamics_hidden
            } else {
                0
            },
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!(
            "{}: {e}",
            path.display()
        )))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Indices of the training-pool scenes (everything except the holdout).
    pub fn pool_indices(&self, n_scenes: usize) -> Vec<usize> {
        match self.holdout {
            None => (0..n_scenes).collect(),
            Some(i) => (0..n_scenes).filter(|j| *j != i).collect(),
        }
    }

    /// Scenes each stage trains on, per the leave-one-out protocol.
    pub fn split<'a>(&self, scenes: &'a [Scene]) -> Result<(Vec<&'a Scene>, Vec<&'a Scene>)> {
        match self.holdout {
            None => Ok((scenes.iter().collect(), scenes.iter().collect())),
            Some(i) => {
                if i >= scenes.len() {
                    return Err(Error::Index(format!(
                        "holdout {i} out of range for {} scenes",
                        scenes.len()
                    )));
                }
                if scenes.len() < 2 {
                    return Err(Error::Config(
                        "leave-one-out needs at least two scenes".into(),
                    ));
                }
                let r_scenes = vec![&scenes[i]];
                let db_scenes = scenes
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, s)| s)
                    .collect();
                Ok((r_scenes, db_scenes))
            }
        }
    }
}

/// Checkpoint locations of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelinePaths {
    pub dir: PathBuf,
    pub r: PathBuf,
    pub d: PathBuf,
    pub b: PathBuf,
    pub history: PathBuf,
}

impl PipelinePaths {
    pub fn in_dir(dir: impl Into<PathBuf>) -> Self {
        let dir = dir.into();
        PipelinePaths {
            r: dir.join("r.ckpt"),
            d: dir.join("d.ckpt"),
            b: dir.join("b.ckpt"),
            history: dir.join("history.csv"),
            dir,
        }
    }

    /// Per-environment encoder checkpoint for a training-pool scene.
    pub fn r_env(&self, scene_index: usize) -> PathBuf {
        self.dir.join(format!("r_env{scene_index}.ckpt"))
    }
}

/// Trained models of one run.
pub struct PipelineBundle {
    pub encoder: SpatialEncoder,
    pub dynamics: GlobalDynamics,
    pub predictor: LocalPredictor,
    pub paths: PipelinePaths,
}

impl PipelineBundle {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let paths = PipelinePaths::in_dir(dir.as_ref());
        let encoder = ModuleCheckpoint::load(&paths.r)?.into_encoder()?;
        let dynamics = ModuleCheckpoint::load(&paths.d)?.into_dynamics()?;
        let predictor = ModuleCheckpoint::load(&paths.b)?.into_predictor()?;
        Ok(PipelineBundle {
            encoder,
            dynamics,
            predictor,
            paths,
        })
    }
}

/// Execute the staged pipeline, writing `{r,d,b}.ckpt` and `history.csv`
/// into `out_dir`. With `resume`, stages whose checkpoint already exists are
/// loaded instead of retrained.
pub fn train_pipeline(
    scenes: &[Scene],
    cfg: &PipelineConfig,
    out_dir: impl AsRef<Path>,
    resume: bool,
) -> Result<PipelineBundle> {
    if scenes.is_empty() {
        return Err(Error::Config("pipeline needs at least one scene".into()));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let paths = PipelinePaths::in_dir(out_dir);
    let (r_scenes, db_scenes) = cfg.split(scenes)?;
    let pool_indices = cfg.pool_indices(scenes.len());

    let mut histories: Vec<(Stage, History)> = Vec::new();

    // Stage R: the encoder is unsupervised and environment-specific. The
    // first training-pool environment trains a base encoder from the seed;
    // every other environment (including the held-out one) re-trains a copy
    // of that base on its own images. Warm-starting keeps latent semantics
    // aligned across environments while still specializing each encoder.
    let mut r_history: History = Vec::new();
    let mut train_r = |scene: &Scene,
                       path: &Path,
                       base: Option<&SpatialEncoder>|
     -> Result<SpatialEncoder> {
        if resume && path.exists() {
            return ModuleCheckpoint::load(path)?.into_encoder();
        }
        let images: Vec<ImageFrame> = scene.frames().to_vec();
        let (model, mut history) = match base {
            Some(base) => train_encoder_from(base.clone(), &images, &cfg.mmd, &cfg.stage_r)?,
            None => train_encoder(&images, cfg.encoder, &cfg.mmd, &cfg.stage_r)?,
        };
        ModuleCheckpoint::Encoder {
            cfg: cfg.encoder,
            seed: cfg.stage_r.seed,
            params: model.params.clone(),
        }
        .save(path)?;
        r_history.append(&mut history);
        Ok(model)
    };

    let mut pool_encoders: Vec<SpatialEncoder> = Vec::with_capacity(db_scenes.len());
    let mut base: Option<SpatialEncoder> = None;
    for (&idx, scene) in pool_indices.iter().zip(&db_scenes) {
        let enc = train_r(scene, &paths.r_env(idx), base.as_ref())?;
        if base.is_none() {
            base = Some(enc.clone());
        }
        pool_encoders.push(enc);
    }
    let encoder = if cfg.holdout.is_none() {
        // No holdout: the held-out role falls to the first scene's encoder.
        let enc = pool_encoders[0].clone();
        ModuleCheckpoint::Encoder {
            cfg: cfg.encoder,
            seed: cfg.stage_r.seed,
            params: enc.params.clone(),
        }
        .save(&paths.r)?;
        enc
    } else {
        train_r(r_scenes[0], &paths.r, base.as_ref())?
    };
    if !r_history.is_empty() {
        // Renumber steps across the per-environment runs.
        let renumbered = r_history
            .into_iter()
            .enumerate()
            .map(|(i, (_, loss))| (i as u64, loss))
            .collect();
        histories.push((Stage::R, renumbered));
    }
    let encoder_refs: Vec<&SpatialEncoder> = pool_encoders.iter().collect();

    // Stage D: latent transitions of the training pool.
    let dynamics = if resume && paths.d.exists() {
        ModuleCheckpoint::load(&paths.d)?.into_dynamics()?
    } else {
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
            params: model.params.clone(),
        }
        .save(&paths.d)?;
        histories.push((Stage::D, history));
        model
    };

    // Stage B: agent windows of the training pool.
    let predictor = if resume && paths.b.exists() {
        ModuleCheckpoint::load(&paths.b)?.into_predictor()?
    } else {
        let (model, history) = train_predictor(
            &db_scenes,
            PredictorUpstream {
                encoders: Some(&encoder_refs),
                dynamics: Some(&dynamics),
            },
            cfg.predictor_config(),
            cfg.n_max,
            cfg.window.train_len,
            &cfg.stage_b,
        )?;
        ModuleCheckpoint::Predictor {
            cfg: cfg.predictor_config(),
            seed: cfg.stage_b.seed,
            params: model.params.clone(),
        }
        .save(&paths.b)?;
        histories.push((Stage::B, history));
        model
    };

    if !histories.is_empty() {
        let mut csv = String::from("stage,step,loss\n");
        for (stage, history) in &histories {
            csv.push_str(&history_csv(*stage, history));
        }
        // Resumed runs append so earlier stages' histories survive.
        if resume && paths.history.exists() {
            let existing =
                fs::read_to_string(&paths.history).map_err(|e| Error::io(&paths.history, e))?;
            let mut merged = existing;
            for line in csv.lines().skip(1) {
                merged.push_str(line);
                merged.push('\n');
            }
            fs::write(&paths.history, merged).map_err(|e| Error::io(&paths.history, e))?;
        } else {
            fs::write(&paths.history, csv).map_err(|e| Error::io(&paths.history, e))?;
        }
    }

    Ok(PipelineBundle {
        encoder,
        dynamics,
        predictor,
        paths,
    })
}
