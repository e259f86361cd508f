//! Staged optimization of the three models with seeded determinism.
//!
//! Stages run in order: the spatial encoder trains on images alone, the
//! dynamics model trains on encoded latent sequences, and the local
//! predictor trains on agent windows with teacher-forced contexts. Each
//! stage records a loss history and writes a checkpoint; identical
//! (seed, config, data) reproduce identical checkpoints byte for byte.

mod checkpoint;
mod gradcheck;
mod pipeline;

pub use checkpoint::{file_sha256, ModuleCheckpoint};
pub use gradcheck::finite_difference_check;
pub use pipeline::{train_pipeline, PipelineBundle, PipelineConfig, PipelinePaths};

use serde::{Deserialize, Serialize};

use crate::data::{frame_chunks, TrajectoryWindow};
use crate::dynamics::{
    conditioning_vectors, ConditioningMode, DynamicsConfig, GlobalDynamics, Summary,
};
use crate::encoder::{EncoderConfig, LatentVector, MmdConfig, SpatialEncoder};
use crate::error::{Error, Result};
use crate::frame::ImageFrame;
use crate::nn::{clip_grad_norm, Adam, OptimConfig};
use crate::predictor::{ContextTrack, LocalPredictor, PredictorConfig};
use crate::rng::SeedRng;
use crate::scene::Scene;

/// The three training stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    R,
    D,
    B,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::R => "r",
            Stage::D => "d",
            Stage::B => "b",
        }
    }
}

/// Hyperparameters of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub optim: OptimConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub grad_clip: f64,
    /// Temperature for dynamics rollouts feeding the predictor at inference.
    pub tau: f64,
    /// Stride between sequence chunk starts (dynamic stages).
    pub chunk_stride: usize,
}

impl StageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.optim.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.chunk_stride < 1 {
            return Err(Error::Config("chunk stride must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config("tau must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn for_stage(stage: Stage) -> Self {
        let (lr, batch_size) = match stage {
            Stage::R => (1e-3, 8),
            Stage::D => (1e-3, 4),
            Stage::B => (3e-3, 1),
        };
        StageConfig {
            optim: OptimConfig::with_lr(lr),
            batch_size,
            epochs: 1,
            seed: 0,
            grad_clip: 5.0,
            tau: 0.5,
            chunk_stride: 1,
        }
    }
}

/// Per-step loss history of one stage.
pub type History = Vec<(u64, f64)>;

/// Render a history as `stage,step,loss` CSV rows.
pub fn history_csv(stage: Stage, history: &History) -> String {
    let mut out = String::new();
    for (step, loss) in history {
        out.push_str(&format!("{},{step},{loss:.17e}\n", stage.as_str()));
    }
    out
}

/// Clip to the configured norm; a non-finite gradient norm means the run
/// has diverged and must abort rather than write a poisoned checkpoint.
fn check_gradients(grads: &mut [f64], clip: f64, stage: Stage, step: u64) -> Result<()> {
    let norm = clip_grad_norm(grads, clip);
    if norm.is_finite() {
        Ok(())
    } else {
        Err(Error::numeric(
            format!("stage {} step {step}", stage.as_str()),
            "training diverged (non-finite gradient norm)",
        ))
    }
}

fn check_divergence(loss: f64, stage: Stage, step: u64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::numeric(
            format!("stage {} step {step}", stage.as_str()),
            "training diverged (non-finite loss)",
        ))
    }
}

/// Train the spatial encoder on a pool of images from a fresh seeded init.
pub fn train_encoder(
    images: &[ImageFrame],
    enc_cfg: EncoderConfig,
    mmd: &MmdConfig,
    cfg: &StageConfig,
) -> Result<(SpatialEncoder, History)> {
    train_encoder_from(SpatialEncoder::new(enc_cfg, cfg.seed), images, mmd, cfg)
}

/// Re-train (warm-start) an existing encoder on a new environment's images.
/// Starting from a shared encoder keeps latent semantics aligned across
/// environments, which is what lets the dynamic components consume another
/// environment's codes.
pub fn train_encoder_from(
    model: SpatialEncoder,
    images: &[ImageFrame],
    mmd: &MmdConfig,
    cfg: &StageConfig,
) -> Result<(SpatialEncoder, History)> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::Config(
            "encoder stage needs at least one image".into(),
        ));
    }
    let mut model = model;
    let mut opt = Adam::new(cfg.optim, model.param_count());
    let mut grads = vec![0.0; model.param_count()];
    let mut history = Vec::new();
    let mut shuffle = SeedRng::derive(cfg.seed, 0x52);
    let mut step: u64 = 0;
    for _epoch in 0..cfg.epochs {
        let order = shuffle.permutation(images.len());
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<ImageFrame> = chunk.iter().map(|&i| images[i].clone()).collect();
            grads.iter_mut().for_each(|g| *g = 0.0);
            // One prior draw per run: a fixed matching target keeps the
            // prior-term gradient consistent across steps.
            let prior_seed = cfg.seed.wrapping_add(0x1000_0000);
            let loss = model.r_loss_grad(&batch, mmd, prior_seed, &mut grads)?;
            check_divergence(loss, Stage::R, step)?;
            check_gradients(&mut grads, cfg.grad_clip, Stage::R, step)?;
            opt.step(&mut model.params, &grads);
            history.push((step, loss));
            step += 1;
        }
    }
    Ok((model, history))
}

/// One scene prepared for the dynamic stages: cached per-frame latents and
/// conditioning vectors, plus per-chunk agent window batches.
pub struct PreparedScene {
    pub latents: Vec<Vec<f64>>,
    pub cond: Vec<Vec<f64>>,
    pub first_frame: u32,
    /// (chunk start frame, agent windows through the chunk); empty batches
    /// are dropped.
    pub chunk_windows: Vec<(u32, Vec<TrajectoryWindow>)>,
}

/// Encode a scene and materialize conditioning vectors and chunk batches.
pub fn prepare_scene(
    scene: &Scene,
    encoder: &SpatialEncoder,
    conditioning: ConditioningMode,
    n_max: usize,
    train_len: usize,
    chunk_stride: usize,
) -> Result<PreparedScene> {
    let latents: Vec<Vec<f64>> = scene
        .encode_latents(encoder)?
        .into_iter()
        .map(|l| l.values)
        .collect();
    let world = scene.world_states(n_max);
    let cond = conditioning_vectors(conditioning, &world, n_max);
    let first_frame = scene.first_frame();
    let chunk_windows = chunk_window_batches(scene, train_len, chunk_stride)?;
    Ok(PreparedScene {
        latents,
        cond,
        first_frame,
        chunk_windows,
    })
}

/// Agent windows for every `train_len`-frame chunk of the scene; an agent
/// joins a chunk's batch when it is contiguously present through it.
pub fn chunk_window_batches(
    scene: &Scene,
    train_len: usize,
    chunk_stride: usize,
) -> Result<Vec<(u32, Vec<TrajectoryWindow>)>> {
    let starts = frame_chunks(&scene.dataset, train_len, chunk_stride);
    let mut out = Vec::new();
    for start in starts {
        let mut windows = Vec::new();
        for agent_id in scene.dataset.agent_ids() {
            let covered = scene
                .dataset
                .contiguous_runs(agent_id)
                .into_iter()
                .any(|(lo, hi)| lo <= start && start + train_len as u32 - 1 <= hi);
            if !covered {
                continue;
            }
            let states: Vec<_> = (0..train_len as u32)
                .map(|i| {
                    scene
                        .dataset
                        .state_of(agent_id, start + i)
                        .expect("contiguous run covers chunk")
                })
                .collect();
            windows.push(TrajectoryWindow::new(agent_id, 1, states)?);
        }
        if !windows.is_empty() {
            out.push((start, windows));
        }
    }
    Ok(out)
}

impl PreparedScene {
    pub fn offset(&self, frame: u32) -> usize {
        (frame - self.first_frame) as usize
    }

    pub fn latent_slice(&self, start: u32, len: usize) -> Vec<LatentVector> {
        let o = self.offset(start);
        self.latents[o..o + len]
            .iter()
            .map(|v| LatentVector { values: v.clone() })
            .collect()
    }

    pub fn cond_slice(&self, start: u32, len: usize) -> Vec<Vec<f64>> {
        let o = self.offset(start);
        self.cond[o..o + len].to_vec()
    }
}

/// Train the global dynamics model on encoded latent sequences.
pub fn train_dynamics(
    scenes: &[&Scene],
    encoders: &[&SpatialEncoder],
    dyn_cfg: DynamicsConfig,
    train_len: usize,
    cfg: &StageConfig,
) -> Result<(GlobalDynamics, History)> {
    cfg.validate()?;
    if encoders.len() != scenes.len() {
        return Err(Error::Dimension {
            context: "per-environment encoders",
            expected: scenes.len(),
            got: encoders.len(),
        });
    }
    for enc in encoders {
        if dyn_cfg.latent_dim != enc.cfg.latent_dim {
            return Err(Error::Compatibility(format!(
                "dynamics latent dim {} vs encoder {}",
                dyn_cfg.latent_dim, enc.cfg.latent_dim
            )));
        }
    }
    let prepared: Vec<PreparedScene> = scenes
        .iter()
        .zip(encoders)
        .map(|(s, enc)| {
            prepare_scene(
                s,
                enc,
                dyn_cfg.conditioning,
                dyn_cfg.n_max,
                train_len,
                cfg.chunk_stride,
            )
        })
        .collect::<Result<_>>()?;
    let mut chunks: Vec<(usize, u32)> = Vec::new();
    for (si, scene) in scenes.iter().enumerate() {
        for start in frame_chunks(&scene.dataset, train_len, cfg.chunk_stride) {
            chunks.push((si, start));
        }
    }
    if chunks.is_empty() {
        return Err(Error::Config(
            "no training chunks: scenes shorter than train_len".into(),
        ));
    }

    let mut model = GlobalDynamics::new(dyn_cfg, cfg.seed);
    let mut opt = Adam::new(cfg.optim, model.param_count());
    let mut grads = vec![0.0; model.param_count()];
    let mut history = Vec::new();
    let mut shuffle = SeedRng::derive(cfg.seed, 0x44);
    let mut step: u64 = 0;
    for _epoch in 0..cfg.epochs {
        let order = shuffle.permutation(chunks.len());
        for group in order.chunks(cfg.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let mut loss_sum = 0.0;
            let mut transitions = 0usize;
            for &ci in group {
                let (si, start) = chunks[ci];
                let p = &prepared[si];
                let latents = p.latent_slice(start, train_len);
                let cond = p.cond_slice(start, train_len - 1);
                loss_sum += model.d_loss_grad(&latents, &cond, &mut grads)?;
                transitions += train_len - 1;
            }
            let scale = 1.0 / transitions as f64;
            let loss = loss_sum * scale;
            check_divergence(loss, Stage::D, step)?;
            grads.iter_mut().for_each(|g| *g *= scale);
            check_gradients(&mut grads, cfg.grad_clip, Stage::D, step)?;
            opt.step(&mut model.params, &grads);
            history.push((step, loss));
            step += 1;
        }
    }
    Ok((model, history))
}

/// Upstream models the predictor stage may need, per its input config. The
/// encoders slice aligns one to one with the training scenes (each
/// environment is encoded by its own unsupervised encoder).
pub struct PredictorUpstream<'a> {
    pub encoders: Option<&'a [&'a SpatialEncoder]>,
    pub dynamics: Option<&'a GlobalDynamics>,
}

/// Train the local predictor. Each sequence chunk contributes one mini batch
/// holding every agent contiguously present through it; contexts are teacher
/// forced from the encoder latents and a dynamics pass over the chunk.
pub fn train_predictor(
    scenes: &[&Scene],
    upstream: PredictorUpstream<'_>,
    pred_cfg: PredictorConfig,
    n_max: usize,
    train_len: usize,
    cfg: &StageConfig,
) -> Result<(LocalPredictor, History)> {
    cfg.validate()?;
    let needs_latent = pred_cfg.input_config.uses_latent();
    let needs_summary = pred_cfg.input_config.uses_summary();
    let needs_context = needs_latent || needs_summary;
    if needs_context && upstream.encoders.is_none() {
        return Err(Error::Dependency(
            "predictor stage needs encoder checkpoints for latent/summary inputs".into(),
        ));
    }
    if needs_summary && upstream.dynamics.is_none() {
        return Err(Error::Dependency(
            "predictor stage needs a dynamics checkpoint for summary inputs".into(),
        ));
    }
    if needs_context {
        let encoders = upstream.encoders.unwrap();
        if encoders.len() != scenes.len() {
            return Err(Error::Dimension {
                context: "per-environment encoders",
                expected: scenes.len(),
                got: encoders.len(),
            });
        }
        if needs_latent {
            for enc in encoders {
                if pred_cfg.latent_dim != enc.cfg.latent_dim {
                    return Err(Error::Compatibility(format!(
                        "predictor latent dim {} vs encoder {}",
                        pred_cfg.latent_dim, enc.cfg.latent_dim
                    )));
                }
            }
        }
    }
    if needs_summary {
        let d = upstream.dynamics.unwrap();
        if pred_cfg.summary_dim != d.cfg.hidden_dim {
            return Err(Error::Compatibility(format!(
                "predictor summary dim {} vs dynamics hidden {}",
                pred_cfg.summary_dim, d.cfg.hidden_dim
            )));
        }
    }

    let conditioning = upstream
        .dynamics
        .map(|d| d.cfg.conditioning)
        .unwrap_or(ConditioningMode::Zeros);
    let prepared: Vec<Option<PreparedScene>> = scenes
        .iter()
        .enumerate()
        .map(|(si, s)| {
            if needs_context {
                prepare_scene(
                    s,
                    upstream.encoders.unwrap()[si],
                    conditioning,
                    n_max,
                    train_len,
                    cfg.chunk_stride,
                )
                .map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;

    // Chunk batches (scene index, start, windows) with contexts computed
    // once up front; the optimizer loop only reuses them.
    let mut chunks: Vec<(Vec<TrajectoryWindow>, Vec<ContextTrack>)> = Vec::new();
    for (si, scene) in scenes.iter().enumerate() {
        for (start, windows) in chunk_window_batches(scene, train_len, cfg.chunk_stride)? {
            let contexts = match &prepared[si] {
                Some(p) => {
                    let track = context_track_for_chunk(
                        p,
                        upstream.dynamics,
                        start,
                        train_len,
                        needs_latent,
                        needs_summary,
                    )?;
                    vec![track; windows.len()]
                }
                None => Vec::new(),
            };
            chunks.push((windows, contexts));
        }
    }
    if chunks.is_empty() {
        return Err(Error::Config(
            "no predictor training chunks with present agents".into(),
        ));
    }

    let mut model = LocalPredictor::new(pred_cfg, cfg.seed);
    let mut opt = Adam::new(cfg.optim, model.param_count());
    let mut grads = vec![0.0; model.param_count()];
    let mut history = Vec::new();
    let mut shuffle = SeedRng::derive(cfg.seed, 0x42);
    let mut step: u64 = 0;
    for _epoch in 0..cfg.epochs {
        let order = shuffle.permutation(chunks.len());
        for group in order.chunks(cfg.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let mut loss_sum = 0.0;
            let mut samples = 0usize;
            for &ci in group {
                let (windows, contexts) = &chunks[ci];
                loss_sum += model.b_loss_grad(windows, contexts, &mut grads)?;
                samples += windows.len() * (train_len - 1);
            }
            let scale = 1.0 / samples as f64;
            let loss = loss_sum * scale;
            check_divergence(loss, Stage::B, step)?;
            grads.iter_mut().for_each(|g| *g *= scale);
            check_gradients(&mut grads, cfg.grad_clip, Stage::B, step)?;
            opt.step(&mut model.params, &grads);
            history.push((step, loss));
            step += 1;
        }
    }
    Ok((model, history))
}

/// Teacher-forced context for one chunk: per-frame latents and a dynamics
/// pass from a zero summary over the chunk frames.
pub fn context_track_for_chunk(
    prepared: &PreparedScene,
    dynamics: Option<&GlobalDynamics>,
    start: u32,
    train_len: usize,
    needs_latent: bool,
    needs_summary: bool,
) -> Result<ContextTrack> {
    let o = prepared.offset(start);
    let latents: Vec<Vec<f64>> = if needs_latent {
        prepared.latents[o..o + train_len].to_vec()
    } else {
        vec![Vec::new(); train_len]
    };
    let summaries: Vec<Vec<f64>> = if needs_summary {
        let d = dynamics.expect("summary input implies a dynamics model");
        let mut h = Summary::initial(d.cfg.hidden_dim);
        let mut out = Vec::with_capacity(train_len);
        for t in 0..train_len {
            let latent = LatentVector {
                values: prepared.latents[o + t].clone(),
            };
            let (h_next, _) = d.step(&h, &latent, &prepared.cond[o + t])?;
            out.push(h_next.values.clone());
            h = h_next;
        }
        out
    } else {
        vec![Vec::new(); train_len]
    };
    Ok(ContextTrack { latents, summaries })
}
