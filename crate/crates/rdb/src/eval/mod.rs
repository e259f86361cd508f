//! ADE/FDE evaluation, baseline predictors, and the cross-task transfer
//! harness.

mod baseline;
mod context;
mod metrics;
mod transfer;

pub use baseline::{constant_velocity_predict, oracle_predict, random_predict};
pub use context::DynamicsContext;
pub use metrics::{ade, ade_mean_of_distances, fde};
pub use transfer::{
    run_transfer, PredictorOnlyModel, TransferMode, TransferOutcome, TransferSetup,
};

use crate::data::{window_split, TrajectoryWindow, WindowConfig, WorldState};
use crate::dynamics::GlobalDynamics;
use crate::encoder::SpatialEncoder;
use crate::error::{Error, Result};
use crate::predictor::{rollout_agent, LocalPredictor, NullContext, RolloutMode};
use crate::rng::SeedRng;
use crate::scene::Scene;

/// Evaluation options shared by every model kind.
#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub seed: u64,
    /// Temperature for dynamics rollouts during the prediction horizon.
    pub tau: f64,
    /// Hold the last observed context instead of rolling dynamics forward.
    pub freeze_context: bool,
    /// Sampled best-of-N variant; None evaluates the predicted mean.
    pub best_of: Option<usize>,
    /// Stride between window starts.
    pub stride: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            seed: 0,
            tau: 0.5,
            freeze_context: false,
            best_of: None,
            stride: 1,
        }
    }
}

/// Per-scene data a model may need for prediction.
#[derive(Debug, Clone, Default)]
pub struct PreparedEval {
    pub world: Vec<WorldState>,
    pub latents: Vec<Vec<f64>>,
    pub first_frame: u32,
}

/// Anything that can predict the future horizon of a trajectory window.
pub trait TrajectoryModel: Sync {
    fn name(&self) -> String;

    /// Called once per scene before windows are evaluated.
    fn prepare(&self, scene: &Scene) -> Result<PreparedEval> {
        let _ = scene;
        Ok(PreparedEval::default())
    }

    fn predict(
        &self,
        window: &TrajectoryWindow,
        prep: &PreparedEval,
        rng: &mut SeedRng,
    ) -> Result<Vec<(f64, f64)>>;
}

/// The full model: encoder + dynamics + predictor with closed-loop context.
pub struct RdbModel<'a> {
    pub encoder: &'a SpatialEncoder,
    pub dynamics: &'a GlobalDynamics,
    pub predictor: &'a LocalPredictor,
    pub opts: EvalOptions,
}

impl<'a> RdbModel<'a> {
    pub fn new(
        encoder: &'a SpatialEncoder,
        dynamics: &'a GlobalDynamics,
        predictor: &'a LocalPredictor,
        opts: EvalOptions,
    ) -> Result<Self> {
        if dynamics.cfg.latent_dim != encoder.cfg.latent_dim {
            return Err(Error::Compatibility(format!(
                "dynamics latent dim {} vs encoder {}",
                dynamics.cfg.latent_dim, encoder.cfg.latent_dim
            )));
        }
        let pc = &predictor.cfg;
        if pc.input_config.uses_latent() && pc.latent_dim != encoder.cfg.latent_dim {
            return Err(Error::Compatibility(format!(
                "predictor latent dim {} vs encoder {}",
                pc.latent_dim, encoder.cfg.latent_dim
            )));
        }
        if pc.input_config.uses_summary() && pc.summary_dim != dynamics.cfg.hidden_dim {
            return Err(Error::Compatibility(format!(
                "predictor summary dim {} vs dynamics hidden {}",
                pc.summary_dim, dynamics.cfg.hidden_dim
            )));
        }
        Ok(RdbModel {
            encoder,
            dynamics,
            predictor,
            opts,
        })
    }

    fn rollout_mode(&self) -> RolloutMode {
        if self.opts.best_of.is_some() {
            RolloutMode::Sample
        } else {
            RolloutMode::Mean
        }
    }
}

impl TrajectoryModel for RdbModel<'_> {
    fn name(&self) -> String {
        format!("rdb-{}", self.predictor.cfg.input_config)
    }

    fn prepare(&self, scene: &Scene) -> Result<PreparedEval> {
        let needs_context = self.predictor.cfg.input_config.uses_latent()
            || self.predictor.cfg.input_config.uses_summary();
        if !needs_context {
            return Ok(PreparedEval::default());
        }
        let latents = scene
            .encode_latents(self.encoder)?
            .into_iter()
            .map(|l| l.values)
            .collect();
        Ok(PreparedEval {
            world: scene.world_states(self.dynamics.cfg.n_max),
            latents,
            first_frame: scene.first_frame(),
        })
    }

    fn predict(
        &self,
        window: &TrajectoryWindow,
        prep: &PreparedEval,
        rng: &mut SeedRng,
    ) -> Result<Vec<(f64, f64)>> {
        let needs_context = self.predictor.cfg.input_config.uses_latent()
            || self.predictor.cfg.input_config.uses_summary();
        let pred_len = window.pred_len();
        if needs_context {
            let mut ctx = DynamicsContext::new(
                self.dynamics,
                &prep.latents,
                &prep.world,
                prep.first_frame,
                window.start_frame,
                window.obs_len,
                window.agent_id,
                self.opts.tau,
                self.opts.freeze_context,
                SeedRng::derive(self.opts.seed, 0xd15c ^ rng.next_u64()),
            );
            let (pos, _) = rollout_agent(
                self.predictor,
                window.obs(),
                &mut ctx,
                pred_len,
                self.rollout_mode(),
                rng,
            )?;
            Ok(pos)
        } else {
            let (pos, _) = rollout_agent(
                self.predictor,
                window.obs(),
                &mut NullContext,
                pred_len,
                self.rollout_mode(),
                rng,
            )?;
            Ok(pos)
        }
    }
}

/// Constant-velocity extrapolation baseline.
pub struct ConstantVelocityModel;

impl TrajectoryModel for ConstantVelocityModel {
    fn name(&self) -> String {
        "constant-velocity".into()
    }

    fn predict(
        &self,
        window: &TrajectoryWindow,
        _prep: &PreparedEval,
        _rng: &mut SeedRng,
    ) -> Result<Vec<(f64, f64)>> {
        let obs: Vec<(f64, f64)> = window.obs().iter().map(|s| (s.x, s.y)).collect();
        constant_velocity_predict(&obs, window.pred_len())
    }
}

/// Uniform-random baseline on the unit square.
pub struct RandomModel;

impl TrajectoryModel for RandomModel {
    fn name(&self) -> String {
        "random".into()
    }

    fn predict(
        &self,
        window: &TrajectoryWindow,
        _prep: &PreparedEval,
        rng: &mut SeedRng,
    ) -> Result<Vec<(f64, f64)>> {
        Ok(random_predict(window.pred_len(), rng))
    }
}

/// Ground-truth oracle stub: validates that the harness scores a perfect
/// predictor as exactly zero.
pub struct OracleModel;

impl TrajectoryModel for OracleModel {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn predict(
        &self,
        window: &TrajectoryWindow,
        _prep: &PreparedEval,
        _rng: &mut SeedRng,
    ) -> Result<Vec<(f64, f64)>> {
        Ok(oracle_predict(window))
    }
}

/// One dataset's aggregated metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub dataset: String,
    pub mode: String,
    pub obs_len: usize,
    pub pred_len: usize,
    pub ade: f64,
    pub fde: f64,
    pub ade_mean_of_distances: f64,
    pub n_trajectories: usize,
}

/// Evaluation report: per-dataset rows plus overall trajectory-weighted
/// means.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub mode: String,
    pub window: WindowConfig,
    pub ade: f64,
    pub fde: f64,
    pub ade_mean_of_distances: f64,
    pub n_trajectories: usize,
    pub per_dataset: Vec<ReportRow>,
}

impl MetricReport {
    fn from_rows(mode: String, window: WindowConfig, rows: Vec<ReportRow>) -> Self {
        let n: usize = rows.iter().map(|r| r.n_trajectories).sum();
        let weighted = |f: &dyn Fn(&ReportRow) -> f64| -> f64 {
            if n == 0 {
                return 0.0;
            }
            rows.iter().map(|r| f(r) * r.n_trajectories as f64).sum::<f64>() / n as f64
        };
        MetricReport {
            ade: weighted(&|r| r.ade),
            fde: weighted(&|r| r.fde),
            ade_mean_of_distances: weighted(&|r| r.ade_mean_of_distances),
            n_trajectories: n,
            mode,
            window,
            per_dataset: rows,
        }
    }

    /// Report CSV: `dataset,mode,obs_len,pred_len,ade,fde,n_trajectories`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,mode,obs_len,pred_len,ade,fde,n_trajectories\n");
        for r in &self.per_dataset {
            out.push_str(&format!(
                "{},{},{},{},{:.9},{:.9},{}\n",
                r.dataset, r.mode, r.obs_len, r.pred_len, r.ade, r.fde, r.n_trajectories
            ));
        }
        out
    }
}

/// Number of worker threads evaluation may use: the RDB_THREADS environment
/// variable when set, otherwise the available parallelism.
pub fn worker_threads() -> usize {
    if let Ok(v) = std::env::var("RDB_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Order-preserving parallel map with per-item index; results are identical
/// regardless of thread count because each item's work is independent.
fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    f: impl Fn(usize, &T) -> R + Sync,
) -> Vec<R> {
    let threads = worker_threads().min(items.len()).max(1);
    if threads <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let mut out: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let slots: Vec<(usize, &mut [Option<R>])> = {
        let mut rest = out.as_mut_slice();
        let mut start = 0;
        let mut v = Vec::new();
        while !rest.is_empty() {
            let take = chunk.min(rest.len());
            let (head, tail) = rest.split_at_mut(take);
            v.push((start, head));
            start += take;
            rest = tail;
        }
        v
    };
    std::thread::scope(|scope| {
        for (start, slot) in slots {
            let f = &f;
            scope.spawn(move || {
                for (j, s) in slot.iter_mut().enumerate() {
                    let i = start + j;
                    *s = Some(f(i, &items[i]));
                }
            });
        }
    });
    out.into_iter().map(|r| r.expect("worker filled slot")).collect()
}

/// Evaluate a model over every window of a scene.
pub fn evaluate(
    model: &dyn TrajectoryModel,
    scene: &Scene,
    window: &WindowConfig,
    opts: &EvalOptions,
) -> Result<MetricReport> {
    evaluate_suite(model, std::slice::from_ref(scene), window, opts)
}

/// Evaluate a model over several scenes, reporting per-dataset rows and
/// trajectory-weighted overall metrics.
pub fn evaluate_suite(
    model: &dyn TrajectoryModel,
    scenes: &[Scene],
    window: &WindowConfig,
    opts: &EvalOptions,
) -> Result<MetricReport> {
    let mut rows = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let windows = window_split(&scene.dataset, window, opts.stride)?;
        let prep = model.prepare(scene)?;
        let results: Vec<Result<(f64, f64, f64)>> =
            parallel_map(&windows, |idx, w| -> Result<(f64, f64, f64)> {
                let truth: Vec<(f64, f64)> = w.pred().iter().map(|s| (s.x, s.y)).collect();
                let mut rng = SeedRng::derive(opts.seed, idx as u64);
                match opts.best_of {
                    None => {
                        let pred = model.predict(w, &prep, &mut rng)?;
                        Ok((
                            ade(&pred, &truth)?,
                            fde(&pred, &truth)?,
                            ade_mean_of_distances(&pred, &truth)?,
                        ))
                    }
                    Some(n) => {
                        let mut best: Option<(f64, f64, f64)> = None;
                        for _ in 0..n.max(1) {
                            let pred = model.predict(w, &prep, &mut rng)?;
                            let a = ade(&pred, &truth)?;
                            let f = fde(&pred, &truth)?;
                            let m = ade_mean_of_distances(&pred, &truth)?;
                            if best.is_none_or(|(ba, _, _)| a < ba) {
                                best = Some((a, f, m));
                            }
                        }
                        Ok(best.expect("best_of >= 1"))
                    }
                }
            });
        let mut sum = (0.0, 0.0, 0.0);
        let mut n = 0usize;
        for r in results {
            let (a, f, m) = r?;
            sum.0 += a;
            sum.1 += f;
            sum.2 += m;
            n += 1;
        }
        rows.push(ReportRow {
            dataset: scene.name().to_string(),
            mode: model.name(),
            obs_len: window.obs_len,
            pred_len: window.pred_len,
            ade: if n > 0 { sum.0 / n as f64 } else { 0.0 },
            fde: if n > 0 { sum.1 / n as f64 } else { 0.0 },
            ade_mean_of_distances: if n > 0 { sum.2 / n as f64 } else { 0.0 },
            n_trajectories: n,
        });
    }
    Ok(MetricReport::from_rows(model.name(), *window, rows))
}

/// Monte-Carlo estimate of the random baseline's ADE over a scene's windows.
pub fn random_baseline_ade(
    scene: &Scene,
    window: &WindowConfig,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let windows = window_split(&scene.dataset, window, 1)?;
    if windows.is_empty() {
        return Err(Error::Config("no windows to evaluate".into()));
    }
    let mut rng = SeedRng::derive(seed, 0x72616e64);
    let mut acc = 0.0;
    for i in 0..draws {
        let w = &windows[i % windows.len()];
        let truth: Vec<(f64, f64)> = w.pred().iter().map(|s| (s.x, s.y)).collect();
        let pred = random_predict(truth.len(), &mut rng);
        acc += ade(&pred, &truth)?;
    }
    Ok(acc / draws as f64)
}
