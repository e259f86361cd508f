use crate::data::AgentState;
use crate::error::Result;
use crate::predictor::{BivariateGaussian, ContextInput, LocalPredictor, PredictorState};
use crate::rng::SeedRng;

/// How the rollout picks the position it feeds back and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolloutMode {
    /// Feed and report the distribution mean (deterministic end to end).
    Mean,
    /// Feed and report a draw from each step's Gaussian.
    Sample,
}

/// Context values for one frame of a rollout; empty vectors mean "unused".
#[derive(Debug, Clone, Default)]
pub struct ContextVecs {
    pub latent: Vec<f64>,
    pub summary: Vec<f64>,
}

impl ContextVecs {
    fn as_input(&self) -> ContextInput<'_> {
        ContextInput {
            latent: if self.latent.is_empty() {
                None
            } else {
                Some(&self.latent)
            },
            summary: if self.summary.is_empty() {
                None
            } else {
                Some(&self.summary)
            },
        }
    }
}

/// Supplies (latent, summary) context along a window: once per observed
/// frame, then once per predicted frame given the agent's predicted position.
pub trait ContextStream {
    /// Context aligned to observed frame `t` (0-based within the window).
    fn observe(&mut self, t: usize) -> Result<ContextVecs>;

    /// Advance past the observation horizon: the agent's predicted position
    /// for the current frame is supplied so the stream can substitute it into
    /// the world state it conditions on.
    fn advance(&mut self, predicted: (f64, f64)) -> Result<ContextVecs>;
}

/// No context at all (position-only input config).
pub struct NullContext;

impl ContextStream for NullContext {
    fn observe(&mut self, _t: usize) -> Result<ContextVecs> {
        Ok(ContextVecs::default())
    }

    fn advance(&mut self, _predicted: (f64, f64)) -> Result<ContextVecs> {
        Ok(ContextVecs::default())
    }
}

/// Holds the last observed context for the whole prediction horizon (the
/// freeze-context ablation).
pub struct FrozenContext {
    observed: Vec<ContextVecs>,
}

impl FrozenContext {
    pub fn new(observed: Vec<ContextVecs>) -> Self {
        FrozenContext { observed }
    }
}

impl ContextStream for FrozenContext {
    fn observe(&mut self, t: usize) -> Result<ContextVecs> {
        Ok(self.observed[t].clone())
    }

    fn advance(&mut self, _predicted: (f64, f64)) -> Result<ContextVecs> {
        Ok(self.observed.last().cloned().unwrap_or_default())
    }
}

/// Closed-loop prediction for one agent: warm up over the observed states,
/// then roll the predictor forward for `pred_len` steps, feeding back the
/// chosen position (mean or sample) and whatever context the stream supplies.
/// Returns the predicted positions and the per-step Gaussians.
pub fn rollout_agent(
    model: &LocalPredictor,
    obs: &[AgentState],
    ctx: &mut dyn ContextStream,
    pred_len: usize,
    mode: RolloutMode,
    rng: &mut SeedRng,
) -> Result<(Vec<(f64, f64)>, Vec<BivariateGaussian>)> {
    assert!(!obs.is_empty(), "rollout needs at least one observed state");
    assert!(pred_len >= 1, "rollout needs at least one prediction step");
    let mut h = PredictorState::initial(model.cfg.hidden_dim);
    let mut gauss = None;
    for (t, s) in obs.iter().enumerate() {
        let ctx_t = ctx.observe(t)?;
        let (h_next, g) = model.predict_step(&h, (s.x, s.y), ctx_t.as_input())?;
        h = h_next;
        gauss = Some(g);
    }
    let mut g = gauss.expect("at least one observed step");
    let mut positions = Vec::with_capacity(pred_len);
    let mut gaussians = Vec::with_capacity(pred_len);
    for i in 0..pred_len {
        let p = match mode {
            RolloutMode::Mean => (g.mean_x, g.mean_y),
            RolloutMode::Sample => g.sample(rng),
        };
        positions.push(p);
        gaussians.push(g);
        if i + 1 == pred_len {
            break;
        }
        let ctx_n = ctx.advance(p)?;
        let (h_next, g_next) = model.predict_step(&h, p, ctx_n.as_input())?;
        h = h_next;
        g = g_next;
    }
    Ok((positions, gaussians))
}
