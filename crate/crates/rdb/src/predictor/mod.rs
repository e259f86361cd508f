//! The per-agent local predictor: a small recurrent model emitting a
//! correlated bivariate Gaussian over the next position. Its input is the
//! agent's position, optionally concatenated with the scene latent and the
//! dynamics summary, selected by [`InputConfig`] (the ablation axes).

mod bivariate;
mod rollout;

pub use bivariate::{bivariate_nll_grad, BivariateGaussian, BivariateGrads, RHO_LIMIT, SIGMA_FLOOR};
pub use rollout::{rollout_agent, ContextStream, ContextVecs, FrozenContext, NullContext, RolloutMode};

use serde::{Deserialize, Serialize};

use crate::data::TrajectoryWindow;
use crate::error::{Error, Result};
use crate::nn::{GruCache, GruCell, Layout, Linear};
use crate::rng::SeedRng;

/// Which of (position, latent, summary) feed the predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputConfig {
    /// Positions only (the stochastic-recurrent baseline).
    S,
    /// Positions and scene latent.
    SL,
    /// Positions and dynamics summary.
    SH,
    /// Positions, latent, and summary (the full model).
    SLH,
}

impl InputConfig {
    pub fn uses_latent(&self) -> bool {
        matches!(self, InputConfig::SL | InputConfig::SLH)
    }

    pub fn uses_summary(&self) -> bool {
        matches!(self, InputConfig::SH | InputConfig::SLH)
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s" => Ok(InputConfig::S),
            "sl" => Ok(InputConfig::SL),
            "sh" => Ok(InputConfig::SH),
            "slh" => Ok(InputConfig::SLH),
            other => Err(Error::Config(format!(
                "unknown input config `{other}` (expected s, sl, sh, or slh)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            InputConfig::S => "s",
            InputConfig::SL => "sl",
            InputConfig::SH => "sh",
            InputConfig::SLH => "slh",
        }
    }
}

impl std::fmt::Display for InputConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub hidden_dim: usize,
    pub input_config: InputConfig,
    /// Latent dimension the predictor was built against (0 when unused).
    pub latent_dim: usize,
    /// Summary dimension the predictor was built against (0 when unused).
    pub summary_dim: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            hidden_dim: 64,
            input_config: InputConfig::SLH,
            latent_dim: 64,
            summary_dim: 256,
        }
    }
}

impl PredictorConfig {
    pub fn input_dim(&self) -> usize {
        let mut d = 2;
        if self.input_config.uses_latent() {
            d += self.latent_dim;
        }
        if self.input_config.uses_summary() {
            d += self.summary_dim;
        }
        d
    }
}

/// Recurrent state of the predictor for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorState {
    pub values: Vec<f64>,
}

impl PredictorState {
    pub fn initial(dim: usize) -> Self {
        PredictorState {
            values: vec![0.0; dim],
        }
    }
}

/// Context values offered to a prediction step; slices are borrowed from the
/// caller and ignored when the input config does not consume them.
#[derive(Debug, Clone, Copy, Default)]
pub struct ContextInput<'a> {
    pub latent: Option<&'a [f64]>,
    pub summary: Option<&'a [f64]>,
}

impl ContextInput<'static> {
    pub fn none() -> Self {
        ContextInput::default()
    }
}

/// Per-window context tracks aligned to window frames.
#[derive(Debug, Clone, Default)]
pub struct ContextTrack {
    pub latents: Vec<Vec<f64>>,
    pub summaries: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct LocalPredictor {
    pub cfg: PredictorConfig,
    pub params: Vec<f64>,
    cell: GruCell,
    head: Linear,
}

const HEAD_DIM: usize = 5;

struct StepCache {
    gru: GruCache,
    h: Vec<f64>,
    raw: [f64; HEAD_DIM],
}

impl LocalPredictor {
    pub fn new(cfg: PredictorConfig, seed: u64) -> Self {
        let mut layout = Layout::new();
        let cell = GruCell::alloc(&mut layout, "pred.gru", cfg.input_dim(), cfg.hidden_dim);
        let head = Linear::alloc(&mut layout, "pred.head", cfg.hidden_dim, HEAD_DIM);
        let mut params = vec![0.0; layout.total()];
        let mut rng = SeedRng::derive(seed, 0x70726564);
        cell.init(&mut params, &mut rng);
        head.init(&mut params, &mut rng);
        LocalPredictor {
            cfg,
            params,
            cell,
            head,
        }
    }

    pub fn from_params(cfg: PredictorConfig, params: Vec<f64>) -> Result<Self> {
        let template = LocalPredictor::new(cfg, 0);
        if params.len() != template.params.len() {
            return Err(Error::Dimension {
                context: "predictor params",
                expected: template.params.len(),
                got: params.len(),
            });
        }
        Ok(LocalPredictor { params, ..template })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn assemble_input(&self, s: (f64, f64), ctx: ContextInput<'_>) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(self.cfg.input_dim());
        x.push(s.0);
        x.push(s.1);
        if self.cfg.input_config.uses_latent() {
            let latent = ctx.latent.ok_or_else(|| {
                Error::Alignment("input config requires a latent context".into())
            })?;
            if latent.len() != self.cfg.latent_dim {
                return Err(Error::Dimension {
                    context: "predictor latent context",
                    expected: self.cfg.latent_dim,
                    got: latent.len(),
                });
            }
            x.extend_from_slice(latent);
        }
        if self.cfg.input_config.uses_summary() {
            let summary = ctx.summary.ok_or_else(|| {
                Error::Alignment("input config requires a summary context".into())
            })?;
            if summary.len() != self.cfg.summary_dim {
                return Err(Error::Dimension {
                    context: "predictor summary context",
                    expected: self.cfg.summary_dim,
                    got: summary.len(),
                });
            }
            x.extend_from_slice(summary);
        }
        Ok(x)
    }

    fn head_to_gaussian(raw: &[f64]) -> BivariateGaussian {
        BivariateGaussian {
            mean_x: raw[0],
            mean_y: raw[1],
            sigma_x: raw[2].exp().max(SIGMA_FLOOR),
            sigma_y: raw[3].exp().max(SIGMA_FLOOR),
            rho: raw[4].tanh().clamp(-RHO_LIMIT, RHO_LIMIT),
        }
    }

    fn step_impl(
        &self,
        params: &[f64],
        h_prev: &[f64],
        s: (f64, f64),
        ctx: ContextInput<'_>,
    ) -> Result<(Vec<f64>, BivariateGaussian, StepCache)> {
        let x = self.assemble_input(s, ctx)?;
        let (h, gru) = self.cell.forward(params, &x, h_prev);
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("predictor step", "non-finite recurrent state"));
        }
        let mut raw = [0.0; HEAD_DIM];
        self.head.forward(params, &h, &mut raw);
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("predictor step", "non-finite head output"));
        }
        let gauss = Self::head_to_gaussian(&raw);
        Ok((h.clone(), gauss, StepCache { gru, h, raw }))
    }

    /// One recurrent step: consume the agent position (plus context per the
    /// input config) and emit the distribution over the next position.
    pub fn predict_step(
        &self,
        h_prev: &PredictorState,
        s: (f64, f64),
        ctx: ContextInput<'_>,
    ) -> Result<(PredictorState, BivariateGaussian)> {
        let (h, gauss, _) = self.step_impl(&self.params, &h_prev.values, s, ctx)?;
        Ok((PredictorState { values: h }, gauss))
    }

    fn context_at<'a>(&self, track: Option<&'a ContextTrack>, t: usize) -> ContextInput<'a> {
        match track {
            Some(track) => ContextInput {
                latent: track.latents.get(t).map(|v| v.as_slice()),
                summary: track.summaries.get(t).map(|v| v.as_slice()),
            },
            None => ContextInput::none(),
        }
    }

    fn validate_contexts(
        &self,
        windows: &[TrajectoryWindow],
        contexts: &[ContextTrack],
    ) -> Result<()> {
        let needs = self.cfg.input_config.uses_latent() || self.cfg.input_config.uses_summary();
        if !needs {
            return Ok(());
        }
        if contexts.len() != windows.len() {
            return Err(Error::Alignment(format!(
                "{} context tracks for {} windows",
                contexts.len(),
                windows.len()
            )));
        }
        for (w, c) in windows.iter().zip(contexts) {
            if self.cfg.input_config.uses_latent() && c.latents.len() != w.len() {
                return Err(Error::Alignment(format!(
                    "latent track length {} does not cover window of {} frames",
                    c.latents.len(),
                    w.len()
                )));
            }
            if self.cfg.input_config.uses_summary() && c.summaries.len() != w.len() {
                return Err(Error::Alignment(format!(
                    "summary track length {} does not cover window of {} frames",
                    c.summaries.len(),
                    w.len()
                )));
            }
        }
        Ok(())
    }

    /// Teacher-forced negative log likelihood summed over all agents and all
    /// transitions in the batch. All agents of a sequence are meant to form
    /// one batch; the sum makes the batch loss equal the sum of per-agent
    /// losses.
    pub fn b_loss(&self, windows: &[TrajectoryWindow], contexts: &[ContextTrack]) -> Result<f64> {
        self.b_loss_params(&self.params, windows, contexts, None)
    }

    pub fn b_loss_grad(
        &self,
        windows: &[TrajectoryWindow],
        contexts: &[ContextTrack],
        grads: &mut [f64],
    ) -> Result<f64> {
        self.b_loss_params(&self.params, windows, contexts, Some(grads))
    }

    /// Loss under explicit parameters (finite-difference verification).
    pub fn b_loss_at(
        &self,
        params: &[f64],
        windows: &[TrajectoryWindow],
        contexts: &[ContextTrack],
    ) -> Result<f64> {
        if params.len() != self.params.len() {
            return Err(Error::Dimension {
                context: "predictor params",
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.b_loss_params(params, windows, contexts, None)
    }

    fn b_loss_params(
        &self,
        params: &[f64],
        windows: &[TrajectoryWindow],
        contexts: &[ContextTrack],
        mut grads: Option<&mut [f64]>,
    ) -> Result<f64> {
        self.validate_contexts(windows, contexts)?;
        let mut total = 0.0;
        for (wi, window) in windows.iter().enumerate() {
            let track = contexts.get(wi);
            let states = window.states();
            let steps = states.len() - 1;
            let mut h = vec![0.0; self.cfg.hidden_dim];
            let mut caches = Vec::with_capacity(if grads.is_some() { steps } else { 0 });
            let mut gaussians = Vec::with_capacity(if grads.is_some() { steps } else { 0 });
            for t in 0..steps {
                let ctx = self.context_at(track, t);
                let (h_next, gauss, cache) =
                    self.step_impl(params, &h, (states[t].x, states[t].y), ctx)?;
                let nll = gauss.nll(states[t + 1].x, states[t + 1].y);
                if !nll.is_finite() {
                    return Err(Error::numeric(
                        format!("b_loss window {wi} step {t}"),
                        "non-finite likelihood",
                    ));
                }
                total += nll;
                if grads.is_some() {
                    caches.push(cache);
                    gaussians.push(gauss);
                }
                h = h_next;
            }
            if let Some(grads) = grads.as_deref_mut() {
                let mut dh_next = vec![0.0; self.cfg.hidden_dim];
                for t in (0..steps).rev() {
                    let cache = &caches[t];
                    let (_, g) = bivariate_nll_grad(&gaussians[t], states[t + 1].x, states[t + 1].y);
                    let mut d_raw = [0.0; HEAD_DIM];
                    d_raw[0] = g.d_mean_x;
                    d_raw[1] = g.d_mean_y;
                    // sigma = max(exp(raw), floor); rho = clamp(tanh(raw)).
                    let ex = cache.raw[2].exp();
                    d_raw[2] = if ex > SIGMA_FLOOR { g.d_sigma_x * ex } else { 0.0 };
                    let ey = cache.raw[3].exp();
                    d_raw[3] = if ey > SIGMA_FLOOR { g.d_sigma_y * ey } else { 0.0 };
                    let th = cache.raw[4].tanh();
                    d_raw[4] = if th.abs() < RHO_LIMIT {
                        g.d_rho * (1.0 - th * th)
                    } else {
                        0.0
                    };
                    let mut dh = std::mem::take(&mut dh_next);
                    self.head.backward(params, &cache.h, &d_raw, &mut dh, grads);
                    let mut dx = vec![0.0; self.cfg.input_dim()];
                    let mut dh_prev = vec![0.0; self.cfg.hidden_dim];
                    self.cell
                        .backward(params, &cache.gru, &dh, &mut dx, &mut dh_prev, grads);
                    dh_next = dh_prev;
                }
            }
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AgentState;

    fn tiny_cfg(input_config: InputConfig) -> PredictorConfig {
        PredictorConfig {
            hidden_dim: 6,
            input_config,
            latent_dim: 3,
            summary_dim: 4,
        }
    }

    fn window_from(positions: &[(f64, f64)]) -> TrajectoryWindow {
        let states: Vec<AgentState> = positions
            .iter()
            .enumerate()
            .map(|(i, (x, y))| AgentState {
                agent_id: 1,
                frame: i as u32,
                x: *x,
                y: *y,
            })
            .collect();
        TrajectoryWindow::new(1, 1, states).unwrap()
    }

    fn track_for(len: usize, seed: u64) -> ContextTrack {
        let mut rng = SeedRng::new(seed);
        ContextTrack {
            latents: (0..len).map(|_| (0..3).map(|_| rng.normal()).collect()).collect(),
            summaries: (0..len).map(|_| (0..4).map(|_| rng.normal()).collect()).collect(),
        }
    }

    #[test]
    fn outputs_satisfy_invariants_under_random_draws() {
        let ctx_track = track_for(1, 2);
        for seed in 0..1000 {
            let model = LocalPredictor::new(tiny_cfg(InputConfig::SLH), seed);
            let ctx = ContextInput {
                latent: Some(ctx_track.latents[0].as_slice()),
                summary: Some(ctx_track.summaries[0].as_slice()),
            };
            let (_, g) = model
                .predict_step(&PredictorState::initial(6), (0.4, 0.6), ctx)
                .unwrap();
            g.validate().unwrap();
        }
    }

    #[test]
    fn deterministic_and_position_only_ignores_context() {
        let model = LocalPredictor::new(tiny_cfg(InputConfig::S), 5);
        let h = PredictorState::initial(6);
        let a = model.predict_step(&h, (0.2, 0.8), ContextInput::none()).unwrap();
        let b = model.predict_step(&h, (0.2, 0.8), ContextInput::none()).unwrap();
        assert_eq!(a, b);

        let latent = vec![9.0, -9.0, 4.0];
        let summary = vec![1.0, 2.0, 3.0, 4.0];
        let c = model
            .predict_step(
                &h,
                (0.2, 0.8),
                ContextInput {
                    latent: Some(&latent),
                    summary: Some(&summary),
                },
            )
            .unwrap();
        assert_eq!(a, c, "position-only config must ignore context");
    }

    #[test]
    fn missing_context_is_an_alignment_error() {
        let model = LocalPredictor::new(tiny_cfg(InputConfig::SLH), 5);
        let h = PredictorState::initial(6);
        assert!(matches!(
            model.predict_step(&h, (0.1, 0.1), ContextInput::none()),
            Err(Error::Alignment(_))
        ));
        let w = window_from(&[(0.1, 0.1), (0.2, 0.2), (0.3, 0.3)]);
        assert!(matches!(
            model.b_loss(std::slice::from_ref(&w), &[]),
            Err(Error::Alignment(_))
        ));
        let short = ContextTrack {
            latents: vec![vec![0.0; 3]; 2],
            summaries: vec![vec![0.0; 4]; 2],
        };
        assert!(matches!(
            model.b_loss(&[w], &[short]),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn batch_loss_equals_sum_of_per_agent_losses() {
        let model = LocalPredictor::new(tiny_cfg(InputConfig::SLH), 9);
        let w1 = window_from(&[(0.1, 0.1), (0.15, 0.12), (0.2, 0.14), (0.25, 0.16)]);
        let w2 = window_from(&[(0.9, 0.8), (0.85, 0.75), (0.8, 0.7), (0.75, 0.65)]);
        let c1 = track_for(4, 31);
        let c2 = track_for(4, 32);
        let batch = model
            .b_loss(&[w1.clone(), w2.clone()], &[c1.clone(), c2.clone()])
            .unwrap();
        let solo = model.b_loss(&[w1], &[c1]).unwrap() + model.b_loss(&[w2], &[c2]).unwrap();
        assert!((batch - solo).abs() < 1e-9);
    }

    #[test]
    fn b_loss_grad_matches_finite_differences_on_slice() {
        let model = LocalPredictor::new(tiny_cfg(InputConfig::SLH), 13);
        let w = window_from(&[(0.1, 0.2), (0.2, 0.25), (0.3, 0.33), (0.35, 0.4), (0.42, 0.47)]);
        let c = track_for(5, 77);
        let mut grads = vec![0.0; model.param_count()];
        let loss = model.b_loss_grad(std::slice::from_ref(&w), std::slice::from_ref(&c), &mut grads).unwrap();
        assert!(loss.is_finite());
        let eps = 1e-5;
        let mut probe = SeedRng::new(123);
        for _ in 0..12 {
            let i = probe.below(model.param_count());
            let mut p = model.params.clone();
            p[i] += eps;
            let up = model.b_loss_at(&p, std::slice::from_ref(&w), std::slice::from_ref(&c)).unwrap();
            p[i] -= 2.0 * eps;
            let down = model.b_loss_at(&p, std::slice::from_ref(&w), std::slice::from_ref(&c)).unwrap();
            let fd = (up - down) / (2.0 * eps);
            let rel = (fd - grads[i]).abs() / (fd.abs() + grads[i].abs()).max(1e-8);
            assert!(rel < 1e-5, "param {i}: fd={fd} analytic={} rel={rel}", grads[i]);
        }
    }
}
