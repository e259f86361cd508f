//! Global scene dynamics: a recurrent mixture-density model over latent
//! codes, conditioned on the positions of every agent in the scene.
//!
//! Each step consumes the current latent and a conditioning vector, updates a
//! hidden summary, and emits a K-component diagonal-Gaussian mixture over the
//! next latent. Sampling takes a temperature that scales mixture logits and
//! variances to trade determinism against diversity.

mod mixture;
mod sample;

pub use mixture::{
    mixture_nll, mixture_nll_direct, mixture_nll_grad, MixtureGrads, MixtureParams, SIGMA_FLOOR,
};
pub use sample::sample_next_latent;

use serde::{Deserialize, Serialize};

use crate::data::WorldState;
use crate::encoder::LatentVector;
use crate::error::{Error, Result};
use crate::nn::{GruCache, GruCell, Layout, Linear};
use crate::rng::SeedRng;

/// Hidden summary of scene dynamics. The summary at step 0 is the zero
/// vector; each step replaces it with the recurrent state after consuming
/// that frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub values: Vec<f64>,
}

impl Summary {
    pub fn initial(dim: usize) -> Self {
        Summary {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// What the dynamics model is conditioned on at each frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConditioningMode {
    /// The flattened all-agent position vector.
    Positions,
    /// A seeded standard-normal stream, independent of position data
    /// (the unsupervised variant).
    Noise { seed: u64 },
    /// All zeros (ablation support).
    Zeros,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub components: usize,
    pub n_max: usize,
    pub conditioning: ConditioningMode,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            latent_dim: 64,
            hidden_dim: 256,
            components: 5,
            n_max: 16,
            conditioning: ConditioningMode::Positions,
        }
    }
}

impl DynamicsConfig {
    pub fn conditioning_dim(&self) -> usize {
        2 * self.n_max
    }

    pub fn input_dim(&self) -> usize {
        self.latent_dim + self.conditioning_dim()
    }

    /// Head output width: K mixture logits plus K means and K standard
    /// deviations per latent dimension.
    pub fn head_dim(&self) -> usize {
        self.components * (1 + 2 * self.latent_dim)
    }
}

#[derive(Debug, Clone)]
pub struct GlobalDynamics {
    pub cfg: DynamicsConfig,
    pub params: Vec<f64>,
    cell: GruCell,
    head: Linear,
}

/// Per-step cache for backprop through time.
pub struct DynStepCache {
    gru: GruCache,
    h: Vec<f64>,
    sigma_raw: Vec<f64>,
}

impl GlobalDynamics {
    pub fn new(cfg: DynamicsConfig, seed: u64) -> Self {
        let mut layout = Layout::new();
        let cell = GruCell::alloc(&mut layout, "dyn.gru", cfg.input_dim(), cfg.hidden_dim);
        let head = Linear::alloc(&mut layout, "dyn.head", cfg.hidden_dim, cfg.head_dim());
        let mut params = vec![0.0; layout.total()];
        let mut rng = SeedRng::derive(seed, 0x64796e);
        cell.init(&mut params, &mut rng);
        head.init(&mut params, &mut rng);
        GlobalDynamics {
            cfg,
            params,
            cell,
            head,
        }
    }

    pub fn from_params(cfg: DynamicsConfig, params: Vec<f64>) -> Result<Self> {
        let template = GlobalDynamics::new(cfg, 0);
        if params.len() != template.params.len() {
            return Err(Error::Dimension {
                context: "dynamics params",
                expected: template.params.len(),
                got: params.len(),
            });
        }
        Ok(GlobalDynamics { params, ..template })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn head_to_mixture(&self, head_out: &[f64]) -> (MixtureParams, Vec<f64>) {
        let k = self.cfg.components;
        let l = self.cfg.latent_dim;
        let logits = head_out[..k].to_vec();
        let means = head_out[k..k + k * l].to_vec();
        let sigma_raw = head_out[k + k * l..].to_vec();
        let sigmas: Vec<f64> = sigma_raw.iter().map(|&r| r.exp().max(SIGMA_FLOOR)).collect();
        (
            MixtureParams {
                latent_dim: l,
                logits,
                means,
                sigmas,
            },
            sigma_raw,
        )
    }

    fn step_impl(
        &self,
        params: &[f64],
        h_prev: &[f64],
        latent: &[f64],
        cond: &[f64],
    ) -> Result<(Vec<f64>, MixtureParams, DynStepCache)> {
        if latent.len() != self.cfg.latent_dim {
            return Err(Error::Dimension {
                context: "dynamics latent input",
                expected: self.cfg.latent_dim,
                got: latent.len(),
            });
        }
        if cond.len() != self.cfg.conditioning_dim() {
            return Err(Error::Dimension {
                context: "dynamics conditioning input",
                expected: self.cfg.conditioning_dim(),
                got: cond.len(),
            });
        }
        if h_prev.len() != self.cfg.hidden_dim {
            return Err(Error::Dimension {
                context: "dynamics summary",
                expected: self.cfg.hidden_dim,
                got: h_prev.len(),
            });
        }
        let mut x = Vec::with_capacity(self.cfg.input_dim());
        x.extend_from_slice(latent);
        x.extend_from_slice(cond);
        let (h, cache) = self.cell.forward(params, &x, h_prev);
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("dynamics step", "non-finite recurrent state"));
        }
        let mut head_out = vec![0.0; self.cfg.head_dim()];
        self.head.forward(params, &h, &mut head_out);
        let (mix, sigma_raw) = self.head_to_mixture(&head_out);
        Ok((
            h.clone(),
            mix,
            DynStepCache {
                gru: cache,
                h,
                sigma_raw,
            },
        ))
    }

    /// One recurrent update: consume (latent, conditioning), produce the next
    /// summary and the mixture over the next latent.
    pub fn step(
        &self,
        h_prev: &Summary,
        latent: &LatentVector,
        cond: &[f64],
    ) -> Result<(Summary, MixtureParams)> {
        let (h, mix, _) = self.step_impl(&self.params, &h_prev.values, &latent.values, cond)?;
        Ok((Summary { values: h }, mix))
    }

    /// Negative log likelihood of a latent sequence under the model. The
    /// sequence holds T+1 latents and T conditioning vectors; the loss sums
    /// the mixture NLL of each transition.
    pub fn d_loss(&self, latents: &[LatentVector], cond: &[Vec<f64>]) -> Result<f64> {
        self.d_loss_inner(&self.params, latents, cond, None)
    }

    /// Same as [`Self::d_loss`] but also accumulates parameter gradients.
    pub fn d_loss_grad(
        &self,
        latents: &[LatentVector],
        cond: &[Vec<f64>],
        grads: &mut [f64],
    ) -> Result<f64> {
        self.d_loss_inner(&self.params, latents, cond, Some(grads))
    }

    /// Loss of a sequence under explicit parameters (finite-difference
    /// verification evaluates shifted copies).
    pub fn d_loss_at(
        &self,
        params: &[f64],
        latents: &[LatentVector],
        cond: &[Vec<f64>],
    ) -> Result<f64> {
        if params.len() != self.params.len() {
            return Err(Error::Dimension {
                context: "dynamics params",
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.d_loss_params(params, latents, cond, None)
    }

    fn d_loss_inner(
        &self,
        params: &[f64],
        latents: &[LatentVector],
        cond: &[Vec<f64>],
        grads: Option<&mut [f64]>,
    ) -> Result<f64> {
        self.d_loss_params(params, latents, cond, grads)
    }

    fn d_loss_params(
        &self,
        params: &[f64],
        latents: &[LatentVector],
        cond: &[Vec<f64>],
        grads: Option<&mut [f64]>,
    ) -> Result<f64> {
        if latents.len() < 2 {
            return Err(Error::Config(
                "d_loss needs at least two latents (one transition)".into(),
            ));
        }
        if cond.len() != latents.len() - 1 {
            return Err(Error::Alignment(format!(
                "conditioning length {} does not match {} transitions",
                cond.len(),
                latents.len() - 1
            )));
        }
        let steps = latents.len() - 1;
        let mut h = vec![0.0; self.cfg.hidden_dim];
        let mut caches = Vec::with_capacity(if grads.is_some() { steps } else { 0 });
        let mut mixes = Vec::with_capacity(if grads.is_some() { steps } else { 0 });
        let mut total = 0.0;
        for t in 0..steps {
            let (h_next, mix, cache) =
                self.step_impl(params, &h, &latents[t].values, &cond[t])?;
            let nll = mixture_nll(&mix, &latents[t + 1].values);
            if !nll.is_finite() {
                return Err(Error::numeric(
                    format!("d_loss step {t}"),
                    "non-finite mixture likelihood",
                ));
            }
            total += nll;
            if grads.is_some() {
                caches.push(cache);
                mixes.push(mix);
            }
            h = h_next;
        }
        let Some(grads) = grads else {
            return Ok(total);
        };

        // Backprop through time.
        let k = self.cfg.components;
        let l = self.cfg.latent_dim;
        let mut dh_next = vec![0.0; self.cfg.hidden_dim];
        for t in (0..steps).rev() {
            let cache = &caches[t];
            let g = mixture_nll_grad(&mixes[t], &latents[t + 1].values);
            // Assemble the head-output gradient: logits, means, sigmas
            // (chained through sigma = max(exp(raw), floor)).
            let mut d_head = vec![0.0; self.cfg.head_dim()];
            d_head[..k].copy_from_slice(&g.d_logits);
            d_head[k..k + k * l].copy_from_slice(&g.d_means);
            for i in 0..k * l {
                let raw = cache.sigma_raw[i];
                let e = raw.exp();
                let dsig_draw = if e > SIGMA_FLOOR { e } else { 0.0 };
                d_head[k + k * l + i] = g.d_sigmas[i] * dsig_draw;
            }
            let mut dh = std::mem::take(&mut dh_next);
            self.head.backward(params, &cache.h, &d_head, &mut dh, grads);
            let mut dx = vec![0.0; self.cfg.input_dim()];
            let mut dh_prev = vec![0.0; self.cfg.hidden_dim];
            self.cell
                .backward(params, &cache.gru, &dh, &mut dx, &mut dh_prev, grads);
            dh_next = dh_prev;
        }
        Ok(total)
    }

    /// Closed-loop rollout: sample each next latent at temperature `tau` and
    /// feed it back as the next input. Returns the (summary, latent) pair
    /// after each step; the conditioning closure supplies the vector for each
    /// step index.
    pub fn rollout_latents(
        &self,
        h0: &Summary,
        l_start: &LatentVector,
        mut conditioning: impl FnMut(usize) -> Vec<f64>,
        steps: usize,
        tau: f64,
        rng: &mut SeedRng,
    ) -> Result<Vec<(Summary, LatentVector)>> {
        if steps == 0 {
            return Err(Error::Config("rollout needs at least one step".into()));
        }
        let mut out = Vec::with_capacity(steps);
        let mut h = h0.clone();
        let mut l = l_start.clone();
        for i in 0..steps {
            let cond = conditioning(i);
            let (h_next, mix) = self.step(&h, &l, &cond)?;
            let l_next = sample_next_latent(&mix, tau, rng)?;
            out.push((h_next.clone(), l_next.clone()));
            h = h_next;
            l = l_next;
        }
        Ok(out)
    }
}

/// Materialize conditioning vectors for a run of world states. The noise
/// mode derives each frame's vector from (seed, frame index) only, so it is
/// independent of position data by construction.
pub fn conditioning_vectors(
    mode: ConditioningMode,
    world_states: &[WorldState],
    n_max: usize,
) -> Vec<Vec<f64>> {
    world_states
        .iter()
        .map(|ws| conditioning_vector(mode, ws, n_max))
        .collect()
}

pub fn conditioning_vector(mode: ConditioningMode, ws: &WorldState, n_max: usize) -> Vec<f64> {
    match mode {
        ConditioningMode::Positions => {
            debug_assert_eq!(ws.positions.len(), 2 * n_max);
            ws.positions.clone()
        }
        ConditioningMode::Noise { seed } => {
            let mut rng = SeedRng::derive(seed, 0x6e6f_6973_0000_0000 | ws.frame as u64);
            let mut v = vec![0.0; 2 * n_max];
            rng.fill_normal(&mut v);
            v
        }
        ConditioningMode::Zeros => vec![0.0; 2 * n_max],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::softmax;

    fn tiny_cfg() -> DynamicsConfig {
        DynamicsConfig {
            latent_dim: 3,
            hidden_dim: 5,
            components: 4,
            n_max: 2,
            conditioning: ConditioningMode::Positions,
        }
    }

    fn latent(vals: &[f64]) -> LatentVector {
        LatentVector {
            values: vals.to_vec(),
        }
    }

    #[test]
    fn step_is_deterministic_and_valid() {
        let dyn_model = GlobalDynamics::new(tiny_cfg(), 7);
        let h0 = Summary::initial(5);
        let l = latent(&[0.1, -0.2, 0.3]);
        let cond = vec![0.5, 0.5, 0.2, 0.8];
        let (h1, mix1) = dyn_model.step(&h0, &l, &cond).unwrap();
        let (h2, mix2) = dyn_model.step(&h0, &l, &cond).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(mix1, mix2);
        mix1.validate().unwrap();
    }

    #[test]
    fn random_parameter_draws_keep_mixture_invariants() {
        let cfg = tiny_cfg();
        let l = latent(&[0.4, 0.0, -0.9]);
        let cond = vec![0.1, 0.9, 0.3, 0.3];
        for seed in 0..100 {
            let m = GlobalDynamics::new(cfg, seed);
            let (_, mix) = m.step(&Summary::initial(5), &l, &cond).unwrap();
            let w = softmax(&mix.logits);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(mix.sigmas.iter().all(|s| *s >= SIGMA_FLOOR));
            mix.validate().unwrap();
        }
    }

    #[test]
    fn d_loss_needs_two_latents_and_aligned_conditioning() {
        let m = GlobalDynamics::new(tiny_cfg(), 1);
        let l = vec![latent(&[0.0, 0.0, 0.0])];
        assert!(m.d_loss(&l, &[]).is_err());
        let l2 = vec![latent(&[0.0; 3]), latent(&[0.1, 0.1, 0.1])];
        assert!(matches!(
            m.d_loss(&l2, &[]),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn noise_conditioning_ignores_positions() {
        let cfg = DynamicsConfig {
            conditioning: ConditioningMode::Noise { seed: 42 },
            ..tiny_cfg()
        };
        let m = GlobalDynamics::new(cfg, 3);
        let latents = vec![
            latent(&[0.2, 0.1, 0.0]),
            latent(&[0.3, 0.0, -0.1]),
            latent(&[0.1, -0.1, 0.2]),
        ];
        let mut ws_a = WorldState::empty(0, 2);
        ws_a.positions = vec![0.1, 0.2, 0.3, 0.4];
        let mut ws_b = WorldState::empty(0, 2);
        ws_b.positions = vec![0.9, 0.8, 0.7, 0.6];
        let mut ws_a1 = ws_a.clone();
        ws_a1.frame = 1;
        let mut ws_b1 = ws_b.clone();
        ws_b1.frame = 1;

        let cond_a = conditioning_vectors(cfg.conditioning, &[ws_a, ws_a1], 2);
        let cond_b = conditioning_vectors(cfg.conditioning, &[ws_b, ws_b1], 2);
        assert_eq!(cond_a, cond_b, "noise stream must not depend on positions");
        let la = m.d_loss(&latents, &cond_a).unwrap();
        let lb = m.d_loss(&latents, &cond_b).unwrap();
        assert_eq!(la, lb);
    }

    #[test]
    fn d_loss_grad_matches_finite_differences_on_slice() {
        let m = GlobalDynamics::new(tiny_cfg(), 11);
        let latents: Vec<LatentVector> = (0..4)
            .map(|i| latent(&[0.1 * i as f64, -0.05 * i as f64, 0.2]))
            .collect();
        let cond: Vec<Vec<f64>> = (0..3).map(|i| vec![0.1 * i as f64; 4]).collect();
        let mut grads = vec![0.0; m.param_count()];
        let loss = m.d_loss_grad(&latents, &cond, &mut grads).unwrap();
        assert!(loss.is_finite());

        let eps = 1e-5;
        let mut probe = SeedRng::new(5);
        for _ in 0..12 {
            let i = probe.below(m.param_count());
            let mut p = m.params.clone();
            p[i] += eps;
            let up = m.d_loss_at(&p, &latents, &cond).unwrap();
            p[i] -= 2.0 * eps;
            let down = m.d_loss_at(&p, &latents, &cond).unwrap();
            let fd = (up - down) / (2.0 * eps);
            let rel = (fd - grads[i]).abs() / (fd.abs() + grads[i].abs()).max(1e-8);
            assert!(rel < 1e-5, "param {i}: fd={fd} analytic={} rel={rel}", grads[i]);
        }
    }

    #[test]
    fn rollout_single_step_equals_step_plus_sample() {
        let m = GlobalDynamics::new(tiny_cfg(), 2);
        let h0 = Summary::initial(5);
        let l0 = latent(&[0.3, -0.3, 0.0]);
        let cond = vec![0.2, 0.2, 0.2, 0.2];
        let tau = 0.5;

        let mut rng_a = SeedRng::new(77);
        let rolled = m
            .rollout_latents(&h0, &l0, |_| cond.clone(), 1, tau, &mut rng_a)
            .unwrap();

        let mut rng_b = SeedRng::new(77);
        let (h1, mix) = m.step(&h0, &l0, &cond).unwrap();
        let l1 = sample_next_latent(&mix, tau, &mut rng_b).unwrap();
        assert_eq!(rolled.len(), 1);
        assert_eq!(rolled[0].0, h1);
        assert_eq!(rolled[0].1, l1);
    }

    #[test]
    fn zero_temperature_rollout_is_deterministic() {
        let m = GlobalDynamics::new(tiny_cfg(), 2);
        let h0 = Summary::initial(5);
        let l0 = latent(&[0.3, -0.3, 0.0]);
        let mut rng_a = SeedRng::new(1);
        let mut rng_b = SeedRng::new(999);
        let a = m
            .rollout_latents(&h0, &l0, |i| vec![0.1 * i as f64; 4], 5, 0.0, &mut rng_a)
            .unwrap();
        let b = m
            .rollout_latents(&h0, &l0, |i| vec![0.1 * i as f64; 4], 5, 0.0, &mut rng_b)
            .unwrap();
        assert_eq!(a, b);
    }
}
