//! Closed-loop context for evaluation rollouts: the dynamics model consumes
//! observed latents and world states during warm-up, then rolls forward
//! generatively, substituting the agent's own predictions into its world
//! state slot while other agents hold their last observed positions.

use crate::data::WorldState;
use crate::dynamics::{
    conditioning_vector, sample_next_latent, GlobalDynamics, MixtureParams, Summary,
};
use crate::encoder::LatentVector;
use crate::error::{Error, Result};
use crate::predictor::{ContextStream, ContextVecs};
use crate::rng::SeedRng;

pub struct DynamicsContext<'a> {
    dynamics: &'a GlobalDynamics,
    latents: &'a [Vec<f64>],
    world: &'a [WorldState],
    first_frame: u32,
    window_start: u32,
    obs_len: usize,
    agent_id: u32,
    tau: f64,
    freeze: bool,
    rng: SeedRng,
    h: Summary,
    pending: Option<MixtureParams>,
    last_world: Option<WorldState>,
    frozen: Option<ContextVecs>,
    current_frame: u32,
}

impl<'a> DynamicsContext<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dynamics: &'a GlobalDynamics,
        latents: &'a [Vec<f64>],
        world: &'a [WorldState],
        first_frame: u32,
        window_start: u32,
        obs_len: usize,
        agent_id: u32,
        tau: f64,
        freeze: bool,
        rng: SeedRng,
    ) -> Self {
        DynamicsContext {
            dynamics,
            latents,
            world,
            first_frame,
            window_start,
            obs_len,
            agent_id,
            tau,
            freeze,
            rng,
            h: Summary::initial(dynamics.cfg.hidden_dim),
            pending: None,
            last_world: None,
            frozen: None,
            current_frame: window_start,
        }
    }

    fn index_of(&self, frame: u32) -> Result<usize> {
        let idx = (frame.checked_sub(self.first_frame)).ok_or_else(|| {
            Error::Index(format!("frame {frame} precedes scene start"))
        })? as usize;
        if idx >= self.latents.len() || idx >= self.world.len() {
            return Err(Error::Index(format!(
                "frame {frame} beyond prepared scene data"
            )));
        }
        Ok(idx)
    }
}

impl ContextStream for DynamicsContext<'_> {
    fn observe(&mut self, t: usize) -> Result<ContextVecs> {
        debug_assert!(t < self.obs_len);
        let frame = self.window_start + t as u32;
        let idx = self.index_of(frame)?;
        let latent = LatentVector {
            values: self.latents[idx].clone(),
        };
        let ws = &self.world[idx];
        let cond = conditioning_vector(self.dynamics.cfg.conditioning, ws, self.dynamics.cfg.n_max);
        let (h_next, mix) = self.dynamics.step(&self.h, &latent, &cond)?;
        self.h = h_next;
        self.pending = Some(mix);
        self.current_frame = frame;
        let out = ContextVecs {
            latent: latent.values,
            summary: self.h.values.clone(),
        };
        if t + 1 == self.obs_len {
            self.last_world = Some(ws.clone());
            self.frozen = Some(out.clone());
        }
        Ok(out)
    }

    fn advance(&mut self, predicted: (f64, f64)) -> Result<ContextVecs> {
        if self.freeze {
            return Ok(self
                .frozen
                .clone()
                .expect("advance follows at least one observation"));
        }
        let mix = self
            .pending
            .take()
            .ok_or_else(|| Error::Config("advance before any observation".into()))?;
        let latent = sample_next_latent(&mix, self.tau, &mut self.rng)?;
        self.current_frame += 1;
        let mut ws = self
            .last_world
            .clone()
            .expect("advance follows the observation phase");
        ws.frame = self.current_frame;
        if let Some(slot) = ws.slot_of(self.agent_id) {
            ws.positions[2 * slot] = predicted.0;
            ws.positions[2 * slot + 1] = predicted.1;
        }
        let cond =
            conditioning_vector(self.dynamics.cfg.conditioning, &ws, self.dynamics.cfg.n_max);
        let (h_next, mix_next) = self.dynamics.step(&self.h, &latent, &cond)?;
        self.h = h_next;
        self.pending = Some(mix_next);
        Ok(ContextVecs {
            latent: latent.values,
            summary: self.h.values.clone(),
        })
    }
}
