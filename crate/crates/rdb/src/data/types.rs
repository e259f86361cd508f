use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One agent's annotated position at one frame, in normalized [0,1]² space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub agent_id: u32,
    pub frame: u32,
    pub x: f64,
    pub y: f64,
}

impl AgentState {
    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

/// Fixed-width snapshot of every agent in a frame: `positions` holds
/// (x, y) per slot, `mask` marks which slots are occupied. Masked-off slots
/// hold exactly 0.0 and occupied slots are sorted ascending by agent id.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub frame: u32,
    pub positions: Vec<f64>,
    pub mask: Vec<bool>,
    pub agent_ids: Vec<u32>,
}

impl WorldState {
    pub fn empty(frame: u32, n_max: usize) -> Self {
        WorldState {
            frame,
            positions: vec![0.0; 2 * n_max],
            mask: vec![false; n_max],
            agent_ids: vec![0; n_max],
        }
    }

    pub fn n_max(&self) -> usize {
        self.mask.len()
    }

    pub fn occupied(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Slot index of an agent, if it survived truncation for this frame.
    pub fn slot_of(&self, agent_id: u32) -> Option<usize> {
        (0..self.mask.len()).find(|&i| self.mask[i] && self.agent_ids[i] == agent_id)
    }
}

/// Observation/prediction horizon configuration, in frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub obs_len: usize,
    pub pred_len: usize,
    /// Seconds between consecutive frames; 0.4 s makes 4 frames = 1.6 s.
    pub frame_period: f64,
    /// Sequence length used when training the dynamic components.
    pub train_len: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            obs_len: 4,
            pred_len: 8,
            frame_period: 0.4,
            train_len: 8,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.obs_len < 1 || self.pred_len < 1 {
            return Err(Error::Config(
                "window lengths must be at least 1 frame".into(),
            ));
        }
        if self.frame_period <= 0.0 {
            return Err(Error::Config("frame_period must be positive".into()));
        }
        if self.train_len < 2 {
            return Err(Error::Config("train_len must be at least 2 frames".into()));
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.obs_len + self.pred_len
    }
}

/// A contiguous slice of one agent's trajectory: `obs_len` observed frames
/// followed by the prediction horizon. Frames are strictly consecutive and
/// the agent is present in every one of them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryWindow {
    pub agent_id: u32,
    pub start_frame: u32,
    pub obs_len: usize,
    states: Vec<AgentState>,
}

impl TrajectoryWindow {
    pub fn new(agent_id: u32, obs_len: usize, states: Vec<AgentState>) -> Result<Self> {
        if obs_len == 0 || obs_len >= states.len() {
            return Err(Error::Config(format!(
                "window needs 1 <= obs_len < len, got obs_len={obs_len} len={}",
                states.len()
            )));
        }
        let start_frame = states[0].frame;
        for (i, s) in states.iter().enumerate() {
            if s.agent_id != agent_id {
                return Err(Error::Config("window mixes agent ids".into()));
            }
            if s.frame != start_frame + i as u32 {
                return Err(Error::Config("window frames are not consecutive".into()));
            }
        }
        Ok(TrajectoryWindow {
            agent_id,
            start_frame,
            obs_len,
            states,
        })
    }

    pub fn obs(&self) -> &[AgentState] {
        &self.states[..self.obs_len]
    }

    pub fn pred(&self) -> &[AgentState] {
        &self.states[self.obs_len..]
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn pred_len(&self) -> usize {
        self.states.len() - self.obs_len
    }

    /// Frame index of the t-th state in the window.
    pub fn frame_at(&self, t: usize) -> u32 {
        self.start_frame + t as u32
    }
}
