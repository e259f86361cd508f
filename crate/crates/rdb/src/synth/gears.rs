//! The landmark-visitation task: a single effector visits color-coded
//! landmarks in a fixed color order. The spatial arrangement of landmarks
//! varies per seed while the visitation order stays fixed, so the traversal
//! direction is governed by where the colors sit, not by any motion prior.

use serde::{Deserialize, Serialize};

use crate::data::{AgentState, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::frame::RawImage;
use crate::rng::SeedRng;
use crate::synth::render;

/// Visitation order is this color order, identical across every scene.
pub const LANDMARK_COLORS: [[u8; 3]; 5] = [
    [220, 40, 40],  // red
    [235, 140, 30], // orange
    [150, 60, 200], // purple
    [140, 90, 40],  // brown
    [40, 180, 70],  // green
];

pub const EFFECTOR_COLOR: [u8; 3] = [245, 245, 245];
const BACKGROUND: [u8; 3] = [22, 26, 30];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Clockwise,
    Anticlockwise,
}

impl Direction {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clockwise" | "cw" => Ok(Direction::Clockwise),
            "anticlockwise" | "counterclockwise" | "ccw" => Ok(Direction::Anticlockwise),
            other => Err(Error::Config(format!(
                "unknown direction `{other}` (expected clockwise or anticlockwise)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Clockwise => "clockwise",
            Direction::Anticlockwise => "anticlockwise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GearTaskConfig {
    /// Number of landmarks (at most `LANDMARK_COLORS.len()`).
    pub landmarks: usize,
    pub direction: Direction,
    /// Effector speed in normalized units per frame.
    pub speed: f64,
    /// Frames spent hovering over each landmark on arrival.
    pub hover_frames: usize,
    pub frame_count: usize,
    pub image_size: usize,
    pub seed: u64,
    /// Draw the effector over landmarks so it covers them while hovering.
    pub occlusion: bool,
}

impl Default for GearTaskConfig {
    fn default() -> Self {
        GearTaskConfig {
            landmarks: 5,
            direction: Direction::Clockwise,
            speed: 0.015,
            hover_frames: 4,
            frame_count: 360,
            image_size: 128,
            seed: 0,
            occlusion: true,
        }
    }
}

impl GearTaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.landmarks < 2 || self.landmarks > LANDMARK_COLORS.len() {
            return Err(Error::Config(format!(
                "landmark count must be 2..={}, got {}",
                LANDMARK_COLORS.len(),
                self.landmarks
            )));
        }
        if !(self.speed > 0.0) {
            return Err(Error::Config("effector speed must be positive".into()));
        }
        if self.frame_count < 2 {
            return Err(Error::Config("need at least two frames".into()));
        }
        if self.image_size < 32 {
            return Err(Error::Config("image size must be at least 32".into()));
        }
        Ok(())
    }
}

/// Landmark positions for a seed: jittered placements around a circle whose
/// angular order follows the visitation color order in the configured
/// direction.
pub fn landmark_layout(cfg: &GearTaskConfig) -> Vec<(f64, f64)> {
    let mut rng = SeedRng::derive(cfg.seed, 0x67656172);
    let n = cfg.landmarks;
    let theta0 = rng.range(0.0, std::f64::consts::TAU);
    let step = std::f64::consts::TAU / n as f64;
    let sign = match cfg.direction {
        // Image coordinates have y growing downward, so increasing the
        // standard angle sweeps clockwise on screen.
        Direction::Clockwise => 1.0,
        Direction::Anticlockwise => -1.0,
    };
    (0..n)
        .map(|i| {
            let jitter = rng.range(-0.18, 0.18);
            let radius = rng.range(0.26, 0.36);
            let theta = theta0 + sign * (i as f64 * step) + jitter;
            (0.5 + radius * theta.cos(), 0.5 + radius * theta.sin())
        })
        .collect()
}

/// Generate the effector trajectory and rendered frames.
pub fn gen_gear_task(cfg: &GearTaskConfig) -> Result<(TrajectoryDataset, Vec<RawImage>)> {
    cfg.validate()?;
    let landmarks = landmark_layout(cfg);
    for (i, a) in landmarks.iter().enumerate() {
        for b in landmarks.iter().skip(i + 1) {
            let d2 = (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
            if d2 < 1e-6 {
                return Err(Error::Generation(
                    "degenerate layout: coincident landmarks".into(),
                ));
            }
        }
    }

    // Piecewise path: move at constant speed toward the next landmark in
    // color order, hover on arrival, repeat.
    let mut positions = Vec::with_capacity(cfg.frame_count);
    let mut pos = landmarks[0];
    let mut target_idx = 1 % cfg.landmarks;
    let mut hover_left = cfg.hover_frames;
    for _ in 0..cfg.frame_count {
        positions.push(pos);
        if hover_left > 0 {
            hover_left -= 1;
            continue;
        }
        let target = landmarks[target_idx];
        let dx = target.0 - pos.0;
        let dy = target.1 - pos.1;
        let dist = (dx * dx + dy * dy).sqrt();
        if dist <= cfg.speed {
            pos = target;
            target_idx = (target_idx + 1) % cfg.landmarks;
            hover_left = cfg.hover_frames;
        } else {
            pos = (pos.0 + cfg.speed * dx / dist, pos.1 + cfg.speed * dy / dist);
        }
    }

    let size = cfg.image_size;
    let mut frames = Vec::with_capacity(cfg.frame_count);
    let mut states = Vec::with_capacity(cfg.frame_count);
    let landmark_radius = 0.055;
    let effector_radius = 0.065;
    for (frame, &(x, y)) in positions.iter().enumerate() {
        let mut img = RawImage::new(size, size);
        render::fill(&mut img, BACKGROUND);
        if cfg.occlusion {
            for (i, &(lx, ly)) in landmarks.iter().enumerate() {
                render::fill_disc(&mut img, lx, ly, landmark_radius, LANDMARK_COLORS[i]);
            }
            render::fill_disc(&mut img, x, y, effector_radius, EFFECTOR_COLOR);
        } else {
            render::fill_disc(&mut img, x, y, effector_radius, EFFECTOR_COLOR);
            for (i, &(lx, ly)) in landmarks.iter().enumerate() {
                render::fill_disc(&mut img, lx, ly, landmark_radius, LANDMARK_COLORS[i]);
            }
        }
        frames.push(img);
        states.push(AgentState {
            agent_id: 0,
            frame: frame as u32,
            x,
            y,
        });
    }

    let dataset = TrajectoryDataset::from_states(
        format!("gears-{}-{}", cfg.direction.as_str(), cfg.seed),
        states,
        size as u32,
        size as u32,
        0.4,
        1,
    )?;
    Ok((dataset, frames))
}
