//! Corridor crowd scenes: goal-directed agents walking through a walled
//! corridor with a choke point, rendered as colored discs over static walls.

use serde::{Deserialize, Serialize};

use crate::data::{AgentState, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::frame::RawImage;
use crate::rng::SeedRng;
use crate::synth::render::{self, AGENT_PALETTE};

const BACKGROUND: [u8; 3] = [24, 28, 34];
const WALL_COLOR: [u8; 3] = [120, 126, 134];

/// Axis-aligned wall block in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Wall {
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowAxis {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrowdSceneConfig {
    pub walls: Vec<Wall>,
    pub axis: FlowAxis,
    /// Open band of the corridor, perpendicular to the flow axis.
    pub band: (f64, f64),
    pub agents_min: usize,
    pub agents_max: usize,
    pub speed_range: (f64, f64),
    pub frame_count: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl CrowdSceneConfig {
    /// One of a family of corridor layouts, varied by environment index:
    /// band position/width, flow axis, and an optional choke pillar.
    pub fn variant(env: usize, seed: u64) -> Self {
        let axis = if env.is_multiple_of(2) {
            FlowAxis::Horizontal
        } else {
            FlowAxis::Vertical
        };
        let centers = [0.5, 0.38, 0.62, 0.45, 0.58];
        let widths = [0.34, 0.28, 0.30, 0.40, 0.26];
        let c = centers[env % centers.len()];
        let w = widths[env % widths.len()];
        let (b0, b1) = (c - w / 2.0, c + w / 2.0);
        let mut walls = match axis {
            FlowAxis::Horizontal => vec![
                Wall { x0: 0.0, y0: 0.0, x1: 1.0, y1: b0 },
                Wall { x0: 0.0, y0: b1, x1: 1.0, y1: 1.0 },
            ],
            FlowAxis::Vertical => vec![
                Wall { x0: 0.0, y0: 0.0, x1: b0, y1: 1.0 },
                Wall { x0: b1, y0: 0.0, x1: 1.0, y1: 1.0 },
            ],
        };
        // A choke pillar in the middle of the corridor on some variants.
        if env.is_multiple_of(3) {
            let pillar_c = 0.5;
            let along0 = 0.46;
            let along1 = 0.54;
            let pw = w * 0.4;
            match axis {
                FlowAxis::Horizontal => walls.push(Wall {
                    x0: along0,
                    y0: pillar_c - pw / 2.0,
                    x1: along1,
                    y1: pillar_c + pw / 2.0,
                }),
                FlowAxis::Vertical => walls.push(Wall {
                    x0: pillar_c - pw / 2.0,
                    y0: along0,
                    x1: pillar_c + pw / 2.0,
                    y1: along1,
                }),
            }
        }
        CrowdSceneConfig {
            walls,
            axis,
            band: (b0, b1),
            agents_min: 2,
            agents_max: 5,
            speed_range: (0.009, 0.016),
            frame_count: 300,
            image_size: 128,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let margin = 0.03;
        if self.band.1 - self.band.0 < 2.0 * margin + 0.02 {
            return Err(Error::Generation(
                "infeasible layout: corridor band leaves no free space".into(),
            ));
        }
        if self.agents_max < self.agents_min {
            return Err(Error::Config("agents_max must be >= agents_min".into()));
        }
        if !(self.speed_range.0 > 0.0 && self.speed_range.1 >= self.speed_range.0) {
            return Err(Error::Config("speeds must be positive".into()));
        }
        if self.frame_count < 2 {
            return Err(Error::Config("need at least two frames".into()));
        }
        Ok(())
    }

    fn in_wall(&self, x: f64, y: f64) -> bool {
        self.walls.iter().any(|w| w.contains(x, y))
    }
}

struct ActiveAgent {
    id: u32,
    /// Position along the flow axis and across it.
    along: f64,
    across: f64,
    dir: f64,
    speed: f64,
    target_across: f64,
}

/// Generate a crowd scene: agents spawn at one corridor end, walk to the
/// other with light lateral drift and pillar avoidance, and despawn on
/// arrival. All motion is seed-deterministic.
pub fn gen_crowd_scene(cfg: &CrowdSceneConfig) -> Result<(TrajectoryDataset, Vec<RawImage>)> {
    cfg.validate()?;
    let mut rng = SeedRng::derive(cfg.seed, 0x63726f7764);
    let margin = 0.03;
    let band = (cfg.band.0 + margin, cfg.band.1 - margin);

    let mut states: Vec<AgentState> = Vec::new();
    let mut active: Vec<ActiveAgent> = Vec::new();
    let mut next_id: u32 = 0;
    let target_population = |rng: &mut SeedRng, min: usize, max: usize| {
        if max == min {
            min
        } else {
            min + rng.below(max - min + 1)
        }
    };
    let mut want = target_population(&mut rng, cfg.agents_min, cfg.agents_max);

    for frame in 0..cfg.frame_count as u32 {
        // Keep population near the target with staggered spawns.
        while active.len() < want && cfg.agents_max > 0 {
            let dir = if rng.uniform() < 0.5 { 1.0 } else { -1.0 };
            let along = if dir > 0.0 { 0.02 } else { 0.98 };
            let across = rng.range(band.0, band.1);
            active.push(ActiveAgent {
                id: next_id,
                along,
                across,
                dir,
                speed: rng.range(cfg.speed_range.0, cfg.speed_range.1),
                target_across: rng.range(band.0, band.1),
            });
            next_id += 1;
        }
        if frame % 25 == 24 {
            want = target_population(&mut rng, cfg.agents_min, cfg.agents_max);
        }

        // Record, then advance.
        for a in &active {
            let (x, y) = match cfg.axis {
                FlowAxis::Horizontal => (a.along, a.across),
                FlowAxis::Vertical => (a.across, a.along),
            };
            debug_assert!(!cfg.in_wall(x, y), "agent rendered inside a wall");
            states.push(AgentState {
                agent_id: a.id,
                frame,
                x,
                y,
            });
        }
        let mut survivors = Vec::with_capacity(active.len());
        for mut a in active {
            a.along += a.dir * a.speed;
            // Drift toward the target lane, detour around any pillar ahead.
            let mut desired = a.target_across;
            for w in &cfg.walls {
                let (w_along0, w_along1, w_across0, w_across1) = match cfg.axis {
                    FlowAxis::Horizontal => (w.x0, w.x1, w.y0, w.y1),
                    FlowAxis::Vertical => (w.y0, w.y1, w.x0, w.x1),
                };
                // Only interior pillars matter; side walls span the corridor.
                if (w_across0 <= band.0 - margin || w_across1 >= band.1 + margin)
                    && w_across0 <= band.0 && w_across1 >= band.1 {
                        continue;
                    }
                let ahead = (a.along < w_along0 && a.dir > 0.0 && w_along0 - a.along < 0.2)
                    || (a.along > w_along1 && a.dir < 0.0 && a.along - w_along1 < 0.2)
                    || (a.along >= w_along0 && a.along <= w_along1);
                let overlaps = a.across >= w_across0 - margin && a.across <= w_across1 + margin;
                if ahead && overlaps {
                    let mid = (w_across0 + w_across1) / 2.0;
                    desired = if a.across >= mid {
                        (w_across1 + margin).min(band.1)
                    } else {
                        (w_across0 - margin).max(band.0)
                    };
                }
            }
            let drift = (desired - a.across).clamp(-a.speed, a.speed);
            a.across = (a.across + drift).clamp(band.0, band.1);
            if a.along > 0.01 && a.along < 0.99 {
                survivors.push(a);
            }
        }
        active = survivors;
    }

    let size = cfg.image_size;
    let first = states.iter().map(|s| s.frame).min().unwrap_or(0);
    let last = states.iter().map(|s| s.frame).max().unwrap_or(0);
    let n_max_seen = cfg.agents_max;
    let dataset = TrajectoryDataset::from_states(
        format!("crowd-{}", cfg.seed),
        states,
        size as u32,
        size as u32,
        0.4,
        n_max_seen,
    )?;

    // Render after the fact so frame images align with annotations exactly.
    let mut frames = Vec::with_capacity((last - first) as usize + 1);
    for frame in first..=last {
        let mut img = RawImage::new(size, size);
        render::fill(&mut img, BACKGROUND);
        for w in &cfg.walls {
            render::fill_rect(&mut img, w.x0, w.y0, w.x1, w.y1, WALL_COLOR);
        }
        for s in dataset.agents_at(frame) {
            let color = AGENT_PALETTE[s.agent_id as usize % AGENT_PALETTE.len()];
            render::fill_disc(&mut img, s.x, s.y, 0.035, color);
        }
        frames.push(img);
    }
    Ok((dataset, frames))
}
