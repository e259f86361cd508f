use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::types::AgentState;
use crate::error::{Error, Result};

/// An ingested annotation set: normalized agent states indexed by frame and
/// by agent, plus the frame geometry needed to reach source-pixel space and
/// the image directory for the scene (when image modality is enabled).
#[derive(Debug, Clone)]
pub struct TrajectoryDataset {
    pub name: String,
    pub width_px: u32,
    pub height_px: u32,
    pub frame_period: f64,
    pub n_max: usize,
    pub frames_dir: Option<PathBuf>,
    states: Vec<AgentState>,
    by_frame: BTreeMap<u32, Vec<usize>>,
    by_agent: BTreeMap<u32, Vec<usize>>,
}

impl TrajectoryDataset {
    /// Build a dataset from already-normalized states. States may arrive in
    /// any order; duplicates of (frame, agent_id) are rejected.
    pub fn from_states(
        name: impl Into<String>,
        mut states: Vec<AgentState>,
        width_px: u32,
        height_px: u32,
        frame_period: f64,
        n_max: usize,
    ) -> Result<Self> {
        states.sort_by_key(|s| (s.frame, s.agent_id));
        for w in states.windows(2) {
            if w[0].frame == w[1].frame && w[0].agent_id == w[1].agent_id {
                return Err(Error::Config(format!(
                    "duplicate state for frame {} agent {}",
                    w[0].frame, w[0].agent_id
                )));
            }
        }
        for s in &states {
            if !(0.0..=1.0).contains(&s.x) || !(0.0..=1.0).contains(&s.y) {
                return Err(Error::Config(format!(
                    "state outside unit square: frame {} agent {} ({}, {})",
                    s.frame, s.agent_id, s.x, s.y
                )));
            }
        }
        let mut by_frame: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        let mut by_agent: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, s) in states.iter().enumerate() {
            by_frame.entry(s.frame).or_default().push(i);
            by_agent.entry(s.agent_id).or_default().push(i);
        }
        Ok(TrajectoryDataset {
            name: name.into(),
            width_px,
            height_px,
            frame_period,
            n_max,
            frames_dir: None,
            states,
            by_frame,
            by_agent,
        })
    }

    pub fn with_frames_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.frames_dir = Some(dir.into());
        self
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.by_agent.keys().copied()
    }

    pub fn n_agents(&self) -> usize {
        self.by_agent.len()
    }

    /// States in a frame, sorted ascending by agent id.
    pub fn agents_at(&self, frame: u32) -> Vec<AgentState> {
        self.by_frame
            .get(&frame)
            .map(|idx| idx.iter().map(|&i| self.states[i]).collect())
            .unwrap_or_default()
    }

    pub fn state_of(&self, agent_id: u32, frame: u32) -> Option<AgentState> {
        self.by_agent.get(&agent_id).and_then(|idx| {
            idx.iter()
                .map(|&i| self.states[i])
                .find(|s| s.frame == frame)
        })
    }

    /// Number of frames in which an agent appears.
    pub fn presence_count(&self, agent_id: u32) -> usize {
        self.by_agent.get(&agent_id).map_or(0, |v| v.len())
    }

    /// Inclusive frame range covered by the annotations; None when empty.
    pub fn frame_range(&self) -> Option<(u32, u32)> {
        let first = self.by_frame.keys().next()?;
        let last = self.by_frame.keys().next_back()?;
        Some((*first, *last))
    }

    pub fn n_frames(&self) -> usize {
        match self.frame_range() {
            Some((lo, hi)) => (hi - lo) as usize + 1,
            None => 0,
        }
    }

    /// Maximal runs of consecutive frames in which an agent is present.
    pub fn contiguous_runs(&self, agent_id: u32) -> Vec<(u32, u32)> {
        let Some(idx) = self.by_agent.get(&agent_id) else {
            return Vec::new();
        };
        let mut runs = Vec::new();
        let mut start = self.states[idx[0]].frame;
        let mut prev = start;
        for &i in &idx[1..] {
            let f = self.states[i].frame;
            if f != prev + 1 {
                runs.push((start, prev));
                start = f;
            }
            prev = f;
        }
        runs.push((start, prev));
        runs
    }

    /// Map a normalized position back to source pixels.
    pub fn denormalize(&self, x: f64, y: f64) -> (f64, f64) {
        (x * self.width_px as f64, y * self.height_px as f64)
    }
}

/// Read annotations from a CSV with header `frame,agent_id,x,y` where x and y
/// are in source-pixel units; positions are normalized by the frame
/// dimensions into [0,1].
pub fn load_annotations(
    path: impl AsRef<Path>,
    frame_dims: (u32, u32),
) -> Result<TrajectoryDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (width, height) = frame_dims;
    if width == 0 || height == 0 {
        return Err(Error::Config("frame dimensions must be nonzero".into()));
    }
    let mut states = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "frame,agent_id,x,y" => {}
        Some((_, header)) => {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                msg: format!("expected header `frame,agent_id,x,y`, got `{}`", header.trim()),
            })
        }
        None => {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                msg: "empty annotation file".into(),
            })
        }
    }
    for (lineno0, line) in lines {
        let lineno = lineno0 + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut next_field = |name: &str| -> Result<&str> {
            fields.next().ok_or_else(|| Error::Parse {
                path: path.into(),
                line: lineno,
                msg: format!("missing field `{name}`"),
            })
        };
        let frame: u32 = next_field("frame")?.trim().parse().map_err(|e| Error::Parse {
            path: path.into(),
            line: lineno,
            msg: format!("bad frame: {e}"),
        })?;
        let agent_id: u32 = next_field("agent_id")?
            .trim()
            .parse()
            .map_err(|e| Error::Parse {
                path: path.into(),
                line: lineno,
                msg: format!("bad agent_id: {e}"),
            })?;
        let x: f64 = next_field("x")?.trim().parse().map_err(|e| Error::Parse {
            path: path.into(),
            line: lineno,
            msg: format!("bad x: {e}"),
        })?;
        let y: f64 = next_field("y")?.trim().parse().map_err(|e| Error::Parse {
            path: path.into(),
            line: lineno,
            msg: format!("bad y: {e}"),
        })?;
        if fields.next().is_some() {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno,
                msg: "too many fields".into(),
            });
        }
        if !seen.insert((frame, agent_id)) {
            return Err(Error::DuplicateRecord {
                path: path.into(),
                line: lineno,
                frame,
                agent_id,
            });
        }
        if !(0.0..=width as f64).contains(&x) || !x.is_finite() {
            return Err(Error::CoordinateRange {
                path: path.into(),
                line: lineno,
                value: x,
                max: width as f64,
            });
        }
        if !(0.0..=height as f64).contains(&y) || !y.is_finite() {
            return Err(Error::CoordinateRange {
                path: path.into(),
                line: lineno,
                value: y,
                max: height as f64,
            });
        }
        states.push(AgentState {
            agent_id,
            frame,
            x: x / width as f64,
            y: y / height as f64,
        });
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let mut ds = TrajectoryDataset::from_states(name, states, width, height, 0.4, 16)?;
    if let Some(dir) = path.parent() {
        let frames = dir.join("frames");
        if frames.is_dir() {
            ds.frames_dir = Some(frames);
        }
    }
    Ok(ds)
}

/// On-disk description of a dataset: where its annotations and frame images
/// live plus the geometry needed to interpret them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub annotations_path: PathBuf,
    pub frames_dir: PathBuf,
    pub width_px: u32,
    pub height_px: u32,
    pub frame_period_s: f64,
    pub n_max: usize,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            line: e.line(),
            msg: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Load the dataset this manifest points at. Relative paths are resolved
    /// against the manifest's own directory.
    pub fn open(&self, manifest_path: impl AsRef<Path>) -> Result<TrajectoryDataset> {
        let base = manifest_path
            .as_ref()
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let resolve = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let mut ds = load_annotations(
            resolve(&self.annotations_path),
            (self.width_px, self.height_px),
        )?;
        ds.name = self.name.clone();
        ds.frame_period = self.frame_period_s;
        ds.n_max = self.n_max;
        ds.frames_dir = Some(resolve(&self.frames_dir));
        Ok(ds)
    }
}
