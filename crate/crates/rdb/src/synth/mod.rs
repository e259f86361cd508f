//! Deterministic generators of desk-scale analog scenes: corridor crowds and
//! the color-ordered landmark-visitation task, both emitting annotations and
//! rendered frames in the canonical dataset formats.

mod crowd;
mod gears;
pub mod render;

pub use crowd::{gen_crowd_scene, CrowdSceneConfig, FlowAxis, Wall};
pub use gears::{
    gen_gear_task, landmark_layout, Direction, GearTaskConfig, EFFECTOR_COLOR, LANDMARK_COLORS,
};

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{DatasetManifest, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::frame::{frame_file_name, save_frame_image, ClaheConfig, RawImage};
use crate::scene::Scene;

/// Write a generated scene to disk in the canonical layout:
/// `annotations.csv` (source-pixel coordinates), `frames/frame_<i>.png`,
/// and `manifest.json`. Returns the manifest path.
pub fn write_scene(
    dir: impl AsRef<Path>,
    dataset: &TrajectoryDataset,
    frames: &[RawImage],
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;

    let csv_path = dir.join("annotations.csv");
    let mut csv = String::from("frame,agent_id,x,y\n");
    for s in dataset.states() {
        let (x, y) = dataset.denormalize(s.x, s.y);
        csv.push_str(&format!("{},{},{x},{y}\n", s.frame, s.agent_id));
    }
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;

    let first = dataset.frame_range().map(|(f, _)| f).unwrap_or(0);
    for (i, img) in frames.iter().enumerate() {
        let path = frames_dir.join(frame_file_name(first + i as u32));
        save_frame_image(&path, img)?;
    }

    let manifest = DatasetManifest {
        name: dataset.name.clone(),
        annotations_path: PathBuf::from("annotations.csv"),
        frames_dir: PathBuf::from("frames"),
        width_px: dataset.width_px,
        height_px: dataset.height_px,
        frame_period_s: dataset.frame_period,
        n_max: dataset.n_max,
    };
    let manifest_path = dir.join("manifest.json");
    manifest.save(&manifest_path)?;
    Ok(manifest_path)
}

/// The landmark-task suite: `train_seeds` clockwise scenes followed by one
/// anticlockwise test scene, preprocessed into [`Scene`]s. The test scene is
/// always last.
pub fn gear_suite(
    base: &GearTaskConfig,
    base_seed: u64,
    train_scenes: usize,
    clahe: &ClaheConfig,
) -> Result<Vec<Scene>> {
    let mut scenes = Vec::with_capacity(train_scenes + 1);
    for i in 0..train_scenes {
        let cfg = GearTaskConfig {
            seed: base_seed + i as u64,
            direction: Direction::Clockwise,
            ..*base
        };
        let (ds, frames) = gen_gear_task(&cfg)?;
        scenes.push(Scene::from_raw(ds, &frames, clahe)?);
    }
    let test_cfg = GearTaskConfig {
        seed: base_seed + train_scenes as u64,
        direction: Direction::Anticlockwise,
        ..*base
    };
    let (ds, frames) = gen_gear_task(&test_cfg)?;
    scenes.push(Scene::from_raw(ds, &frames, clahe)?);
    Ok(scenes)
}

/// A crowd suite of `envs` corridor variants.
pub fn crowd_suite(
    base_seed: u64,
    envs: usize,
    frame_count: usize,
    clahe: &ClaheConfig,
) -> Result<Vec<Scene>> {
    (0..envs)
        .map(|env| {
            let mut cfg = CrowdSceneConfig::variant(env, base_seed + env as u64);
            cfg.frame_count = frame_count;
            let (ds, frames) = gen_crowd_scene(&cfg)?;
            Scene::from_raw(ds, &frames, clahe)
        })
        .collect()
}
