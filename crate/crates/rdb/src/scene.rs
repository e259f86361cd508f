//! A loaded environment: annotations plus preprocessed frame images.

use std::path::Path;

use crate::data::{build_world_states, DatasetManifest, TrajectoryDataset, WorldState};
use crate::encoder::{LatentVector, SceneCodec, SpatialEncoder};
use crate::error::{Error, Result};
use crate::frame::{
    frame_file_name, load_frame_image, preprocess_frame_indexed, ClaheConfig, ImageFrame, RawImage,
};

#[derive(Debug, Clone)]
pub struct Scene {
    pub dataset: TrajectoryDataset,
    frames: Vec<ImageFrame>,
    first_frame: u32,
}

impl Scene {
    /// Pair a dataset with preprocessed frames covering its full frame range.
    pub fn new(dataset: TrajectoryDataset, frames: Vec<ImageFrame>) -> Result<Self> {
        let (first, last) = dataset
            .frame_range()
            .ok_or_else(|| Error::Config("scene dataset has no annotations".into()))?;
        let expected = (last - first) as usize + 1;
        if frames.len() != expected {
            return Err(Error::Config(format!(
                "scene `{}` needs {expected} frames covering {first}..={last}, got {}",
                dataset.name,
                frames.len()
            )));
        }
        Ok(Scene {
            dataset,
            frames,
            first_frame: first,
        })
    }

    /// Preprocess raw rendered frames (CLAHE + resize) into a scene.
    pub fn from_raw(
        dataset: TrajectoryDataset,
        raw: &[RawImage],
        clahe: &ClaheConfig,
    ) -> Result<Self> {
        let first = dataset.frame_range().map(|(f, _)| f).unwrap_or(0);
        let frames = raw
            .iter()
            .enumerate()
            .map(|(i, img)| {
                preprocess_frame_indexed(img, clahe.tiles, clahe.clip_limit, first + i as u32)
            })
            .collect::<Result<Vec<_>>>()?;
        Scene::new(dataset, frames)
    }

    /// Load a scene from a dataset manifest, reading `frame_<i>.png` images
    /// from its frames directory.
    pub fn load(manifest_path: impl AsRef<Path>, clahe: &ClaheConfig) -> Result<Self> {
        let manifest_path = manifest_path.as_ref();
        let manifest = DatasetManifest::load(manifest_path)?;
        let dataset = manifest.open(manifest_path)?;
        let frames_dir = dataset
            .frames_dir
            .clone()
            .ok_or_else(|| Error::Config("manifest has no frames directory".into()))?;
        let (first, last) = dataset
            .frame_range()
            .ok_or_else(|| Error::Config("dataset has no annotations".into()))?;
        let mut frames = Vec::with_capacity((last - first) as usize + 1);
        for frame in first..=last {
            let path = frames_dir.join(frame_file_name(frame));
            let raw = load_frame_image(&path)?;
            frames.push(preprocess_frame_indexed(
                &raw,
                clahe.tiles,
                clahe.clip_limit,
                frame,
            )?);
        }
        Scene::new(dataset, frames)
    }

    pub fn name(&self) -> &str {
        &self.dataset.name
    }

    pub fn frames(&self) -> &[ImageFrame] {
        &self.frames
    }

    pub fn frame_image(&self, frame: u32) -> Option<&ImageFrame> {
        frame
            .checked_sub(self.first_frame)
            .and_then(|i| self.frames.get(i as usize))
    }

    pub fn first_frame(&self) -> u32 {
        self.first_frame
    }

    /// World states over the scene's frame range at the given slot width.
    pub fn world_states(&self, n_max: usize) -> Vec<WorldState> {
        build_world_states(&self.dataset, n_max).0
    }

    /// Encode every frame once; index i corresponds to `first_frame + i`.
    pub fn encode_latents(&self, encoder: &SpatialEncoder) -> Result<Vec<LatentVector>> {
        self.frames.iter().map(|f| encoder.encode(f)).collect()
    }
}
