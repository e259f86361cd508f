pub mod eval;
pub mod ingest;
pub mod plot;
pub mod replay;
pub mod synth;
pub mod train;
pub mod transfer;

use std::path::{Path, PathBuf};

use rdb::error::{Error, Result};
use rdb::frame::ClaheConfig;
use rdb::scene::Scene;

/// Load the scenes behind a list of dataset manifests.
pub fn load_scenes(manifests: &[PathBuf], clahe: &ClaheConfig) -> Result<Vec<Scene>> {
    if manifests.is_empty() {
        return Err(Error::Config("no dataset manifests given".into()));
    }
    manifests.iter().map(|m| Scene::load(m, clahe)).collect()
}

/// Files to content-hash for a dataset manifest: the manifest itself plus
/// its annotation CSV.
pub fn dataset_inputs(manifests: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut inputs = Vec::new();
    for path in manifests {
        inputs.push(path.clone());
        let m = rdb::data::DatasetManifest::load(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let ann = if m.annotations_path.is_absolute() {
            m.annotations_path.clone()
        } else {
            base.join(&m.annotations_path)
        };
        inputs.push(ann);
    }
    Ok(inputs)
}
