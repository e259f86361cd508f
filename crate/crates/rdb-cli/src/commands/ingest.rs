use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use rdb::data::{build_world_states, window_split, WindowConfig};
use rdb::error::{Error, Result};
use rdb::frame::ClaheConfig;
use rdb::scene::Scene;

use crate::manifest::RunManifest;

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Dataset manifest to validate.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to write the stats report; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub clahe_tiles: usize,
    #[arg(long, default_value_t = 2.0)]
    pub clahe_clip: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolvedIngest {
    pub manifest: PathBuf,
    pub clahe: ClaheConfig,
}

#[derive(Debug, Serialize)]
struct IngestStats {
    name: String,
    frames: usize,
    agents: usize,
    states: usize,
    truncated_frames: usize,
    default_windows: usize,
}

pub fn execute(resolved: &ResolvedIngest, out: Option<&PathBuf>) -> Result<()> {
    let scene = Scene::load(&resolved.manifest, &resolved.clahe)?;
    let (_, warnings) = build_world_states(&scene.dataset, scene.dataset.n_max);
    let windows = window_split(&scene.dataset, &WindowConfig::default(), 1)?;
    let stats = IngestStats {
        name: scene.name().to_string(),
        frames: scene.dataset.n_frames(),
        agents: scene.dataset.n_agents(),
        states: scene.dataset.states().len(),
        truncated_frames: warnings.len(),
        default_windows: windows.len(),
    };
    let text = serde_json::to_string_pretty(&stats).expect("stats serialize");
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("ingest_stats.json");
            std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
            println!("wrote {}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}

pub fn run(args: IngestArgs) -> Result<()> {
    let resolved = ResolvedIngest {
        manifest: args.manifest.clone(),
        clahe: ClaheConfig {
            tiles: args.clahe_tiles,
            clip_limit: args.clahe_clip,
        },
    };
    if let Some(out) = &args.out {
        let inputs = crate::commands::dataset_inputs(std::slice::from_ref(&args.manifest))?;
        RunManifest::new(
            "ingest",
            serde_json::to_value(&resolved).expect("ingest config serializes"),
            0,
            &inputs,
            &["ingest_stats.json"],
        )?
        .write(out)?;
    }
    execute(&resolved, args.out.as_ref())
}
