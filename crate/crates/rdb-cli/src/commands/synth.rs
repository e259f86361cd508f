use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use rdb::error::{Error, Result};
use rdb::synth::{
    gen_crowd_scene, gen_gear_task, write_scene, CrowdSceneConfig, Direction, GearTaskConfig,
};

use crate::manifest::RunManifest;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Task to synthesize: crowd | gears.
    pub task: String,
    /// JSON task config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out/synth")]
    pub out: PathBuf,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub image_size: Option<usize>,
    /// Landmark task: clockwise | anticlockwise.
    #[arg(long)]
    pub direction: Option<String>,
    #[arg(long)]
    pub landmarks: Option<usize>,
    #[arg(long)]
    pub speed: Option<f64>,
    #[arg(long)]
    pub hover: Option<usize>,
    /// Crowd task: corridor layout variant index.
    #[arg(long)]
    pub env: Option<usize>,
    #[arg(long)]
    pub agents_min: Option<usize>,
    #[arg(long)]
    pub agents_max: Option<usize>,
    /// Also write a contact-sheet preview SVG.
    #[arg(long)]
    pub preview: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum ResolvedSynth {
    Gears { cfg: GearTaskConfig, preview: bool },
    Crowd { cfg: CrowdSceneConfig, preview: bool },
}

fn load_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn resolve(args: &SynthArgs) -> Result<ResolvedSynth> {
    match args.task.as_str() {
        "gears" => {
            let mut cfg: GearTaskConfig = match &args.config {
                Some(path) => load_json(path)?,
                None => GearTaskConfig::default(),
            };
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(frames) = args.frames {
                cfg.frame_count = frames;
            }
            if let Some(size) = args.image_size {
                cfg.image_size = size;
            }
            if let Some(direction) = &args.direction {
                cfg.direction = Direction::parse(direction)?;
            }
            if let Some(landmarks) = args.landmarks {
                cfg.landmarks = landmarks;
            }
            if let Some(speed) = args.speed {
                cfg.speed = speed;
            }
            if let Some(hover) = args.hover {
                cfg.hover_frames = hover;
            }
            cfg.validate()?;
            Ok(ResolvedSynth::Gears {
                cfg,
                preview: args.preview,
            })
        }
        "crowd" => {
            let mut cfg: CrowdSceneConfig = match &args.config {
                Some(path) => load_json(path)?,
                None => CrowdSceneConfig::variant(args.env.unwrap_or(0), args.seed.unwrap_or(0)),
            };
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(frames) = args.frames {
                cfg.frame_count = frames;
            }
            if let Some(size) = args.image_size {
                cfg.image_size = size;
            }
            if let Some(min) = args.agents_min {
                cfg.agents_min = min;
            }
            if let Some(max) = args.agents_max {
                cfg.agents_max = max;
            }
            cfg.validate()?;
            Ok(ResolvedSynth::Crowd {
                cfg,
                preview: args.preview,
            })
        }
        other => Err(Error::Config(format!(
            "unknown synth task `{other}` (expected crowd or gears)"
        ))),
    }
}

pub fn execute(resolved: &ResolvedSynth, out: &PathBuf) -> Result<()> {
    let (dataset, frames, preview) = match resolved {
        ResolvedSynth::Gears { cfg, preview } => {
            let (d, f) = gen_gear_task(cfg)?;
            (d, f, *preview)
        }
        ResolvedSynth::Crowd { cfg, preview } => {
            let (d, f) = gen_crowd_scene(cfg)?;
            (d, f, *preview)
        }
    };
    let manifest_path = write_scene(out, &dataset, &frames)?;
    if preview {
        let step = (frames.len() / 16).max(1);
        let sample: Vec<_> = frames.iter().step_by(step).take(16).cloned().collect();
        let svg = rdb::plot::contact_sheet_svg(&sample, 4)?;
        rdb::plot::save_svg(out.join("preview.svg"), &svg)?;
    }
    println!("wrote {}", manifest_path.display());
    Ok(())
}

pub fn run(args: SynthArgs) -> Result<()> {
    let resolved = resolve(&args)?;
    let seed = match &resolved {
        ResolvedSynth::Gears { cfg, .. } => cfg.seed,
        ResolvedSynth::Crowd { cfg, .. } => cfg.seed,
    };
    let manifest = RunManifest::new(
        "synth",
        serde_json::to_value(&resolved).expect("synth config serializes"),
        seed,
        &[],
        &["manifest.json", "annotations.csv", "frames"],
    )?;
    manifest.write(&args.out)?;
    execute(&resolved, &args.out)
}
