use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use rdb::data::{window_split, WindowConfig};
use rdb::error::{Error, Result};
use rdb::eval::{EvalOptions, RdbModel, TrajectoryModel};
use rdb::frame::ClaheConfig;
use rdb::rng::SeedRng;
use rdb::train::PipelineBundle;

use crate::commands::{dataset_inputs, load_scenes};
use crate::manifest::RunManifest;

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Run directory holding {r,d,b}.ckpt.
    #[arg(long)]
    pub run: PathBuf,
    /// Dataset manifest to draw windows from.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "out/plots")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub obs: usize,
    #[arg(long, default_value_t = 12)]
    pub pred: usize,
    /// How many windows to render (evenly spaced over the scene).
    #[arg(long, default_value_t = 6)]
    pub windows: usize,
    /// Sampled rollouts drawn under each window in addition to the mean.
    #[arg(long, default_value_t = 3)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolvedPlot {
    pub run: PathBuf,
    pub data: PathBuf,
    pub window: WindowConfig,
    pub windows: usize,
    pub samples: usize,
    pub seed: u64,
    pub tau: f64,
}

pub fn execute(resolved: &ResolvedPlot, out: &PathBuf) -> Result<()> {
    let scenes = load_scenes(std::slice::from_ref(&resolved.data), &ClaheConfig::default())?;
    let scene = &scenes[0];
    let bundle = PipelineBundle::load(&resolved.run)?;
    let mean_opts = EvalOptions {
        seed: resolved.seed,
        tau: resolved.tau,
        ..EvalOptions::default()
    };
    let sample_opts = EvalOptions {
        best_of: Some(1),
        ..mean_opts
    };
    let mean_model = RdbModel::new(&bundle.encoder, &bundle.dynamics, &bundle.predictor, mean_opts)?;
    let sample_model =
        RdbModel::new(&bundle.encoder, &bundle.dynamics, &bundle.predictor, sample_opts)?;

    let all_windows = window_split(&scene.dataset, &resolved.window, 1)?;
    if all_windows.is_empty() {
        return Err(Error::Config("no windows to plot".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let prep = mean_model.prepare(scene)?;
    let step = (all_windows.len() / resolved.windows.max(1)).max(1);
    for (k, w) in all_windows.iter().step_by(step).take(resolved.windows).enumerate() {
        let mut rng = SeedRng::derive(resolved.seed, k as u64);
        let obs: Vec<(f64, f64)> = w.obs().iter().map(|s| (s.x, s.y)).collect();
        let truth: Vec<(f64, f64)> = w.pred().iter().map(|s| (s.x, s.y)).collect();
        let mean = mean_model.predict(w, &prep, &mut rng)?;
        let mut samples = Vec::with_capacity(resolved.samples);
        for _ in 0..resolved.samples {
            samples.push(sample_model.predict(w, &prep, &mut rng)?);
        }
        let background = scene.frame_image(w.frame_at(w.obs_len - 1));
        let svg = rdb::plot::trajectory_plot_svg(background, &obs, &truth, &mean, &samples)?;
        let path = out.join(format!("window_{:04}.svg", w.start_frame));
        rdb::plot::save_svg(&path, &svg)?;
    }
    println!("wrote {} plots to {}", resolved.windows, out.display());
    Ok(())
}

pub fn run(args: PlotArgs) -> Result<()> {
    let resolved = ResolvedPlot {
        run: args.run.clone(),
        data: args.data.clone(),
        window: WindowConfig {
            obs_len: args.obs,
            pred_len: args.pred,
            frame_period: 0.4,
            train_len: 8,
        },
        windows: args.windows,
        samples: args.samples,
        seed: args.seed,
        tau: args.tau,
    };
    resolved.window.validate()?;
    let inputs = dataset_inputs(std::slice::from_ref(&resolved.data))?;
    RunManifest::new(
        "plot",
        serde_json::to_value(&resolved).expect("plot config serializes"),
        resolved.seed,
        &inputs,
        &[],
    )?
    .write(&args.out)?;
    execute(&resolved, &args.out)
}
