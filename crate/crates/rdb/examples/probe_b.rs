use rdb::data::{AgentState, TrajectoryDataset, WindowConfig};
use rdb::eval::{evaluate, EvalOptions, PredictorOnlyModel};
use rdb::frame::ImageFrame;
use rdb::nn::OptimConfig;
use rdb::predictor::{InputConfig, PredictorConfig};
use rdb::rng::SeedRng;
use rdb::scene::Scene;
use rdb::train::{train_predictor, PredictorUpstream, Stage, StageConfig};

fn linear_scene(seed: u64, agents: usize, frames: u32) -> Scene {
    let mut rng = SeedRng::new(seed);
    let mut states = Vec::new();
    for agent in 0..agents as u32 {
        let x0 = rng.range(0.3, 0.7);
        let y0 = rng.range(0.3, 0.7);
        let vx = rng.range(-0.012, 0.012);
        let vy = rng.range(-0.012, 0.012);
        for t in 0..frames {
            states.push(AgentState { agent_id: agent, frame: t, x: x0 + vx * t as f64, y: y0 + vy * t as f64 });
        }
    }
    let ds = TrajectoryDataset::from_states("linear", states, 128, 128, 0.4, agents.max(1)).unwrap();
    let dummy = ImageFrame::new(0, vec![0.5; ImageFrame::len()]).unwrap();
    Scene::new(ds, (0..frames).map(|_| dummy.clone()).collect()).unwrap()
}

fn main() {
    let scenes: Vec<Scene> = (0..6).map(|i| linear_scene(10 + i, 4, 16)).collect();
    let refs: Vec<&Scene> = scenes.iter().collect();
    let held_out = linear_scene(99, 4, 16);
    let wc = WindowConfig { obs_len: 4, pred_len: 8, frame_period: 0.4, train_len: 8 };
    for (epochs, lr, hidden) in [(1000usize, 3e-3, 32usize), (3000, 3e-3, 32), (3000, 1e-3, 32)] {
        let pred_cfg = PredictorConfig { hidden_dim: hidden, input_config: InputConfig::S, latent_dim: 0, summary_dim: 0 };
        let stage = StageConfig { optim: OptimConfig::with_lr(lr), epochs, seed: 7, ..StageConfig::for_stage(Stage::B) };
        let t0 = std::time::Instant::now();
        let (model, hist) = train_predictor(&refs, PredictorUpstream { encoders: None, dynamics: None }, pred_cfg, 4, 8, &stage).unwrap();
        let report = evaluate(&PredictorOnlyModel { predictor: &model }, &held_out, &wc, &EvalOptions::default()).unwrap();
        println!("epochs={epochs} lr={lr:.0e} h={hidden}: steps={} final_nll={:.3} ade={:.4} fde={:.4} ({:?})",
            hist.len(), hist.last().unwrap().1, report.ade, report.fde, t0.elapsed());
    }
}
