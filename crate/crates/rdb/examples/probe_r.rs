use rdb::encoder::{BandwidthMode, EncoderConfig, MmdConfig};
use rdb::frame::ClaheConfig;
use rdb::nn::OptimConfig;
use rdb::scene::Scene;
use rdb::synth::{gen_gear_task, GearTaskConfig};
use rdb::train::{train_encoder, Stage, StageConfig};

fn main() {
    let cfg = GearTaskConfig { frame_count: 8, image_size: 64, seed: 5, ..GearTaskConfig::default() };
    let (ds, raw) = gen_gear_task(&cfg).unwrap();
    let frames = Scene::from_raw(ds, &raw, &ClaheConfig::default()).unwrap().frames().to_vec();
    let enc_cfg = EncoderConfig { latent_dim: 8, channels: [4, 8, 8, 16] };
    for (label, bw, lr) in [
        ("fixed2 lr1e-3", BandwidthMode::Fixed(2.0), 1e-3),
        ("fixed2 lr5e-4", BandwidthMode::Fixed(2.0), 5e-4),
        ("fixed3 lr1e-3", BandwidthMode::Fixed(3.0), 1e-3),
        ("fixed1.5 lr1e-3", BandwidthMode::Fixed(1.5), 1e-3),
        ("fixed2 lr2e-3", BandwidthMode::Fixed(2.0), 2e-3),
    ] {
        let mmd = MmdConfig { bandwidth: bw, prior_samples: None, ..MmdConfig::default() };
        let stage = StageConfig { optim: OptimConfig::with_lr(lr), batch_size: 8, epochs: 500, seed: 3, ..StageConfig::for_stage(Stage::R) };
        let (_, hist) = train_encoder(&frames, enc_cfg, &mmd, &stage).unwrap();
        let losses: Vec<f64> = hist.iter().map(|(_, l)| *l).collect();
        let ma: Vec<f64> = losses.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
        let mut worst_rise = 0.0f64;
        for k in 0..90.min(ma.len() - 1) { worst_rise = worst_rise.max(ma[k + 1] - ma[k]); }
        println!(
            "{label}: init={:.3} s499={:.4} ratio={:.3} worst_ma_rise={worst_rise:.2e}",
            losses[0], losses[499], losses[499] / losses[0]
        );
    }
}
