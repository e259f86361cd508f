// Warm-started per-environment encoders: gear ablation end to end.
use rdb::data::WindowConfig;
use rdb::dynamics::{ConditioningMode, DynamicsConfig};
use rdb::encoder::{EncoderConfig, MmdConfig, SpatialEncoder};
use rdb::eval::{evaluate, ConstantVelocityModel, EvalOptions, PredictorOnlyModel, RandomModel, RdbModel};
use rdb::frame::ClaheConfig;
use rdb::nn::OptimConfig;
use rdb::predictor::{InputConfig, PredictorConfig};
use rdb::scene::Scene;
use rdb::synth::{gear_suite, GearTaskConfig};
use rdb::train::{train_dynamics, train_encoder, train_encoder_from, train_predictor, PredictorUpstream, Stage, StageConfig};

fn env_f(name: &str, default: f64) -> f64 { std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default) }
fn env_u(name: &str, default: usize) -> usize { std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default) }

fn main() {
    let t0 = std::time::Instant::now();
    let base_cfg = GearTaskConfig {
        speed: env_f("SPEED", 0.012),
        hover_frames: env_u("HOVER", 3),
        frame_count: env_u("FRAMES", 300),
        ..GearTaskConfig::default()
    };
    let clahe = ClaheConfig::default();
    let scenes = gear_suite(&base_cfg, 100, 4, &clahe).unwrap();
    let (train_scenes, test_scene) = (&scenes[..4], &scenes[4]);
    let train_refs: Vec<&Scene> = train_scenes.iter().collect();

    let enc_cfg = EncoderConfig { latent_dim: 16, channels: [8, 16, 32, 64] };
    let r_stage = StageConfig { optim: OptimConfig::with_lr(1e-3), batch_size: 8, epochs: env_u("R_EPOCHS", 80), seed: 11, ..StageConfig::for_stage(Stage::R) };
    let ft_stage = StageConfig { epochs: env_u("FT_EPOCHS", 40), ..r_stage };
    // Base on scene 0, warm-start the rest.
    let (base_enc, _) = train_encoder(&scenes[0].frames().to_vec(), enc_cfg, &MmdConfig::default(), &r_stage).unwrap();
    let mut encoders: Vec<SpatialEncoder> = vec![base_enc.clone()];
    for scene in &scenes[1..] {
        let (enc, _) = train_encoder_from(base_enc.clone(), &scene.frames().to_vec(), &MmdConfig::default(), &ft_stage).unwrap();
        encoders.push(enc);
    }
    println!("5 encoders (warm-started) ({:?})", t0.elapsed());
    let pool_encoders: Vec<&SpatialEncoder> = encoders[..4].iter().collect();
    let test_encoder = &encoders[4];

    let wc = WindowConfig { obs_len: 12, pred_len: 32, frame_period: 0.4, train_len: 8 };
    let opts = EvalOptions { seed: 5, tau: 0.5, ..EvalOptions::default() };
    let cv = evaluate(&ConstantVelocityModel, test_scene, &wc, &opts).unwrap();
    let rnd = evaluate(&RandomModel, test_scene, &wc, &opts).unwrap();
    println!("cv={:.4} random={:.4}", cv.ade, rnd.ade);

    let b_epochs = env_u("B_EPOCHS", 300);
    let train_len = env_u("TRAIN_LEN", 20);
    let b_stage = StageConfig { optim: OptimConfig::with_lr(3e-3), batch_size: 1, epochs: b_epochs, seed: 13, chunk_stride: 2, ..StageConfig::for_stage(Stage::B) };
    let s_cfg = PredictorConfig { hidden_dim: 48, input_config: InputConfig::S, latent_dim: 0, summary_dim: 0 };
    let (b_s, h_s) = train_predictor(&train_refs, PredictorUpstream { encoders: None, dynamics: None }, s_cfg, 1, train_len, &b_stage).unwrap();
    let s_report = evaluate(&PredictorOnlyModel { predictor: &b_s }, test_scene, &wc, &opts).unwrap();
    println!("B(s): train {:.3}, ADE {:.4} ({:?})", h_s.last().unwrap().1, s_report.ade, t0.elapsed());

    let test_latents = test_scene.encode_latents(test_encoder).unwrap();
    let world = test_scene.world_states(1);
    let cond = rdb::dynamics::conditioning_vectors(ConditioningMode::Positions, &world, 1);

    for (d_hid, d_epochs) in [(32usize, 6usize)] {
        let dyn_cfg = DynamicsConfig { latent_dim: 16, hidden_dim: d_hid, components: 3, n_max: 1, conditioning: ConditioningMode::Positions };
        let d_stage = StageConfig { optim: OptimConfig::with_lr(1e-3), batch_size: 4, epochs: d_epochs, seed: 12, chunk_stride: 1, ..StageConfig::for_stage(Stage::D) };
        let (dynamics, dh) = train_dynamics(&train_refs, &pool_encoders, dyn_cfg, train_len, &d_stage).unwrap();
        let d_test = dynamics.d_loss(&test_latents[..100], &cond[..99]).unwrap() / 99.0;

        let slh_cfg = PredictorConfig { hidden_dim: 48, input_config: InputConfig::SLH, latent_dim: 16, summary_dim: d_hid };
        let (b_slh, h_slh) = train_predictor(&train_refs, PredictorUpstream { encoders: Some(&pool_encoders), dynamics: Some(&dynamics) }, slh_cfg, 1, train_len, &b_stage).unwrap();
        let slh_model = RdbModel::new(test_encoder, &dynamics, &b_slh, opts).unwrap();
        let slh = evaluate(&slh_model, test_scene, &wc, &opts).unwrap();
        let frozen_opts = EvalOptions { freeze_context: true, ..opts };
        let slh_frozen = evaluate(&RdbModel::new(test_encoder, &dynamics, &b_slh, frozen_opts).unwrap(), test_scene, &wc, &frozen_opts).unwrap();
        println!(
            "d_hid={d_hid} d_ep={d_epochs}: D train {:.2} test {:.2} | B(slh) train {:.3} ADE {:.4} frozen {:.4} | gap {:.1}% ({:?})",
            dh.last().unwrap().1, d_test, h_slh.last().unwrap().1, slh.ade, slh_frozen.ade,
            100.0 * (1.0 - slh.ade / s_report.ade), t0.elapsed()
        );
    }
}
