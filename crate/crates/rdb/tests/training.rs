//! Training-engine behavior: smoke convergence, determinism, monotonic
//! moving-average descent, stage dependencies, and pipeline wiring.

use rdb::data::WindowConfig;
use rdb::dynamics::ConditioningMode;
use rdb::encoder::{BandwidthMode, EncoderConfig, MmdConfig, SceneCodec};
use rdb::error::Error;
use rdb::frame::{ClaheConfig, ImageFrame};
use rdb::nn::OptimConfig;
use rdb::predictor::{InputConfig, PredictorConfig};
use rdb::synth::{gear_suite, gen_gear_task, GearTaskConfig};
use rdb::scene::Scene;
use rdb::train::{
    train_encoder, train_pipeline, train_predictor, PipelineConfig, PredictorUpstream, Stage,
    StageConfig,
};

fn tiny_encoder_cfg() -> EncoderConfig {
    EncoderConfig {
        latent_dim: 8,
        channels: [4, 8, 8, 16],
    }
}

fn stage(seed: u64, epochs: usize, lr: f64, batch: usize) -> StageConfig {
    StageConfig {
        optim: OptimConfig::with_lr(lr),
        batch_size: batch,
        epochs,
        seed,
        ..StageConfig::for_stage(Stage::R)
    }
}

/// Eight distinct synthetic frames from the landmark generator.
fn eight_frames() -> Vec<ImageFrame> {
    let cfg = GearTaskConfig {
        frame_count: 8,
        image_size: 64,
        seed: 5,
        ..GearTaskConfig::default()
    };
    let (ds, raw) = gen_gear_task(&cfg).unwrap();
    Scene::from_raw(ds, &raw, &ClaheConfig::default())
        .unwrap()
        .frames()
        .to_vec()
}

#[test]
fn smoke_training_cuts_loss_to_quarter() {
    let images = eight_frames();
    // 500 steps: 500 epochs of one full batch over the 8 frames.
    let cfg = stage(3, 500, 1e-3, 8);
    let (_, history) = train_encoder(&images, tiny_encoder_cfg(), &MmdConfig::default(), &cfg)
        .unwrap();
    assert_eq!(history.len(), 500);
    let initial = history[0].1;
    let last = history.last().unwrap().1;
    assert!(
        last < 0.25 * initial,
        "final loss {last} not below 25% of initial {initial}"
    );
}

#[test]
fn moving_average_descends_monotonically_early() {
    let images = eight_frames();
    let cfg = stage(3, 120, 1e-3, 8);
    let mmd = MmdConfig {
        bandwidth: BandwidthMode::Fixed(2.0),
        ..MmdConfig::default()
    };
    let (_, history) = train_encoder(&images, tiny_encoder_cfg(), &mmd, &cfg).unwrap();
    let losses: Vec<f64> = history.iter().map(|(_, l)| *l).collect();
    let ma: Vec<f64> = losses
        .windows(10)
        .map(|w| w.iter().sum::<f64>() / 10.0)
        .collect();
    for i in 0..ma.len().min(91) - 1 {
        assert!(
            ma[i + 1] <= ma[i] + 1e-9,
            "10-step moving average rose at step {i}: {} -> {}",
            ma[i],
            ma[i + 1]
        );
    }
}

#[test]
fn identical_seed_and_config_reproduce_identical_histories() {
    let images = eight_frames();
    let cfg = stage(7, 40, 1e-3, 4);
    let (model_a, hist_a) =
        train_encoder(&images, tiny_encoder_cfg(), &MmdConfig::default(), &cfg).unwrap();
    let (model_b, hist_b) =
        train_encoder(&images, tiny_encoder_cfg(), &MmdConfig::default(), &cfg).unwrap();
    assert_eq!(hist_a, hist_b, "loss histories must be bit-identical");
    assert_eq!(model_a.params, model_b.params);
}

#[test]
fn two_image_training_separates_their_latents() {
    let zero = ImageFrame::new(0, vec![0.0; ImageFrame::len()]).unwrap();
    let one = ImageFrame::new(1, vec![1.0; ImageFrame::len()]).unwrap();
    let images = vec![zero.clone(), one.clone()];
    let cfg = stage(2, 100, 1e-3, 2);
    let (model, _) = train_encoder(&images, tiny_encoder_cfg(), &MmdConfig::default(), &cfg)
        .unwrap();
    let la = model.encode(&zero).unwrap();
    let lb = model.encode(&one).unwrap();
    let dist: f64 = la
        .values
        .iter()
        .zip(&lb.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    assert!(dist > 0.0, "identical latents for distinct images");
}

#[test]
fn predictor_stage_without_required_upstream_is_a_dependency_error() {
    let clahe = ClaheConfig::default();
    let base = GearTaskConfig {
        frame_count: 24,
        ..GearTaskConfig::default()
    };
    let scenes = gear_suite(&base, 0, 1, &clahe).unwrap();
    let refs: Vec<&Scene> = scenes.iter().collect();
    let pred_cfg = PredictorConfig {
        hidden_dim: 8,
        input_config: InputConfig::SLH,
        latent_dim: 8,
        summary_dim: 8,
    };
    let err = train_predictor(
        &refs,
        PredictorUpstream {
            encoders: None,
            dynamics: None,
        },
        pred_cfg,
        1,
        8,
        &stage(1, 1, 1e-3, 1),
    );
    assert!(matches!(err, Err(Error::Dependency(_))), "{err:?}");
}

fn desk_pipeline_cfg(name: &str, seed: u64, holdout: Option<usize>) -> PipelineConfig {
    let mut cfg = PipelineConfig::desk(name, seed);
    cfg.encoder = tiny_encoder_cfg();
    cfg.dynamics_hidden = 12;
    cfg.mixture_components = 2;
    cfg.predictor_hidden = 10;
    cfg.n_max = 1;
    cfg.holdout = holdout;
    cfg.window = WindowConfig {
        obs_len: 2,
        pred_len: 2,
        frame_period: 0.4,
        train_len: 6,
    };
    cfg.stage_r.epochs = 2;
    cfg.stage_d.epochs = 2;
    cfg.stage_b.epochs = 2;
    cfg.stage_d.chunk_stride = 4;
    cfg.stage_b.chunk_stride = 4;
    cfg
}

fn tiny_gear_scenes(n: usize) -> Vec<Scene> {
    let base = GearTaskConfig {
        frame_count: 30,
        ..GearTaskConfig::default()
    };
    gear_suite(&base, 40, n - 1, &ClaheConfig::default()).unwrap()
}

fn temp_dir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("rdb-train-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn pipeline_is_deterministic_and_stage_isolated() {
    let scenes = tiny_gear_scenes(3);
    let cfg = desk_pipeline_cfg("det", 5, Some(2));
    let dir_a = temp_dir("a");
    let dir_b = temp_dir("b");
    let a = train_pipeline(&scenes, &cfg, &dir_a, false).unwrap();
    let b = train_pipeline(&scenes, &cfg, &dir_b, false).unwrap();
    for (pa, pb) in [
        (&a.paths.r, &b.paths.r),
        (&a.paths.d, &b.paths.d),
        (&a.paths.b, &b.paths.b),
        (&a.paths.history, &b.paths.history),
    ] {
        assert_eq!(
            rdb::train::file_sha256(pa).unwrap(),
            rdb::train::file_sha256(pb).unwrap(),
            "{} differs between identical runs",
            pa.display()
        );
    }

    // Retraining only B must leave the R and D checkpoints untouched.
    let r_hash = rdb::train::file_sha256(&a.paths.r).unwrap();
    let d_hash = rdb::train::file_sha256(&a.paths.d).unwrap();
    std::fs::remove_file(&a.paths.b).unwrap();
    let _ = train_pipeline(&scenes, &cfg, &dir_a, true).unwrap();
    assert_eq!(r_hash, rdb::train::file_sha256(&a.paths.r).unwrap());
    assert_eq!(d_hash, rdb::train::file_sha256(&a.paths.d).unwrap());
}

#[test]
fn pipeline_resumes_from_completed_stages_identically() {
    let scenes = tiny_gear_scenes(3);
    let cfg = desk_pipeline_cfg("resume", 9, Some(2));
    let fresh_dir = temp_dir("fresh");
    let resumed_dir = temp_dir("resumed");

    let fresh = train_pipeline(&scenes, &cfg, &fresh_dir, false).unwrap();

    // Stage R alone (base on pool scene 0, held-out re-trained from it),
    // then resume the rest.
    let base_images: Vec<ImageFrame> = scenes[0].frames().to_vec();
    let (base, _) = train_encoder(&base_images, cfg.encoder, &cfg.mmd, &cfg.stage_r).unwrap();
    let held_out: Vec<ImageFrame> = scenes[2].frames().to_vec();
    let (encoder, _) =
        rdb::train::train_encoder_from(base.clone(), &held_out, &cfg.mmd, &cfg.stage_r).unwrap();
    rdb::train::ModuleCheckpoint::Encoder {
        cfg: cfg.encoder,
        seed: cfg.stage_r.seed,
        params: encoder.params.clone(),
    }
    .save(resumed_dir.join("r.ckpt"))
    .unwrap();
    let resumed = train_pipeline(&scenes, &cfg, &resumed_dir, true).unwrap();

    assert_eq!(
        rdb::train::file_sha256(&fresh.paths.r).unwrap(),
        rdb::train::file_sha256(&resumed.paths.r).unwrap()
    );
    assert_eq!(
        rdb::train::file_sha256(&fresh.paths.d).unwrap(),
        rdb::train::file_sha256(&resumed.paths.d).unwrap()
    );
    assert_eq!(
        rdb::train::file_sha256(&fresh.paths.b).unwrap(),
        rdb::train::file_sha256(&resumed.paths.b).unwrap()
    );
}

#[test]
fn leave_one_out_retrains_encoder_on_held_out_scene() {
    // With holdout=2, the pipeline's r.ckpt encoder must equal the base
    // encoder (trained on pool scene 0) re-trained on scene 2's images, and
    // the per-environment pool encoders must exist and differ from it.
    let scenes = tiny_gear_scenes(3);
    let cfg = desk_pipeline_cfg("loo", 13, Some(2));
    let dir = temp_dir("loo");
    let bundle = train_pipeline(&scenes, &cfg, &dir, false).unwrap();

    let base_images: Vec<ImageFrame> = scenes[0].frames().to_vec();
    let (base, _) = train_encoder(&base_images, cfg.encoder, &cfg.mmd, &cfg.stage_r).unwrap();
    let held_out_images: Vec<ImageFrame> = scenes[2].frames().to_vec();
    let (direct, _) =
        rdb::train::train_encoder_from(base.clone(), &held_out_images, &cfg.mmd, &cfg.stage_r)
            .unwrap();
    assert_eq!(bundle.encoder.params, direct.params);

    assert!(bundle.paths.r_env(0).exists());
    assert!(bundle.paths.r_env(1).exists());
    let env0 = rdb::train::ModuleCheckpoint::load(bundle.paths.r_env(0))
        .unwrap()
        .into_encoder()
        .unwrap();
    assert_eq!(env0.params, base.params);
    assert_ne!(bundle.encoder.params, env0.params);
}

#[test]
fn single_environment_mode_trains_everything_on_one_scene() {
    let scenes = tiny_gear_scenes(1);
    let cfg = desk_pipeline_cfg("single", 21, None);
    let dir = temp_dir("single");
    let bundle = train_pipeline(&scenes, &cfg, &dir, false).unwrap();
    assert!(bundle.paths.r.exists() && bundle.paths.d.exists() && bundle.paths.b.exists());
}

#[test]
fn divergent_training_aborts_with_a_numeric_error() {
    let images = eight_frames();
    // An absurd learning rate drives activations to overflow within a few
    // steps; training must abort with a numeric error instead of emitting
    // non-finite checkpoints.
    let cfg = stage(1, 60, 1e200, 8);
    let err = train_encoder(&images, tiny_encoder_cfg(), &MmdConfig::default(), &cfg);
    assert!(matches!(err, Err(Error::Numeric { .. })), "{err:?}");
}

#[test]
fn noise_conditioned_dynamics_ignores_position_changes() {
    // Train two dynamics models on scenes that differ only in annotations
    // (frames identical) under noise conditioning; the checkpoints must be
    // identical because the conditioning never reads positions.
    let base = GearTaskConfig {
        frame_count: 30,
        ..GearTaskConfig::default()
    };
    let clahe = ClaheConfig::default();
    let (ds, raw) = gen_gear_task(&base).unwrap();
    let scene_a = Scene::from_raw(ds.clone(), &raw, &clahe).unwrap();
    // Shift every annotation; keep the frames.
    let shifted: Vec<_> = ds
        .states()
        .iter()
        .map(|s| rdb::data::AgentState {
            x: (s.x * 0.5 + 0.25).min(1.0),
            y: (s.y * 0.5 + 0.25).min(1.0),
            ..*s
        })
        .collect();
    let ds_b = rdb::data::TrajectoryDataset::from_states(
        "shifted",
        shifted,
        ds.width_px,
        ds.height_px,
        ds.frame_period,
        ds.n_max,
    )
    .unwrap();
    let scene_b = Scene::from_raw(ds_b, &raw, &clahe).unwrap();

    let enc_cfg = tiny_encoder_cfg();
    let (encoder, _) = train_encoder(
        &scene_a.frames()[..8],
        enc_cfg,
        &MmdConfig {
            bandwidth: BandwidthMode::MedianHeuristic,
            ..MmdConfig::default()
        },
        &stage(3, 3, 1e-3, 8),
    )
    .unwrap();

    let dyn_cfg = rdb::dynamics::DynamicsConfig {
        latent_dim: enc_cfg.latent_dim,
        hidden_dim: 10,
        components: 2,
        n_max: 1,
        conditioning: ConditioningMode::Noise { seed: 77 },
    };
    let scfg = stage(5, 2, 1e-3, 2);
    let (da, _) =
        rdb::train::train_dynamics(&[&scene_a], &[&encoder], dyn_cfg, 6, &scfg).unwrap();
    let (db, _) =
        rdb::train::train_dynamics(&[&scene_b], &[&encoder], dyn_cfg, 6, &scfg).unwrap();
    assert_eq!(da.params, db.params);
}
