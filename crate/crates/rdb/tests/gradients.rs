//! Analytic gradients of all three losses verified against central finite
//! differences on seeded random parameter slices.

use rdb::data::{AgentState, TrajectoryWindow};
use rdb::dynamics::{ConditioningMode, DynamicsConfig, GlobalDynamics};
use rdb::encoder::{BandwidthMode, EncoderConfig, LatentVector, MmdConfig, SpatialEncoder};
use rdb::frame::ImageFrame;
use rdb::predictor::{ContextTrack, InputConfig, LocalPredictor, PredictorConfig};
use rdb::rng::SeedRng;
use rdb::train::finite_difference_check;

const EPS: f64 = 1e-4;
const SLICE: usize = 10;
const TOLERANCE: f64 = 1e-3;

#[test]
fn quadratic_sanity_case_is_nearly_exact() {
    let params: Vec<f64> = (0..50).map(|i| 0.05 * i as f64 - 1.2).collect();
    let analytic: Vec<f64> = params.iter().map(|p| 2.0 * p).collect();
    let worst = finite_difference_check(
        |p| p.iter().map(|v| v * v).sum(),
        &analytic,
        &params,
        SLICE,
        EPS,
        1,
    );
    assert!(worst < 1e-8, "worst relative error {worst}");
}

#[test]
fn encoder_loss_gradient_matches_finite_differences() {
    let enc_cfg = EncoderConfig {
        latent_dim: 6,
        channels: [2, 3, 4, 4],
    };
    let model = SpatialEncoder::new(enc_cfg, 17);
    let mut rng = SeedRng::new(4);
    let batch: Vec<ImageFrame> = (0..3)
        .map(|i| {
            let px: Vec<f64> = (0..ImageFrame::len()).map(|_| rng.uniform()).collect();
            ImageFrame::new(i, px).unwrap()
        })
        .collect();
    // Fixed bandwidth so the kernel scale does not move with the slice.
    let mmd = MmdConfig {
        bandwidth: BandwidthMode::Fixed(1.0),
        ..MmdConfig::default()
    };
    let seed = 23;
    let mut grads = vec![0.0; model.param_count()];
    model.r_loss_grad(&batch, &mmd, seed, &mut grads).unwrap();
    let worst = finite_difference_check(
        |p| {
            let probe = SpatialEncoder::from_params(enc_cfg, p.to_vec()).unwrap();
            probe.r_loss(&batch, &mmd, seed).unwrap()
        },
        &grads,
        &model.params,
        SLICE,
        EPS,
        99,
    );
    assert!(worst < TOLERANCE, "r_loss worst relative error {worst}");
}

#[test]
fn dynamics_loss_gradient_matches_finite_differences() {
    let cfg = DynamicsConfig {
        latent_dim: 4,
        hidden_dim: 6,
        components: 3,
        n_max: 2,
        conditioning: ConditioningMode::Positions,
    };
    let model = GlobalDynamics::new(cfg, 31);
    let mut rng = SeedRng::new(6);
    let latents: Vec<LatentVector> = (0..6)
        .map(|_| LatentVector {
            values: (0..4).map(|_| rng.range(-1.0, 1.0)).collect(),
        })
        .collect();
    let cond: Vec<Vec<f64>> = (0..5)
        .map(|_| (0..4).map(|_| rng.uniform()).collect())
        .collect();
    let mut grads = vec![0.0; model.param_count()];
    model.d_loss_grad(&latents, &cond, &mut grads).unwrap();
    let worst = finite_difference_check(
        |p| model.d_loss_at(p, &latents, &cond).unwrap(),
        &grads,
        &model.params,
        SLICE,
        EPS,
        100,
    );
    assert!(worst < TOLERANCE, "d_loss worst relative error {worst}");
}

#[test]
fn predictor_loss_gradient_matches_finite_differences() {
    let cfg = PredictorConfig {
        hidden_dim: 6,
        input_config: InputConfig::SLH,
        latent_dim: 3,
        summary_dim: 4,
    };
    let model = LocalPredictor::new(cfg, 41);
    let mut rng = SeedRng::new(8);
    let mut windows = Vec::new();
    let mut contexts = Vec::new();
    for agent in 0..2u32 {
        let states: Vec<AgentState> = (0..5)
            .map(|t| AgentState {
                agent_id: agent,
                frame: t,
                x: 0.2 + 0.05 * t as f64 + 0.01 * agent as f64,
                y: 0.7 - 0.04 * t as f64,
            })
            .collect();
        windows.push(TrajectoryWindow::new(agent, 1, states).unwrap());
        contexts.push(ContextTrack {
            latents: (0..5)
                .map(|_| (0..3).map(|_| rng.normal()).collect())
                .collect(),
            summaries: (0..5)
                .map(|_| (0..4).map(|_| rng.normal()).collect())
                .collect(),
        });
    }
    let mut grads = vec![0.0; model.param_count()];
    model.b_loss_grad(&windows, &contexts, &mut grads).unwrap();
    let worst = finite_difference_check(
        |p| model.b_loss_at(p, &windows, &contexts).unwrap(),
        &grads,
        &model.params,
        SLICE,
        EPS,
        101,
    );
    assert!(worst < TOLERANCE, "b_loss worst relative error {worst}");
}
