// Probe: R quality vs training length; basis alignment between per-env
// encoders trained from the same init seed.
use rdb::encoder::{EncoderConfig, MmdConfig};
use rdb::frame::ClaheConfig;
use rdb::nn::OptimConfig;
use rdb::synth::{gear_suite, GearTaskConfig};
use rdb::train::{train_encoder, Stage, StageConfig};

fn ridge_r2_multi(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    // Mean R^2 over target dims, interleaved split.
    let dims = y[0].len();
    let mut total = 0.0;
    for d in 0..dims {
        let t: Vec<f64> = y.iter().map(|r| r[d]).collect();
        total += ridge_r2(x, &t);
    }
    total / dims as f64
}

fn main() {
    let base = GearTaskConfig { speed: 0.012, hover_frames: 3, frame_count: 300, ..GearTaskConfig::default() };
    let clahe = ClaheConfig::default();
    let scenes = gear_suite(&base, 100, 4, &clahe).unwrap();
    let enc_cfg = EncoderConfig { latent_dim: 16, channels: [8, 16, 32, 64] };

    for epochs in [40usize, 80, 140] {
        let stage = StageConfig { optim: OptimConfig::with_lr(1e-3), batch_size: 8, epochs, seed: 11, ..StageConfig::for_stage(Stage::R) };
        let t0 = std::time::Instant::now();
        let (enc, hist) = train_encoder(&scenes[4].frames().to_vec(), enc_cfg, &MmdConfig::default(), &stage).unwrap();
        let latents: Vec<Vec<f64>> = scenes[4].encode_latents(&enc).unwrap().into_iter().map(|l| l.values).collect();
        let states = scenes[4].dataset.states();
        let r2x = ridge_r2(&latents, &states.iter().map(|s| s.x).collect::<Vec<_>>());
        let r2y = ridge_r2(&latents, &states.iter().map(|s| s.y).collect::<Vec<_>>());
        println!("epochs={epochs}: loss {:.3} posR2=({r2x:.3},{r2y:.3}) ({:?})", hist.last().unwrap().1, t0.elapsed());
    }

    // Basis alignment: train encoders on scenes 0 and 1 from the same seed;
    // encode scene 0's frames with both and regress one onto the other.
    let stage = StageConfig { optim: OptimConfig::with_lr(1e-3), batch_size: 8, epochs: 80, seed: 11, ..StageConfig::for_stage(Stage::R) };
    let (enc0, _) = train_encoder(&scenes[0].frames().to_vec(), enc_cfg, &MmdConfig::default(), &stage).unwrap();
    let (enc1, _) = train_encoder(&scenes[1].frames().to_vec(), enc_cfg, &MmdConfig::default(), &stage).unwrap();
    let l_own: Vec<Vec<f64>> = scenes[0].encode_latents(&enc0).unwrap().into_iter().map(|l| l.values).collect();
    let l_other: Vec<Vec<f64>> = scenes[0].encode_latents(&enc1).unwrap().into_iter().map(|l| l.values).collect();
    // Direct per-dim agreement (no regression): correlation of same dims.
    let mut corr = 0.0;
    for d in 0..16 {
        let a: Vec<f64> = l_own.iter().map(|v| v[d]).collect();
        let b: Vec<f64> = l_other.iter().map(|v| v[d]).collect();
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
        let vb: f64 = b.iter().map(|x| (x - mb) * (x - mb)).sum();
        corr += (cov / (va.sqrt() * vb.sqrt()).max(1e-12)).abs();
    }
    println!("same-dim |corr| mean: {:.3}", corr / 16.0);
    println!("cross-encoder linear predictability R2: {:.3}", ridge_r2_multi(&l_other, &l_own));
    // Position readout through the foreign encoder.
    let states = scenes[0].dataset.states();
    let r2x = ridge_r2(&l_other, &states.iter().map(|s| s.x).collect::<Vec<_>>());
    let r2y = ridge_r2(&l_other, &states.iter().map(|s| s.y).collect::<Vec<_>>());
    println!("foreign-encoder posR2 on scene0: ({r2x:.3},{r2y:.3})");
}

fn ridge_r2(latents: &[Vec<f64>], targets: &[f64]) -> f64 {
    let n = latents.len();
    let d = latents[0].len() + 1;
    let lam = 1e-3;
    let train_idx: Vec<usize> = (0..n).filter(|i| i % 2 == 0).collect();
    let test_idx: Vec<usize> = (0..n).filter(|i| i % 2 == 1).collect();
    let row = |i: usize| -> Vec<f64> { let mut r = latents[i].clone(); r.push(1.0); r };
    let mut xtx = vec![0.0; d * d];
    let mut xty = vec![0.0; d];
    for &i in &train_idx {
        let x = row(i);
        for a in 0..d {
            xty[a] += x[a] * targets[i];
            for b in 0..d { xtx[a * d + b] += x[a] * x[b]; }
        }
    }
    for a in 0..d { xtx[a * d + a] += lam; }
    let mut m = xtx;
    let mut y = xty;
    for col in 0..d {
        let piv = (col..d).max_by(|&i, &j| m[i * d + col].abs().partial_cmp(&m[j * d + col].abs()).unwrap()).unwrap();
        for k in 0..d { m.swap(col * d + k, piv * d + k); }
        y.swap(col, piv);
        let p = m[col * d + col];
        for k in 0..d { m[col * d + k] /= p; }
        y[col] /= p;
        for r2 in 0..d {
            if r2 != col {
                let f = m[r2 * d + col];
                for k in 0..d { m[r2 * d + k] -= f * m[col * d + k]; }
                y[r2] -= f * y[col];
            }
        }
    }
    let w = y;
    let mean: f64 = test_idx.iter().map(|&i| targets[i]).sum::<f64>() / test_idx.len() as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for &i in &test_idx {
        let x = row(i);
        let pred: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        ss_res += (targets[i] - pred).powi(2);
        ss_tot += (targets[i] - mean).powi(2);
    }
    1.0 - ss_res / ss_tot
}
