//! Maximum mean discrepancy between two samples under a Gaussian RBF kernel.
//!
//! The estimator is the biased V-statistic
//! `mean k(a,a') + mean k(b,b') - 2 mean k(a,b)`, which is exactly zero for
//! identical samples. The bandwidth is treated as a constant in the backward
//! pass (gradients flow through the kernel arguments only).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BandwidthMode {
    /// Bandwidth = median pairwise Euclidean distance of the pooled sample.
    MedianHeuristic,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdConfig {
    pub bandwidth: BandwidthMode,
    /// Loss weight for the prior-matching term.
    pub weight: f64,
    /// Prior draws per batch; defaults to the batch size when None.
    pub prior_samples: Option<usize>,
}

impl Default for MmdConfig {
    fn default() -> Self {
        MmdConfig {
            bandwidth: BandwidthMode::MedianHeuristic,
            weight: 10.0,
            prior_samples: None,
        }
    }
}

impl MmdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.weight < 0.0 {
            return Err(Error::Config("mmd weight must be nonnegative".into()));
        }
        if let BandwidthMode::Fixed(h) = self.bandwidth {
            if !(h > 0.0) {
                return Err(Error::Config("fixed bandwidth must be positive".into()));
            }
        }
        Ok(())
    }
}

fn check_dims(a: &[f64], b: &[f64], dim: usize) -> Result<(usize, usize)> {
    if dim == 0 || a.is_empty() || b.is_empty() {
        return Err(Error::Config("mmd samples must be nonempty".into()));
    }
    if !a.len().is_multiple_of(dim) {
        return Err(Error::Dimension {
            context: "mmd sample_a",
            expected: dim,
            got: a.len(),
        });
    }
    if !b.len().is_multiple_of(dim) {
        return Err(Error::Dimension {
            context: "mmd sample_b",
            expected: dim,
            got: b.len(),
        });
    }
    Ok((a.len() / dim, b.len() / dim))
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Resolve the kernel bandwidth for a pair of flat row-major samples.
pub fn bandwidth(a: &[f64], b: &[f64], dim: usize, cfg: &MmdConfig) -> Result<f64> {
    match cfg.bandwidth {
        BandwidthMode::Fixed(h) => Ok(h),
        BandwidthMode::MedianHeuristic => {
            let (n, m) = check_dims(a, b, dim)?;
            let row = |i: usize| -> &[f64] {
                if i < n {
                    &a[i * dim..(i + 1) * dim]
                } else {
                    let j = i - n;
                    &b[j * dim..(j + 1) * dim]
                }
            };
            let total = n + m;
            let mut dists = Vec::with_capacity(total * (total - 1) / 2);
            for i in 0..total {
                for j in (i + 1)..total {
                    dists.push(sq_dist(row(i), row(j)).sqrt());
                }
            }
            if dists.is_empty() {
                return Ok(1.0);
            }
            dists.sort_by(|x, y| x.partial_cmp(y).expect("finite distances"));
            let mid = dists.len() / 2;
            let med = if dists.len() % 2 == 1 {
                dists[mid]
            } else {
                0.5 * (dists[mid - 1] + dists[mid])
            };
            Ok(if med > 0.0 { med } else { 1.0 })
        }
    }
}

/// Squared MMD between flat row-major samples of width `dim`.
pub fn mmd_squared(a: &[f64], b: &[f64], dim: usize, cfg: &MmdConfig) -> Result<f64> {
    cfg.validate()?;
    let (n, m) = check_dims(a, b, dim)?;
    let h = bandwidth(a, b, dim, cfg)?;
    let inv = 1.0 / (2.0 * h * h);
    let kernel_sum = |x: &[f64], nx: usize, y: &[f64], ny: usize| -> f64 {
        let mut total = 0.0;
        for i in 0..nx {
            let xi = &x[i * dim..(i + 1) * dim];
            for j in 0..ny {
                let yj = &y[j * dim..(j + 1) * dim];
                total += (-sq_dist(xi, yj) * inv).exp();
            }
        }
        total
    };
    let t_aa = kernel_sum(a, n, a, n) / (n * n) as f64;
    let t_bb = kernel_sum(b, m, b, m) / (m * m) as f64;
    let t_ab = kernel_sum(a, n, b, m) / (n * m) as f64;
    Ok(t_aa + t_bb - 2.0 * t_ab)
}

/// Gradient of [`mmd_squared`] with respect to the entries of `a`, holding
/// the bandwidth constant.
pub fn mmd_grad_a(a: &[f64], b: &[f64], dim: usize, cfg: &MmdConfig) -> Result<Vec<f64>> {
    let (n, m) = check_dims(a, b, dim)?;
    let h = bandwidth(a, b, dim, cfg)?;
    let inv = 1.0 / (2.0 * h * h);
    let inv_h2 = 1.0 / (h * h);
    let mut grad = vec![0.0; a.len()];
    for p in 0..n {
        let ap = &a[p * dim..(p + 1) * dim];
        let gp = 2.0 / (n * n) as f64;
        let gc = 2.0 / (n * m) as f64;
        let row = &mut grad[p * dim..(p + 1) * dim];
        for j in 0..n {
            let aj = &a[j * dim..(j + 1) * dim];
            let k = (-sq_dist(ap, aj) * inv).exp();
            for d in 0..dim {
                row[d] += gp * k * (-(ap[d] - aj[d]) * inv_h2);
            }
        }
        for j in 0..m {
            let bj = &b[j * dim..(j + 1) * dim];
            let k = (-sq_dist(ap, bj) * inv).exp();
            for d in 0..dim {
                row[d] -= gc * k * (-(ap[d] - bj[d]) * inv_h2);
            }
        }
    }
    Ok(grad)
}
