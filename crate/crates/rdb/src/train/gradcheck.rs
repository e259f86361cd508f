//! Central-difference verification of analytic gradients.

use crate::rng::SeedRng;

/// Compare an analytic gradient against central finite differences on a
/// seeded random slice of parameters. Returns the worst relative error,
/// `|fd - analytic| / max(|fd| + |analytic|, 1e-8)`.
pub fn finite_difference_check(
    mut loss: impl FnMut(&[f64]) -> f64,
    analytic: &[f64],
    params: &[f64],
    slice_size: usize,
    eps: f64,
    seed: u64,
) -> f64 {
    assert!(eps > 0.0, "finite differences need a positive epsilon");
    assert_eq!(analytic.len(), params.len());
    let mut rng = SeedRng::derive(seed, 0x6664);
    let mut worst = 0.0f64;
    let mut scratch = params.to_vec();
    for _ in 0..slice_size {
        let i = rng.below(params.len());
        let orig = scratch[i];
        scratch[i] = orig + eps;
        let up = loss(&scratch);
        scratch[i] = orig - eps;
        let down = loss(&scratch);
        scratch[i] = orig;
        let fd = (up - down) / (2.0 * eps);
        let rel = (fd - analytic[i]).abs() / (fd.abs() + analytic[i].abs()).max(1e-8);
        if rel > worst {
            worst = rel;
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_a_quadratic() {
        // loss = |p|^2 has gradient 2p; central differences are exact for
        // quadratics up to rounding.
        let params: Vec<f64> = (0..20).map(|i| 0.1 * i as f64 - 1.0).collect();
        let analytic: Vec<f64> = params.iter().map(|p| 2.0 * p).collect();
        let worst = finite_difference_check(
            |p| p.iter().map(|v| v * v).sum(),
            &analytic,
            &params,
            20,
            1e-4,
            7,
        );
        assert!(worst < 1e-8, "worst relative error {worst}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let params = vec![0.5, -0.25, 1.5];
        let mut analytic: Vec<f64> = params.iter().map(|p| 2.0 * p).collect();
        analytic[1] = 0.0;
        let worst = finite_difference_check(
            |p| p.iter().map(|v| v * v).sum(),
            &analytic,
            &params,
            20,
            1e-4,
            7,
        );
        assert!(worst > 0.5, "should flag the zeroed entry, got {worst}");
    }
}
