use crate::error::{Error, Result};
use crate::rng::SeedRng;

pub const SIGMA_FLOOR: f64 = 1e-6;
pub const RHO_LIMIT: f64 = 0.999;

const LN_2PI: f64 = 1.8378770664093453;

/// Correlated 2D Gaussian over an agent's next position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BivariateGaussian {
    pub mean_x: f64,
    pub mean_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub rho: f64,
}

impl BivariateGaussian {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_x >= SIGMA_FLOOR && self.sigma_y >= SIGMA_FLOOR) {
            return Err(Error::numeric("bivariate gaussian", "sigma below floor"));
        }
        if !(self.rho.abs() <= RHO_LIMIT) {
            return Err(Error::numeric("bivariate gaussian", "correlation out of range"));
        }
        if ![self.mean_x, self.mean_y, self.sigma_x, self.sigma_y, self.rho]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::numeric("bivariate gaussian", "non-finite parameter"));
        }
        Ok(())
    }

    /// Negative log density at (x, y).
    pub fn nll(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.mean_x;
        let dy = y - self.mean_y;
        let q = 1.0 - self.rho * self.rho;
        let z = dx * dx / (self.sigma_x * self.sigma_x)
            - 2.0 * self.rho * dx * dy / (self.sigma_x * self.sigma_y)
            + dy * dy / (self.sigma_y * self.sigma_y);
        LN_2PI + self.sigma_x.ln() + self.sigma_y.ln() + 0.5 * q.ln() + z / (2.0 * q)
    }

    /// Draw a position via the Cholesky factor of the covariance.
    pub fn sample(&self, rng: &mut SeedRng) -> (f64, f64) {
        let z1 = rng.normal();
        let z2 = rng.normal();
        let x = self.mean_x + self.sigma_x * z1;
        let y = self.mean_y + self.sigma_y * (self.rho * z1 + (1.0 - self.rho * self.rho).sqrt() * z2);
        (x, y)
    }
}

/// Gradients of the NLL with respect to the five distribution parameters.
#[derive(Debug, Clone, Copy, Default)]
pub struct BivariateGrads {
    pub d_mean_x: f64,
    pub d_mean_y: f64,
    pub d_sigma_x: f64,
    pub d_sigma_y: f64,
    pub d_rho: f64,
}

pub fn bivariate_nll_grad(g: &BivariateGaussian, x: f64, y: f64) -> (f64, BivariateGrads) {
    let dx = x - g.mean_x;
    let dy = y - g.mean_y;
    let sx = g.sigma_x;
    let sy = g.sigma_y;
    let rho = g.rho;
    let q = 1.0 - rho * rho;
    let z = dx * dx / (sx * sx) - 2.0 * rho * dx * dy / (sx * sy) + dy * dy / (sy * sy);
    let nll = LN_2PI + sx.ln() + sy.ln() + 0.5 * q.ln() + z / (2.0 * q);
    let grads = BivariateGrads {
        d_mean_x: -(dx / (sx * sx) - rho * dy / (sx * sy)) / q,
        d_mean_y: -(dy / (sy * sy) - rho * dx / (sx * sy)) / q,
        d_sigma_x: 1.0 / sx - dx * dx / (q * sx * sx * sx) + rho * dx * dy / (q * sx * sx * sy),
        d_sigma_y: 1.0 / sy - dy * dy / (q * sy * sy * sy) + rho * dx * dy / (q * sy * sy * sx),
        d_rho: -rho / q - dx * dy / (sx * sy * q) + z * rho / (q * q),
    };
    (nll, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(rho: f64) -> BivariateGaussian {
        BivariateGaussian {
            mean_x: 0.0,
            mean_y: 0.0,
            sigma_x: 1.0,
            sigma_y: 1.0,
            rho,
        }
    }

    #[test]
    fn nll_at_mean_unit_sigma_is_ln_two_pi() {
        let nll = unit(0.0).nll(0.0, 0.0);
        assert!((nll - LN_2PI).abs() < 1e-12, "nll={nll}");
    }

    #[test]
    fn correlation_shrinks_nll_at_mean_by_half_log_q() {
        let nll = unit(0.5).nll(0.0, 0.0);
        let want = LN_2PI + 0.5 * 0.75f64.ln();
        assert!((nll - want).abs() < 1e-12, "nll={nll} want={want}");
    }

    #[test]
    fn nll_symmetric_under_axis_exchange() {
        let g = BivariateGaussian {
            mean_x: 0.2,
            mean_y: -0.4,
            sigma_x: 0.7,
            sigma_y: 1.9,
            rho: 0.3,
        };
        let swapped = BivariateGaussian {
            mean_x: g.mean_y,
            mean_y: g.mean_x,
            sigma_x: g.sigma_y,
            sigma_y: g.sigma_x,
            rho: g.rho,
        };
        let (x, y) = (0.9, -1.4);
        assert!((g.nll(x, y) - swapped.nll(y, x)).abs() < 1e-12);
    }

    #[test]
    fn grads_match_finite_differences() {
        let g = BivariateGaussian {
            mean_x: 0.1,
            mean_y: -0.3,
            sigma_x: 0.8,
            sigma_y: 1.2,
            rho: 0.4,
        };
        let (x, y) = (0.5, 0.2);
        let (_, an) = bivariate_nll_grad(&g, x, y);
        let eps = 1e-7;
        let fd = |f: &dyn Fn(f64) -> BivariateGaussian| {
            (f(eps).nll(x, y) - f(-eps).nll(x, y)) / (2.0 * eps)
        };
        let cases: Vec<(f64, Box<dyn Fn(f64) -> BivariateGaussian>)> = vec![
            (an.d_mean_x, Box::new(|e| BivariateGaussian { mean_x: g.mean_x + e, ..g })),
            (an.d_mean_y, Box::new(|e| BivariateGaussian { mean_y: g.mean_y + e, ..g })),
            (an.d_sigma_x, Box::new(|e| BivariateGaussian { sigma_x: g.sigma_x + e, ..g })),
            (an.d_sigma_y, Box::new(|e| BivariateGaussian { sigma_y: g.sigma_y + e, ..g })),
            (an.d_rho, Box::new(|e| BivariateGaussian { rho: g.rho + e, ..g })),
        ];
        for (analytic, perturb) in cases {
            let numeric = fd(&*perturb);
            assert!(
                (numeric - analytic).abs() < 1e-6,
                "fd={numeric} analytic={analytic}"
            );
        }
    }

    #[test]
    fn sampling_matches_requested_correlation() {
        let g = BivariateGaussian {
            mean_x: 0.3,
            mean_y: -0.2,
            sigma_x: 1.0,
            sigma_y: 2.0,
            rho: 0.8,
        };
        let mut rng = SeedRng::new(2024);
        let n = 10_000;
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let (x, y) = g.sample(&mut rng);
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
        let mx = sx / n as f64;
        let my = sy / n as f64;
        let vx = sxx / n as f64 - mx * mx;
        let vy = syy / n as f64 - my * my;
        let cov = sxy / n as f64 - mx * my;
        let rho = cov / (vx.sqrt() * vy.sqrt());
        assert!((rho - 0.8).abs() < 0.03, "empirical rho={rho}");
    }

    #[test]
    fn zero_correlation_yields_near_zero_cross_covariance() {
        let g = BivariateGaussian {
            mean_x: 0.0,
            mean_y: 0.0,
            sigma_x: 1.0,
            sigma_y: 1.0,
            rho: 0.0,
        };
        let mut rng = SeedRng::new(55);
        let n = 10_000;
        let mut sxy = 0.0;
        for _ in 0..n {
            let (x, y) = g.sample(&mut rng);
            sxy += x * y;
        }
        assert!((sxy / n as f64).abs() < 0.02);
    }

    #[test]
    fn floor_sigma_samples_collapse_to_mean() {
        let g = BivariateGaussian {
            mean_x: 0.4,
            mean_y: 0.6,
            sigma_x: SIGMA_FLOOR,
            sigma_y: SIGMA_FLOOR,
            rho: 0.0,
        };
        let mut rng = SeedRng::new(3);
        for _ in 0..100 {
            let (x, y) = g.sample(&mut rng);
            assert!((x - 0.4).abs() < 1e-4 && (y - 0.6).abs() < 1e-4);
        }
    }
}
