use crate::error::{Error, Result};
use crate::nn::{log_sum_exp, softmax};

/// Standard deviations are floored here everywhere they are produced.
pub const SIGMA_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.8378770664093453;

/// K-component diagonal-Gaussian mixture over the next latent. Logits are
/// raw (pre-softmax); sigmas are per-dimension standard deviations already
/// floored at [`SIGMA_FLOOR`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pub latent_dim: usize,
    pub logits: Vec<f64>,
    /// Means, row-major: component k occupies `k*latent_dim..(k+1)*latent_dim`.
    pub means: Vec<f64>,
    /// Standard deviations, same layout as means.
    pub sigmas: Vec<f64>,
}

impl MixtureParams {
    pub fn components(&self) -> usize {
        self.logits.len()
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.latent_dim..(k + 1) * self.latent_dim]
    }

    pub fn sigma(&self, k: usize) -> &[f64] {
        &self.sigmas[k * self.latent_dim..(k + 1) * self.latent_dim]
    }

    /// Mixture weights after softmax.
    pub fn weights(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.components();
        if k == 0 {
            return Err(Error::Config("mixture needs at least one component".into()));
        }
        if self.means.len() != k * self.latent_dim || self.sigmas.len() != k * self.latent_dim {
            return Err(Error::Dimension {
                context: "mixture params",
                expected: k * self.latent_dim,
                got: self.means.len(),
            });
        }
        if self.logits.iter().any(|v| !v.is_finite())
            || self.means.iter().any(|v| !v.is_finite())
        {
            return Err(Error::numeric("mixture params", "non-finite parameter"));
        }
        if self.sigmas.iter().any(|s| !(*s >= SIGMA_FLOOR)) {
            return Err(Error::numeric("mixture params", "sigma below floor"));
        }
        let sum: f64 = self.weights().iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::numeric("mixture params", "weights do not normalize"));
        }
        Ok(())
    }
}

/// Per-dimension Gaussian log density summed over dimensions.
fn component_log_density(mean: &[f64], sigma: &[f64], x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for d in 0..x.len() {
        let z = (x[d] - mean[d]) / sigma[d];
        acc += -0.5 * z * z - sigma[d].ln() - 0.5 * LN_2PI;
    }
    acc
}

/// Negative log likelihood of `x` under the mixture, computed in log space
/// via log-sum-exp.
pub fn mixture_nll(mix: &MixtureParams, x: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), mix.latent_dim);
    let k = mix.components();
    let log_w_norm = log_sum_exp(&mix.logits);
    let mut terms = Vec::with_capacity(k);
    for c in 0..k {
        let lw = mix.logits[c] - log_w_norm;
        terms.push(lw + component_log_density(mix.mean(c), mix.sigma(c), x));
    }
    -log_sum_exp(&terms)
}

/// Direct-density evaluation (no log-sum-exp); numerically fragile by design,
/// retained as an independent route for verification.
pub fn mixture_nll_direct(mix: &MixtureParams, x: &[f64]) -> f64 {
    let w = mix.weights();
    let mut density = 0.0;
    for c in 0..mix.components() {
        let mean = mix.mean(c);
        let sigma = mix.sigma(c);
        let mut comp = 1.0;
        for d in 0..x.len() {
            let z = (x[d] - mean[d]) / sigma[d];
            comp *= (-0.5 * z * z).exp() / (sigma[d] * (2.0 * std::f64::consts::PI).sqrt());
        }
        density += w[c] * comp;
    }
    -density.ln()
}

/// Gradients of [`mixture_nll`] with respect to logits, means, and sigmas.
#[derive(Debug, Clone)]
pub struct MixtureGrads {
    pub d_logits: Vec<f64>,
    pub d_means: Vec<f64>,
    pub d_sigmas: Vec<f64>,
}

pub fn mixture_nll_grad(mix: &MixtureParams, x: &[f64]) -> MixtureGrads {
    let k = mix.components();
    let l = mix.latent_dim;
    let log_w_norm = log_sum_exp(&mix.logits);
    let mut joint = Vec::with_capacity(k);
    for c in 0..k {
        let lw = mix.logits[c] - log_w_norm;
        joint.push(lw + component_log_density(mix.mean(c), mix.sigma(c), x));
    }
    let log_p = log_sum_exp(&joint);
    // Responsibilities gamma_c = exp(joint_c - log_p); softmax weights w_c.
    let gamma: Vec<f64> = joint.iter().map(|j| (j - log_p).exp()).collect();
    let w = mix.weights();

    let mut d_logits = vec![0.0; k];
    let mut d_means = vec![0.0; k * l];
    let mut d_sigmas = vec![0.0; k * l];
    for c in 0..k {
        d_logits[c] = w[c] - gamma[c];
        let mean = mix.mean(c);
        let sigma = mix.sigma(c);
        for d in 0..l {
            let diff = x[d] - mean[d];
            let s = sigma[d];
            d_means[c * l + d] = gamma[c] * (-(diff) / (s * s));
            d_sigmas[c * l + d] = gamma[c] * (1.0 / s - diff * diff / (s * s * s));
        }
    }
    MixtureGrads {
        d_logits,
        d_means,
        d_sigmas,
    }
}
