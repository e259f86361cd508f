//! Hand-rolled neural network layers over flat `f64` parameter vectors.
//!
//! Every model in this crate keeps all of its parameters in one flat vector.
//! Layer specs hold dimensions plus offsets into that vector, and implement
//! explicit forward/backward passes. This keeps optimizers, checkpointing,
//! and finite-difference gradient verification trivial: they all operate on
//! one `&[f64]`.

mod adam;
mod conv;
mod gru;
mod linear;

pub use adam::{clip_grad_norm, Adam, OptimConfig};
pub use conv::{Conv2d, ConvTranspose2d};
pub use gru::{GruCache, GruCell};
pub use linear::Linear;

use crate::rng::SeedRng;

/// A named segment of the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seg {
    pub offset: usize,
    pub len: usize,
}

impl Seg {
    pub fn slice<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.offset..self.offset + self.len]
    }

    pub fn slice_mut<'a>(&self, params: &'a mut [f64]) -> &'a mut [f64] {
        &mut params[self.offset..self.offset + self.len]
    }
}

/// Bump allocator recording named parameter segments.
#[derive(Debug, Default)]
pub struct Layout {
    total: usize,
    names: Vec<(String, Seg)>,
}

impl Layout {
    pub fn new() -> Self {
        Layout::default()
    }

    pub fn alloc(&mut self, name: &str, len: usize) -> Seg {
        let seg = Seg {
            offset: self.total,
            len,
        };
        self.total += len;
        self.names.push((name.to_string(), seg));
        seg
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn segments(&self) -> &[(String, Seg)] {
        &self.names
    }
}

/// Uniform fan-in scaled init, deterministic from the rng stream.
pub fn init_uniform(params: &mut [f64], seg: Seg, fan_in: usize, rng: &mut SeedRng) {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    for v in seg.slice_mut(params) {
        *v = rng.range(-bound, bound);
    }
}

/// He-style uniform init for layers feeding rectified units; preserves
/// activation variance through deep ReLU stacks.
pub fn init_uniform_relu(params: &mut [f64], seg: Seg, fan_in: usize, rng: &mut SeedRng) {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    for v in seg.slice_mut(params) {
        *v = rng.range(-bound, bound);
    }
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable log(sum(exp(xs))).
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Softmax of a small vector.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|x| (x - lse).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_direct() {
        let xs = [0.1f64, -2.0, 3.5, 1.0];
        let direct = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_is_stable_for_large_inputs() {
        let xs = [1000.0, 1000.1];
        let v = log_sum_exp(&xs);
        assert!(v.is_finite());
        assert!((v - (1000.1 + (1.0 + (-0.1f64).exp()).ln())).abs() < 1e-9);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1.0, 2.0, 3.0, -1.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
