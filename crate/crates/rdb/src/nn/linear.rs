use crate::nn::{init_uniform, Layout, Seg};
use crate::rng::SeedRng;

/// Dense layer y = W x + b with W stored row-major (out x in).
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Seg,
    pub b: Seg,
}

impl Linear {
    pub fn alloc(layout: &mut Layout, name: &str, in_dim: usize, out_dim: usize) -> Self {
        let w = layout.alloc(&format!("{name}.w"), in_dim * out_dim);
        let b = layout.alloc(&format!("{name}.b"), out_dim);
        Linear {
            in_dim,
            out_dim,
            w,
            b,
        }
    }

    pub fn init(&self, params: &mut [f64], rng: &mut SeedRng) {
        init_uniform(params, self.w, self.in_dim, rng);
        init_uniform(params, self.b, self.in_dim, rng);
    }

    pub fn forward(&self, params: &[f64], x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(y.len(), self.out_dim);
        let w = self.w.slice(params);
        let b = self.b.slice(params);
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            *yo = acc;
        }
    }

    /// Backward pass: accumulates parameter gradients into `grads` and input
    /// gradient into `dx` (both +=, callers zero them as needed).
    pub fn backward(&self, params: &[f64], x: &[f64], dy: &[f64], dx: &mut [f64], grads: &mut [f64]) {
        debug_assert_eq!(dy.len(), self.out_dim);
        let w = self.w.slice(params);
        for (o, &g) in dy.iter().enumerate() {
            grads[self.b.offset + o] += g;
            let row = &w[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut grads[self.w.offset + o * self.in_dim..self.w.offset + (o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += g * x[i];
                dx[i] += g * row[i];
            }
        }
    }
}
