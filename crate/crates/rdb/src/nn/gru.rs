use crate::nn::{init_uniform, sigmoid, Layout, Seg};
use crate::rng::SeedRng;

/// Single-layer gated recurrent cell (GRU variant of the LSTM family).
///
/// r = sigmoid(W_r x + U_r h + b_r)
/// z = sigmoid(W_z x + U_z h + b_z)
/// n = tanh(W_n x + r * (U_n h) + b_n)
/// h' = (1 - z) * n + z * h
///
/// The hidden vector is the entire recurrent state, so the summary exposed to
/// downstream consumers is exactly what the recurrence carries forward.
#[derive(Debug, Clone, Copy)]
pub struct GruCell {
    pub in_dim: usize,
    pub hidden: usize,
    w_r: Seg,
    u_r: Seg,
    b_r: Seg,
    w_z: Seg,
    u_z: Seg,
    b_z: Seg,
    w_n: Seg,
    u_n: Seg,
    b_n: Seg,
}

/// Intermediate values cached by a forward step, needed for backprop.
#[derive(Debug, Clone)]
pub struct GruCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub n: Vec<f64>,
    pub un_h: Vec<f64>,
}

impl GruCell {
    pub fn alloc(layout: &mut Layout, name: &str, in_dim: usize, hidden: usize) -> Self {
        let mut gate = |g: &str, rows: usize, cols: usize| {
            layout.alloc(&format!("{name}.{g}"), rows * cols)
        };
        GruCell {
            in_dim,
            hidden,
            w_r: gate("w_r", hidden, in_dim),
            u_r: gate("u_r", hidden, hidden),
            b_r: gate("b_r", hidden, 1),
            w_z: gate("w_z", hidden, in_dim),
            u_z: gate("u_z", hidden, hidden),
            b_z: gate("b_z", hidden, 1),
            w_n: gate("w_n", hidden, in_dim),
            u_n: gate("u_n", hidden, hidden),
            b_n: gate("b_n", hidden, 1),
        }
    }

    pub fn init(&self, params: &mut [f64], rng: &mut SeedRng) {
        for seg in [self.w_r, self.w_z, self.w_n] {
            init_uniform(params, seg, self.in_dim, rng);
        }
        for seg in [self.u_r, self.u_z, self.u_n, self.b_r, self.b_z, self.b_n] {
            init_uniform(params, seg, self.hidden, rng);
        }
    }

    pub fn param_count(&self) -> usize {
        3 * (self.hidden * self.in_dim + self.hidden * self.hidden + self.hidden)
    }

    fn mat_vec(seg: Seg, params: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
        let w = seg.slice(params);
        for (o, y) in out.iter_mut().enumerate().take(rows) {
            let row = &w[o * cols..(o + 1) * cols];
            let mut acc = 0.0;
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            *y += acc;
        }
    }

    /// One recurrent step; returns the next hidden state and the cache needed
    /// for backward.
    pub fn forward(&self, params: &[f64], x: &[f64], h_prev: &[f64]) -> (Vec<f64>, GruCache) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(h_prev.len(), self.hidden);
        let hd = self.hidden;
        let mut r = self.b_r.slice(params).to_vec();
        Self::mat_vec(self.w_r, params, hd, self.in_dim, x, &mut r);
        Self::mat_vec(self.u_r, params, hd, hd, h_prev, &mut r);
        for v in &mut r {
            *v = sigmoid(*v);
        }
        let mut z = self.b_z.slice(params).to_vec();
        Self::mat_vec(self.w_z, params, hd, self.in_dim, x, &mut z);
        Self::mat_vec(self.u_z, params, hd, hd, h_prev, &mut z);
        for v in &mut z {
            *v = sigmoid(*v);
        }
        let mut un_h = vec![0.0; hd];
        Self::mat_vec(self.u_n, params, hd, hd, h_prev, &mut un_h);
        let mut n = self.b_n.slice(params).to_vec();
        Self::mat_vec(self.w_n, params, hd, self.in_dim, x, &mut n);
        for i in 0..hd {
            n[i] = (n[i] + r[i] * un_h[i]).tanh();
        }
        let mut h = vec![0.0; hd];
        for i in 0..hd {
            h[i] = (1.0 - z[i]) * n[i] + z[i] * h_prev[i];
        }
        let cache = GruCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            r,
            z,
            n,
            un_h,
        };
        (h, cache)
    }

    fn mat_vec_transposed(seg: Seg, params: &[f64], rows: usize, cols: usize, dy: &[f64], dx: &mut [f64]) {
        let w = seg.slice(params);
        for o in 0..rows {
            let g = dy[o];
            if g == 0.0 {
                continue;
            }
            let row = &w[o * cols..(o + 1) * cols];
            for (dxi, wi) in dx.iter_mut().zip(row) {
                *dxi += g * wi;
            }
        }
    }

    fn outer_acc(seg: Seg, grads: &mut [f64], rows: usize, cols: usize, dy: &[f64], x: &[f64]) {
        for o in 0..rows {
            let g = dy[o];
            if g == 0.0 {
                continue;
            }
            let grow = &mut grads[seg.offset + o * cols..seg.offset + (o + 1) * cols];
            for (go, xi) in grow.iter_mut().zip(x) {
                *go += g * xi;
            }
        }
    }

    /// Backward through one step. `dh` is the gradient w.r.t. the step's
    /// output hidden state; accumulates into `dx`, `dh_prev`, and `grads`.
    pub fn backward(
        &self,
        params: &[f64],
        cache: &GruCache,
        dh: &[f64],
        dx: &mut [f64],
        dh_prev: &mut [f64],
        grads: &mut [f64],
    ) {
        let hd = self.hidden;
        let mut dz = vec![0.0; hd];
        let mut dn_pre = vec![0.0; hd];
        let mut dr_pre = vec![0.0; hd];
        for i in 0..hd {
            let dn = dh[i] * (1.0 - cache.z[i]);
            dz[i] = dh[i] * (cache.h_prev[i] - cache.n[i]);
            dh_prev[i] += dh[i] * cache.z[i];
            dn_pre[i] = dn * (1.0 - cache.n[i] * cache.n[i]);
        }
        let mut d_un_h = vec![0.0; hd];
        for i in 0..hd {
            // n_pre = W_n x + b_n + r * un_h
            let dr = dn_pre[i] * cache.un_h[i];
            d_un_h[i] = dn_pre[i] * cache.r[i];
            dr_pre[i] = dr * cache.r[i] * (1.0 - cache.r[i]);
            dz[i] *= cache.z[i] * (1.0 - cache.z[i]);
        }
        let dz_pre = dz;

        // Parameter gradients.
        Self::outer_acc(self.w_n, grads, hd, self.in_dim, &dn_pre, &cache.x);
        Self::outer_acc(self.u_n, grads, hd, hd, &d_un_h, &cache.h_prev);
        Self::outer_acc(self.w_z, grads, hd, self.in_dim, &dz_pre, &cache.x);
        Self::outer_acc(self.u_z, grads, hd, hd, &dz_pre, &cache.h_prev);
        Self::outer_acc(self.w_r, grads, hd, self.in_dim, &dr_pre, &cache.x);
        Self::outer_acc(self.u_r, grads, hd, hd, &dr_pre, &cache.h_prev);
        for i in 0..hd {
            grads[self.b_n.offset + i] += dn_pre[i];
            grads[self.b_z.offset + i] += dz_pre[i];
            grads[self.b_r.offset + i] += dr_pre[i];
        }

        // Input and previous-hidden gradients.
        Self::mat_vec_transposed(self.w_n, params, hd, self.in_dim, &dn_pre, dx);
        Self::mat_vec_transposed(self.w_z, params, hd, self.in_dim, &dz_pre, dx);
        Self::mat_vec_transposed(self.w_r, params, hd, self.in_dim, &dr_pre, dx);
        Self::mat_vec_transposed(self.u_n, params, hd, hd, &d_un_h, dh_prev);
        Self::mat_vec_transposed(self.u_z, params, hd, hd, &dz_pre, dh_prev);
        Self::mat_vec_transposed(self.u_r, params, hd, hd, &dr_pre, dh_prev);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layout;

    #[test]
    fn gru_backward_matches_finite_differences() {
        let mut layout = Layout::new();
        let cell = GruCell::alloc(&mut layout, "g", 3, 4);
        let mut params = vec![0.0; layout.total()];
        let mut rng = SeedRng::new(5);
        cell.init(&mut params, &mut rng);

        let xs = [
            vec![0.2, -0.4, 0.9],
            vec![-0.6, 0.1, 0.3],
            vec![0.5, 0.5, -0.8],
        ];
        // Loss: sum over time of squared hidden states (BPTT over 3 steps).
        let loss = |p: &[f64]| {
            let mut h = vec![0.0; 4];
            let mut total = 0.0;
            for x in &xs {
                let (h_next, _) = cell.forward(p, x, &h);
                total += h_next.iter().map(|v| v * v).sum::<f64>() * 0.5;
                h = h_next;
            }
            total
        };

        // Analytic gradient via BPTT.
        let mut h = vec![0.0; 4];
        let mut caches = Vec::new();
        let mut hs = Vec::new();
        for x in &xs {
            let (h_next, cache) = cell.forward(&params, x, &h);
            caches.push(cache);
            hs.push(h_next.clone());
            h = h_next;
        }
        let mut grads = vec![0.0; layout.total()];
        let mut dh_next = vec![0.0; 4];
        for t in (0..xs.len()).rev() {
            let mut dh: Vec<f64> = hs[t].to_vec();
            for i in 0..4 {
                dh[i] += dh_next[i];
            }
            let mut dx = vec![0.0; 3];
            let mut dh_prev = vec![0.0; 4];
            cell.backward(&params, &caches[t], &dh, &mut dx, &mut dh_prev, &mut grads);
            dh_next = dh_prev;
        }

        let eps = 1e-6;
        for i in (0..layout.total()).step_by(3) {
            let mut p = params.clone();
            p[i] += eps;
            let up = loss(&p);
            p[i] -= 2.0 * eps;
            let down = loss(&p);
            let fd = (up - down) / (2.0 * eps);
            assert!(
                (fd - grads[i]).abs() < 1e-6,
                "gru param {i}: fd={fd} analytic={}",
                grads[i]
            );
        }
    }
}
