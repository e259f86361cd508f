//! Strided 2D convolutions over CHW tensors via an im2col + matrix-multiply
//! formulation: every layer reduces to contiguous AXPY/dot kernels over the
//! unrolled patch matrix, which is what makes desk-scale CPU training
//! practical in f64.

use crate::nn::{init_uniform, init_uniform_relu, Layout, Seg};
use crate::rng::SeedRng;

#[derive(Debug, Clone, Copy)]
struct Geometry {
    in_c: usize,
    k: usize,
    stride: usize,
    pad: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn cols_rows(&self) -> usize {
        self.in_c * self.k * self.k
    }

    fn cols_len(&self) -> usize {
        self.cols_rows() * self.out_h * self.out_w
    }

    /// Valid output span [lo, hi] for one kernel offset and the first input
    /// index it reads: `in = out * stride + k_off - pad`.
    fn valid(&self, out_len: usize, in_len: usize, k_off: usize) -> Option<(usize, usize, usize)> {
        let lo = if k_off >= self.pad {
            0
        } else {
            (self.pad - k_off).div_ceil(self.stride)
        };
        let hi_num = in_len as isize - 1 + self.pad as isize - k_off as isize;
        if hi_num < 0 {
            return None;
        }
        let hi = ((hi_num as usize) / self.stride).min(out_len - 1);
        if lo > hi {
            return None;
        }
        Some((lo, hi, lo * self.stride + k_off - self.pad))
    }

    /// Unroll input patches: cols[(ic*k*k + ky*k + kx) * (out_h*out_w) + s]
    /// holds the input value each output position s reads at that kernel
    /// offset (zero where padding).
    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let ohw = self.out_h * self.out_w;
        cols.fill(0.0);
        for ic in 0..self.in_c {
            let x_plane = &x[ic * self.in_h * self.in_w..(ic + 1) * self.in_h * self.in_w];
            for ky in 0..self.k {
                let Some((oy_lo, oy_hi, iy0)) = self.valid(self.out_h, self.in_h, ky) else {
                    continue;
                };
                for kx in 0..self.k {
                    let Some((ox_lo, ox_hi, ix0)) = self.valid(self.out_w, self.in_w, kx) else {
                        continue;
                    };
                    let row =
                        &mut cols[(ic * self.k * self.k + ky * self.k + kx) * ohw..][..ohw];
                    let mut iy = iy0;
                    for oy in oy_lo..=oy_hi {
                        let x_row = &x_plane[iy * self.in_w..(iy + 1) * self.in_w];
                        let out_row = &mut row[oy * self.out_w + ox_lo..=oy * self.out_w + ox_hi];
                        if self.stride == 1 {
                            out_row.copy_from_slice(&x_row[ix0..ix0 + out_row.len()]);
                        } else {
                            let mut ix = ix0;
                            for v in out_row {
                                *v = x_row[ix];
                                ix += self.stride;
                            }
                        }
                        iy += self.stride;
                    }
                }
            }
        }
    }

    /// Scatter-add the unrolled gradient back onto the input tensor.
    fn col2im_add(&self, cols: &[f64], dx: &mut [f64]) {
        let ohw = self.out_h * self.out_w;
        for ic in 0..self.in_c {
            let dx_plane =
                &mut dx[ic * self.in_h * self.in_w..(ic + 1) * self.in_h * self.in_w];
            for ky in 0..self.k {
                let Some((oy_lo, oy_hi, iy0)) = self.valid(self.out_h, self.in_h, ky) else {
                    continue;
                };
                for kx in 0..self.k {
                    let Some((ox_lo, ox_hi, ix0)) = self.valid(self.out_w, self.in_w, kx) else {
                        continue;
                    };
                    let row = &cols[(ic * self.k * self.k + ky * self.k + kx) * ohw..][..ohw];
                    let mut iy = iy0;
                    for oy in oy_lo..=oy_hi {
                        let dx_row = &mut dx_plane[iy * self.in_w..(iy + 1) * self.in_w];
                        let in_row = &row[oy * self.out_w + ox_lo..=oy * self.out_w + ox_hi];
                        let mut ix = ix0;
                        for v in in_row {
                            dx_row[ix] += v;
                            ix += self.stride;
                        }
                        iy += self.stride;
                    }
                }
            }
        }
    }
}

/// y[m][..] += sum_r w[m][r] * cols[r][..] (M x R times R x N).
fn matmul_acc(y: &mut [f64], w: &[f64], cols: &[f64], m: usize, r: usize, n: usize) {
    for mi in 0..m {
        let y_row = &mut y[mi * n..(mi + 1) * n];
        let w_row = &w[mi * r..(mi + 1) * r];
        for (ri, &wv) in w_row.iter().enumerate() {
            if wv == 0.0 {
                continue;
            }
            let c_row = &cols[ri * n..(ri + 1) * n];
            for (yo, cv) in y_row.iter_mut().zip(c_row) {
                *yo += wv * cv;
            }
        }
    }
}

/// dw[m][r] += dot(dy[m][..], cols[r][..]). Four accumulators break the
/// floating-point dependency chain so the loop vectorizes.
fn matmul_grad_w(dw: &mut [f64], dy: &[f64], cols: &[f64], m: usize, r: usize, n: usize) {
    for mi in 0..m {
        let dy_row = &dy[mi * n..(mi + 1) * n];
        let dw_row = &mut dw[mi * r..(mi + 1) * r];
        for (ri, dw_v) in dw_row.iter_mut().enumerate() {
            let c_row = &cols[ri * n..(ri + 1) * n];
            let chunks = n / 4;
            let mut acc = [0.0f64; 4];
            for i in 0..chunks {
                let g = &dy_row[4 * i..4 * i + 4];
                let c = &c_row[4 * i..4 * i + 4];
                acc[0] += g[0] * c[0];
                acc[1] += g[1] * c[1];
                acc[2] += g[2] * c[2];
                acc[3] += g[3] * c[3];
            }
            let mut tail = 0.0;
            for i in 4 * chunks..n {
                tail += dy_row[i] * c_row[i];
            }
            *dw_v += acc[0] + acc[1] + acc[2] + acc[3] + tail;
        }
    }
}

/// dcols[r][..] += sum_m w[m][r] * dy[m][..] (transposed multiply).
fn matmul_grad_cols(dcols: &mut [f64], w: &[f64], dy: &[f64], m: usize, r: usize, n: usize) {
    for mi in 0..m {
        let dy_row = &dy[mi * n..(mi + 1) * n];
        let w_row = &w[mi * r..(mi + 1) * r];
        for (ri, &wv) in w_row.iter().enumerate() {
            if wv == 0.0 {
                continue;
            }
            let d_row = &mut dcols[ri * n..(ri + 1) * n];
            for (dv, g) in d_row.iter_mut().zip(dy_row) {
                *dv += wv * g;
            }
        }
    }
}

/// 2D convolution; weights stored as (out_c, in_c, k, k) row-major.
#[derive(Debug, Clone, Copy)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub w: Seg,
    pub b: Seg,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn alloc(
        layout: &mut Layout,
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        in_h: usize,
        in_w: usize,
    ) -> Self {
        let out_h = (in_h + 2 * pad - k) / stride + 1;
        let out_w = (in_w + 2 * pad - k) / stride + 1;
        let w = layout.alloc(&format!("{name}.w"), out_c * in_c * k * k);
        let b = layout.alloc(&format!("{name}.b"), out_c);
        Conv2d {
            in_c,
            out_c,
            k,
            stride,
            pad,
            in_h,
            in_w,
            out_h,
            out_w,
            w,
            b,
        }
    }

    fn geometry(&self) -> Geometry {
        Geometry {
            in_c: self.in_c,
            k: self.k,
            stride: self.stride,
            pad: self.pad,
            in_h: self.in_h,
            in_w: self.in_w,
            out_h: self.out_h,
            out_w: self.out_w,
        }
    }

    pub fn init(&self, params: &mut [f64], rng: &mut SeedRng) {
        let fan_in = self.in_c * self.k * self.k;
        init_uniform_relu(params, self.w, fan_in, rng);
        init_uniform(params, self.b, fan_in, rng);
    }

    pub fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_c * self.out_h * self.out_w
    }

    pub fn forward(&self, params: &[f64], x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_len());
        debug_assert_eq!(y.len(), self.out_len());
        let geo = self.geometry();
        let mut cols = vec![0.0; geo.cols_len()];
        geo.im2col(x, &mut cols);
        let n = self.out_h * self.out_w;
        let b = self.b.slice(params);
        for oc in 0..self.out_c {
            y[oc * n..(oc + 1) * n].fill(b[oc]);
        }
        matmul_acc(y, self.w.slice(params), &cols, self.out_c, geo.cols_rows(), n);
    }

    pub fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        dy: &[f64],
        dx: &mut [f64],
        grads: &mut [f64],
    ) {
        let geo = self.geometry();
        let n = self.out_h * self.out_w;
        let r = geo.cols_rows();
        let mut cols = vec![0.0; geo.cols_len()];
        geo.im2col(x, &mut cols);
        for oc in 0..self.out_c {
            let mut db = 0.0;
            for g in &dy[oc * n..(oc + 1) * n] {
                db += g;
            }
            grads[self.b.offset + oc] += db;
        }
        matmul_grad_w(
            &mut grads[self.w.offset..self.w.offset + self.w.len],
            dy,
            &cols,
            self.out_c,
            r,
            n,
        );
        let mut dcols = vec![0.0; geo.cols_len()];
        matmul_grad_cols(&mut dcols, self.w.slice(params), dy, self.out_c, r, n);
        geo.col2im_add(&dcols, dx);
    }
}

/// Transposed 2D convolution; weights stored as (in_c, out_c, k, k)
/// row-major, output size `(in - 1) * stride + k - 2 * pad`. Forward is the
/// input-gradient pass of the mirror convolution, so it shares the same
/// im2col machinery with roles swapped.
#[derive(Debug, Clone, Copy)]
pub struct ConvTranspose2d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub w: Seg,
    pub b: Seg,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn alloc(
        layout: &mut Layout,
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        in_h: usize,
        in_w: usize,
    ) -> Self {
        let out_h = (in_h - 1) * stride + k - 2 * pad;
        let out_w = (in_w - 1) * stride + k - 2 * pad;
        let w = layout.alloc(&format!("{name}.w"), in_c * out_c * k * k);
        let b = layout.alloc(&format!("{name}.b"), out_c);
        ConvTranspose2d {
            in_c,
            out_c,
            k,
            stride,
            pad,
            in_h,
            in_w,
            out_h,
            out_w,
            w,
            b,
        }
    }

    /// Geometry of the mirror convolution (output -> input).
    fn mirror(&self) -> Geometry {
        Geometry {
            in_c: self.out_c,
            k: self.k,
            stride: self.stride,
            pad: self.pad,
            in_h: self.out_h,
            in_w: self.out_w,
            out_h: self.in_h,
            out_w: self.in_w,
        }
    }

    pub fn init(&self, params: &mut [f64], rng: &mut SeedRng) {
        let fan_in = self.in_c * self.k * self.k;
        init_uniform_relu(params, self.w, fan_in, rng);
        init_uniform(params, self.b, fan_in, rng);
    }

    pub fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_c * self.out_h * self.out_w
    }

    pub fn forward(&self, params: &[f64], x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_len());
        debug_assert_eq!(y.len(), self.out_len());
        let geo = self.mirror();
        let n = self.in_h * self.in_w;
        let r = geo.cols_rows();
        // dcols = W^T x, scattered back onto the (larger) output grid.
        let mut dcols = vec![0.0; geo.cols_len()];
        matmul_grad_cols(&mut dcols, self.w.slice(params), x, self.in_c, r, n);
        let b = self.b.slice(params);
        let ohw = self.out_h * self.out_w;
        for oc in 0..self.out_c {
            y[oc * ohw..(oc + 1) * ohw].fill(b[oc]);
        }
        geo.col2im_add(&dcols, y);
    }

    pub fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        dy: &[f64],
        dx: &mut [f64],
        grads: &mut [f64],
    ) {
        let geo = self.mirror();
        let n = self.in_h * self.in_w;
        let r = geo.cols_rows();
        let ohw = self.out_h * self.out_w;
        for oc in 0..self.out_c {
            let mut db = 0.0;
            for g in &dy[oc * ohw..(oc + 1) * ohw] {
                db += g;
            }
            grads[self.b.offset + oc] += db;
        }
        let mut cols = vec![0.0; geo.cols_len()];
        geo.im2col(dy, &mut cols);
        // dW[in_c][r] += x[in_c][..] . cols[r][..]
        matmul_grad_w(
            &mut grads[self.w.offset..self.w.offset + self.w.len],
            x,
            &cols,
            self.in_c,
            r,
            n,
        );
        // dx[in_c][..] += sum_r w[in_c][r] * cols[r][..]
        matmul_acc(dx, self.w.slice(params), &cols, self.in_c, r, n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layout;

    #[test]
    fn conv_shapes_halve_with_stride_two() {
        let mut layout = Layout::new();
        let conv = Conv2d::alloc(&mut layout, "c", 3, 8, 4, 2, 1, 64, 64);
        assert_eq!((conv.out_h, conv.out_w), (32, 32));
        let deconv = ConvTranspose2d::alloc(&mut layout, "d", 8, 3, 4, 2, 1, 32, 32);
        assert_eq!((deconv.out_h, deconv.out_w), (64, 64));
    }

    /// Direct per-output reference convolution.
    fn conv_reference(conv: &Conv2d, params: &[f64], x: &[f64]) -> Vec<f64> {
        let w = conv.w.slice(params);
        let b = conv.b.slice(params);
        let mut y = vec![0.0; conv.out_len()];
        let kk = conv.k * conv.k;
        for oc in 0..conv.out_c {
            for oy in 0..conv.out_h {
                for ox in 0..conv.out_w {
                    let mut acc = b[oc];
                    for ic in 0..conv.in_c {
                        for ky in 0..conv.k {
                            for kx in 0..conv.k {
                                let iy = (oy * conv.stride + ky) as isize - conv.pad as isize;
                                let ix = (ox * conv.stride + kx) as isize - conv.pad as isize;
                                if iy < 0
                                    || ix < 0
                                    || iy >= conv.in_h as isize
                                    || ix >= conv.in_w as isize
                                {
                                    continue;
                                }
                                acc += w[(oc * conv.in_c + ic) * kk + ky * conv.k + kx]
                                    * x[ic * conv.in_h * conv.in_w
                                        + iy as usize * conv.in_w
                                        + ix as usize];
                            }
                        }
                    }
                    y[oc * conv.out_h * conv.out_w + oy * conv.out_w + ox] = acc;
                }
            }
        }
        y
    }

    #[test]
    fn conv_forward_matches_direct_reference() {
        for (in_h, in_w, k, stride, pad) in [(6, 6, 3, 2, 1), (8, 5, 4, 2, 1), (7, 7, 3, 1, 0)] {
            let mut layout = Layout::new();
            let conv = Conv2d::alloc(&mut layout, "c", 2, 3, k, stride, pad, in_h, in_w);
            let mut params = vec![0.0; layout.total()];
            let mut rng = SeedRng::new(3);
            conv.init(&mut params, &mut rng);
            let x: Vec<f64> = (0..conv.in_len())
                .map(|i| ((i * 37) % 11) as f64 / 11.0 - 0.5)
                .collect();
            let mut y = vec![0.0; conv.out_len()];
            conv.forward(&params, &x, &mut y);
            let reference = conv_reference(&conv, &params, &x);
            for (a, b) in y.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut layout = Layout::new();
        let conv = Conv2d::alloc(&mut layout, "c", 2, 3, 3, 2, 1, 6, 6);
        let mut params = vec![0.0; layout.total()];
        let mut rng = SeedRng::new(11);
        conv.init(&mut params, &mut rng);
        let x: Vec<f64> = (0..conv.in_len()).map(|i| ((i * 37) % 11) as f64 / 11.0 - 0.5).collect();

        let loss = |p: &[f64]| {
            let mut y = vec![0.0; conv.out_len()];
            conv.forward(p, &x, &mut y);
            y.iter().map(|v| v * v).sum::<f64>() * 0.5
        };
        let mut y = vec![0.0; conv.out_len()];
        conv.forward(&params, &x, &mut y);
        let mut dx = vec![0.0; conv.in_len()];
        let mut grads = vec![0.0; layout.total()];
        conv.backward(&params, &x, &y, &mut dx, &mut grads);

        let eps = 1e-6;
        for i in (0..layout.total()).step_by(7) {
            let mut p = params.clone();
            p[i] += eps;
            let up = loss(&p);
            p[i] -= 2.0 * eps;
            let down = loss(&p);
            let fd = (up - down) / (2.0 * eps);
            assert!(
                (fd - grads[i]).abs() < 1e-6,
                "conv param {i}: fd={fd} analytic={}",
                grads[i]
            );
        }
        for i in (0..conv.in_len()).step_by(5) {
            let mut xp = x.clone();
            xp[i] += eps;
            let mut y2 = vec![0.0; conv.out_len()];
            conv.forward(&params, &xp, &mut y2);
            let up = y2.iter().map(|v| v * v).sum::<f64>() * 0.5;
            xp[i] -= 2.0 * eps;
            conv.forward(&params, &xp, &mut y2);
            let down = y2.iter().map(|v| v * v).sum::<f64>() * 0.5;
            let fd = (up - down) / (2.0 * eps);
            assert!((fd - dx[i]).abs() < 1e-6, "conv dx {i}: fd={fd} got={}", dx[i]);
        }
    }

    #[test]
    fn deconv_backward_matches_finite_differences() {
        let mut layout = Layout::new();
        let deconv = ConvTranspose2d::alloc(&mut layout, "d", 3, 2, 4, 2, 1, 3, 3);
        assert_eq!((deconv.out_h, deconv.out_w), (6, 6));
        let mut params = vec![0.0; layout.total()];
        let mut rng = SeedRng::new(13);
        deconv.init(&mut params, &mut rng);
        let x: Vec<f64> = (0..deconv.in_len()).map(|i| ((i * 53) % 13) as f64 / 13.0 - 0.4).collect();

        let loss = |p: &[f64]| {
            let mut y = vec![0.0; deconv.out_len()];
            deconv.forward(p, &x, &mut y);
            y.iter().map(|v| v * v).sum::<f64>() * 0.5
        };
        let mut y = vec![0.0; deconv.out_len()];
        deconv.forward(&params, &x, &mut y);
        let mut dx = vec![0.0; deconv.in_len()];
        let mut grads = vec![0.0; layout.total()];
        deconv.backward(&params, &x, &y, &mut dx, &mut grads);

        let eps = 1e-6;
        for i in (0..layout.total()).step_by(5) {
            let mut p = params.clone();
            p[i] += eps;
            let up = loss(&p);
            p[i] -= 2.0 * eps;
            let down = loss(&p);
            let fd = (up - down) / (2.0 * eps);
            assert!(
                (fd - grads[i]).abs() < 1e-6,
                "deconv param {i}: fd={fd} analytic={}",
                grads[i]
            );
        }
        for i in (0..deconv.in_len()).step_by(3) {
            let mut xp = x.clone();
            xp[i] += eps;
            let mut y2 = vec![0.0; deconv.out_len()];
            deconv.forward(&params, &xp, &mut y2);
            let up = y2.iter().map(|v| v * v).sum::<f64>() * 0.5;
            xp[i] -= 2.0 * eps;
            deconv.forward(&params, &xp, &mut y2);
            let down = y2.iter().map(|v| v * v).sum::<f64>() * 0.5;
            let fd = (up - down) / (2.0 * eps);
            assert!((fd - dx[i]).abs() < 1e-6, "deconv dx {i}: fd={fd} got={}", dx[i]);
        }
    }

    #[test]
    fn deconv_forward_matches_scatter_reference() {
        let mut layout = Layout::new();
        let deconv = ConvTranspose2d::alloc(&mut layout, "d", 2, 3, 4, 2, 1, 4, 3);
        let mut params = vec![0.0; layout.total()];
        let mut rng = SeedRng::new(5);
        deconv.init(&mut params, &mut rng);
        let x: Vec<f64> = (0..deconv.in_len()).map(|i| (i as f64 * 0.13).sin()).collect();
        let mut y = vec![0.0; deconv.out_len()];
        deconv.forward(&params, &x, &mut y);

        // Direct scatter reference.
        let w = deconv.w.slice(&params);
        let b = deconv.b.slice(&params);
        let kk = deconv.k * deconv.k;
        let mut reference = vec![0.0; deconv.out_len()];
        for oc in 0..deconv.out_c {
            for v in &mut reference
                [oc * deconv.out_h * deconv.out_w..(oc + 1) * deconv.out_h * deconv.out_w]
            {
                *v = b[oc];
            }
        }
        for ic in 0..deconv.in_c {
            for iy in 0..deconv.in_h {
                for ix in 0..deconv.in_w {
                    let xv = x[ic * deconv.in_h * deconv.in_w + iy * deconv.in_w + ix];
                    for oc in 0..deconv.out_c {
                        for ky in 0..deconv.k {
                            for kx in 0..deconv.k {
                                let oy = (iy * deconv.stride + ky) as isize - deconv.pad as isize;
                                let ox = (ix * deconv.stride + kx) as isize - deconv.pad as isize;
                                if oy < 0
                                    || ox < 0
                                    || oy >= deconv.out_h as isize
                                    || ox >= deconv.out_w as isize
                                {
                                    continue;
                                }
                                reference[oc * deconv.out_h * deconv.out_w
                                    + oy as usize * deconv.out_w
                                    + ox as usize] += xv
                                    * w[(ic * deconv.out_c + oc) * kk + ky * deconv.k + kx];
                            }
                        }
                    }
                }
            }
        }
        for (a, r) in y.iter().zip(&reference) {
            assert!((a - r).abs() < 1e-12, "{a} vs {r}");
        }
    }
}
