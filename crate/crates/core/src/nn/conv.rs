//! Strided and transposed 2D convolution with their gradients.
//!
//! Both directions lower to `im2col` plus one GEMM per batch item. Batch items
//! are processed in parallel and their parameter gradients are summed in batch
//! order, so results do not depend on the thread count.

use super::Tensor4;
use crate::error::{Error, Result};
use rayon::prelude::*;

/// Learnable state of a convolution. Kernels are laid out
/// `(out_channels, in_channels, kh, kw)` for [`conv2d`]; [`transposed_conv2d`]
/// reads the same array as `(in_channels, out_channels, kh, kw)`, so one
/// kernel serves as a convolution and its adjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub kernel: Tensor4,
    pub bias: Vec<f64>,
}

impl ConvParams {
    pub fn zeros(dim0: usize, dim1: usize, k: usize) -> Self {
        let bias_len = dim0;
        Self { kernel: Tensor4::zeros([dim0, dim1, k, k]), bias: vec![0.0; bias_len] }
    }

    fn ksize(&self) -> Result<usize> {
        let [_, _, kh, kw] = self.kernel.dims();
        if kh != kw || kh == 0 {
            return Err(Error::Shape(format!("square kernels only, got {kh}x{kw}")));
        }
        Ok(kh)
    }
}

/// Geometry of the dense side (`in_*`) and the strided side (`out_*`) of a convolution.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    channels: usize,
    in_h: usize,
    in_w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn conv(channels: usize, in_h: usize, in_w: usize, k: usize, stride: usize, pad: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidArgument("stride must be at least 1".into()));
        }
        if in_h + 2 * pad < k || in_w + 2 * pad < k {
            return Err(Error::Shape(format!("kernel {k} larger than padded input {in_h}x{in_w}")));
        }
        let out_h = (in_h + 2 * pad - k) / stride + 1;
        let out_w = (in_w + 2 * pad - k) / stride + 1;
        Ok(Self { channels, in_h, in_w, k, stride, pad, out_h, out_w })
    }

    fn col_rows(&self) -> usize {
        self.channels * self.k * self.k
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Calls `f(col_row, col_col, input_index)` for every in-bounds tap.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (k, s, p) = (self.k, self.stride as isize, self.pad as isize);
        for c in 0..self.channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    for oy in 0..self.out_h {
                        let iy = oy as isize * s - p + ky as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        let base_in = (c * self.in_h + iy as usize) * self.in_w;
                        let base_col = oy * self.out_w;
                        for ox in 0..self.out_w {
                            let ix = ox as isize * s - p + kx as isize;
                            if ix < 0 || ix >= self.in_w as isize {
                                continue;
                            }
                            f(row, base_col + ox, base_in + ix as usize);
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, input: &[f64]) -> Vec<f64> {
        let n = self.col_cols();
        let mut cols = vec![0.0; self.col_rows() * n];
        self.for_each_tap(|r, c, i| cols[r * n + c] = input[i]);
        cols
    }

    fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let n = self.col_cols();
        let mut out = vec![0.0; self.channels * self.in_h * self.in_w];
        self.for_each_tap(|r, c, i| out[i] += cols[r * n + c]);
        out
    }
}

/// `c = a * b` (overwriting) with explicit strides; sizes `m x k` times `k x n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert!(c.len() >= m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the slices cover the index ranges implied by the dimensions and
    // strides, which every caller derives from tensor shapes checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn sum_in_order(parts: Vec<(Vec<f64>, Vec<f64>)>, kernel_len: usize, bias_len: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gk = vec![0.0; kernel_len];
    let mut gb = vec![0.0; bias_len];
    for (k, b) in parts {
        for (a, v) in gk.iter_mut().zip(&k) {
            *a += v;
        }
        for (a, v) in gb.iter_mut().zip(&b) {
            *a += v;
        }
    }
    (gk, gb)
}

fn conv_geometry(x: &Tensor4, p: &ConvParams, stride: usize, pad: usize) -> Result<(Geometry, usize)> {
    let k = p.ksize()?;
    let [co, ci, _, _] = p.kernel.dims();
    if ci != x.channels() {
        return Err(Error::Shape(format!("conv kernel expects {ci} input channels, input has {}", x.channels())));
    }
    if p.bias.len() != co {
        return Err(Error::Shape(format!("conv bias has {} entries for {co} outputs", p.bias.len())));
    }
    Ok((Geometry::conv(ci, x.height(), x.width(), k, stride, pad)?, co))
}

/// Cross-correlation with zero padding. Output spatial size is
/// `floor((in + 2 * pad - k) / stride) + 1`.
pub fn conv2d(x: &Tensor4, p: &ConvParams, stride: usize, pad: usize) -> Result<Tensor4> {
    let (g, co) = conv_geometry(x, p, stride, pad)?;
    let (rows, n) = (g.col_rows(), g.col_cols());
    let items: Vec<Vec<f64>> = (0..x.batch())
        .into_par_iter()
        .map(|b| {
            let cols = g.im2col(x.item(b));
            let mut out = vec![0.0; co * n];
            for (o, chunk) in out.chunks_mut(n).enumerate() {
                chunk.fill(p.bias[o]);
            }
            gemm(co, rows, n, &p.kernel.data, (rows, 1), &cols, (n, 1), &mut out, true);
            out
        })
        .collect();
    Tensor4::new([x.batch(), co, g.out_h, g.out_w], items.concat())
}

/// Gradients of [`conv2d`] with respect to its input and parameters.
pub fn conv2d_backward(
    x: &Tensor4,
    p: &ConvParams,
    grad_out: &Tensor4,
    stride: usize,
    pad: usize,
) -> Result<(Tensor4, ConvParams)> {
    let (g, co) = conv_geometry(x, p, stride, pad)?;
    if grad_out.dims() != [x.batch(), co, g.out_h, g.out_w] {
        return Err(Error::Shape(format!(
            "conv grad_out {:?} does not match forward output {:?}",
            grad_out.dims(),
            [x.batch(), co, g.out_h, g.out_w]
        )));
    }
    let (rows, n) = (g.col_rows(), g.col_cols());
    let parts: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..x.batch())
        .into_par_iter()
        .map(|b| {
            let cols = g.im2col(x.item(b));
            let go = grad_out.item(b);
            let mut gk = vec![0.0; co * rows];
            // dK = G * cols^T
            gemm(co, n, rows, go, (n, 1), &cols, (1, n), &mut gk, false);
            let gb: Vec<f64> = go.chunks(n).map(|c| c.iter().sum()).collect();
            // dcols = K^T * G
            let mut dcols = vec![0.0; rows * n];
            gemm(rows, co, n, &p.kernel.data, (1, rows), go, (n, 1), &mut dcols, false);
            (g.col2im(&dcols), gk, gb)
        })
        .collect();
    let mut gx = Vec::with_capacity(x.len());
    let mut param_parts = Vec::with_capacity(parts.len());
    for (dx, gk, gb) in parts {
        gx.extend_from_slice(&dx);
        param_parts.push((gk, gb));
    }
    let (gk, gb) = sum_in_order(param_parts, p.kernel.len(), co);
    Ok((
        Tensor4::new(x.dims(), gx)?,
        ConvParams { kernel: Tensor4::new(p.kernel.dims(), gk)?, bias: gb },
    ))
}

fn transposed_geometry(x: &Tensor4, p: &ConvParams, stride: usize, pad: usize) -> Result<(Geometry, usize)> {
    let k = p.ksize()?;
    let [ci, co, _, _] = p.kernel.dims();
    if ci != x.channels() {
        return Err(Error::Shape(format!(
            "transposed kernel expects {ci} input channels, input has {}",
            x.channels()
        )));
    }
    if p.bias.len() != co {
        return Err(Error::Shape(format!("transposed bias has {} entries for {co} outputs", p.bias.len())));
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    let full_h = ((x.height() - 1) * stride + k).checked_sub(2 * pad);
    let full_w = ((x.width() - 1) * stride + k).checked_sub(2 * pad);
    let (Some(h), Some(w)) = (full_h, full_w) else {
        return Err(Error::Shape("padding exceeds transposed output".into()));
    };
    let g = Geometry::conv(co, h, w, k, stride, pad)?;
    debug_assert_eq!((g.out_h, g.out_w), (x.height(), x.width()));
    Ok((g, ci))
}

/// Transposed convolution, the adjoint of [`conv2d`] with the same geometry.
/// Output spatial size is `(in - 1) * stride + k - 2 * pad`.
pub fn transposed_conv2d(x: &Tensor4, p: &ConvParams, stride: usize, pad: usize) -> Result<Tensor4> {
    let (g, ci) = transposed_geometry(x, p, stride, pad)?;
    let (rows, n) = (g.col_rows(), g.col_cols());
    let co = g.channels;
    let plane = g.in_h * g.in_w;
    let items: Vec<Vec<f64>> = (0..x.batch())
        .into_par_iter()
        .map(|b| {
            let mut cols = vec![0.0; rows * n];
            // cols = K^T * x, with K viewed as (ci, rows)
            gemm(rows, ci, n, &p.kernel.data, (1, rows), x.item(b), (n, 1), &mut cols, false);
            let mut out = g.col2im(&cols);
            for (o, chunk) in out.chunks_mut(plane).enumerate() {
                for v in chunk {
                    *v += p.bias[o];
                }
            }
            out
        })
        .collect();
    Tensor4::new([x.batch(), co, g.in_h, g.in_w], items.concat())
}

/// Gradients of [`transposed_conv2d`] with respect to its input and parameters.
pub fn transposed_conv2d_backward(
    x: &Tensor4,
    p: &ConvParams,
    grad_out: &Tensor4,
    stride: usize,
    pad: usize,
) -> Result<(Tensor4, ConvParams)> {
    let (g, ci) = transposed_geometry(x, p, stride, pad)?;
    let co = g.channels;
    if grad_out.dims() != [x.batch(), co, g.in_h, g.in_w] {
        return Err(Error::Shape(format!(
            "transposed grad_out {:?} does not match forward output {:?}",
            grad_out.dims(),
            [x.batch(), co, g.in_h, g.in_w]
        )));
    }
    let (rows, n) = (g.col_rows(), g.col_cols());
    let plane = g.in_h * g.in_w;
    let parts: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..x.batch())
        .into_par_iter()
        .map(|b| {
            let go = grad_out.item(b);
            let dcols = g.im2col(go);
            let mut dx = vec![0.0; ci * n];
            gemm(ci, rows, n, &p.kernel.data, (rows, 1), &dcols, (n, 1), &mut dx, false);
            let mut gk = vec![0.0; ci * rows];
            // dK = x * dcols^T
            gemm(ci, n, rows, x.item(b), (n, 1), &dcols, (1, n), &mut gk, false);
            let gb: Vec<f64> = go.chunks(plane).map(|c| c.iter().sum()).collect();
            (dx, gk, gb)
        })
        .collect();
    let mut gx = Vec::with_capacity(x.len());
    let mut param_parts = Vec::with_capacity(parts.len());
    for (dx, gk, gb) in parts {
        gx.extend_from_slice(&dx);
        param_parts.push((gk, gb));
    }
    let (gk, gb) = sum_in_order(param_parts, p.kernel.len(), co);
    Ok((
        Tensor4::new(x.dims(), gx)?,
        ConvParams { kernel: Tensor4::new(p.kernel.dims(), gk)?, bias: gb },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(dims: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4 {
        Tensor4::uniform(dims, 1.0, rng)
    }

    /// Six nested loops straight from the definition of cross-correlation.
    fn reference_conv(x: &Tensor4, p: &ConvParams, stride: usize, pad: usize) -> Tensor4 {
        let [n, ci, h, w] = x.dims();
        let [co, _, k, _] = p.kernel.dims();
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (w + 2 * pad - k) / stride + 1;
        let mut out = Tensor4::zeros([n, co, oh, ow]);
        for b in 0..n {
            for o in 0..co {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = p.bias[o];
                        for c in 0..ci {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        acc += p.kernel.at(o, c, ky, kx) * x.at(b, c, iy as usize, ix as usize);
                                    }
                                }
                            }
                        }
                        let idx = out.index(b, o, oy, ox);
                        out.data[idx] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn unit_1x1_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random([2, 1, 4, 5], &mut rng);
        let mut p = ConvParams::zeros(1, 1, 1);
        p.kernel.data[0] = 1.0;
        assert_eq!(conv2d(&x, &p, 1, 0).unwrap(), x);
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = ConvParams { kernel: random([3, 2, 3, 3], &mut rng), bias: vec![0.5, -1.0, 2.0] };
        let y = conv2d(&Tensor4::zeros([1, 2, 6, 6]), &p, 1, 1).unwrap();
        for o in 0..3 {
            assert!(y.data[o * 36..(o + 1) * 36].iter().all(|&v| v == p.bias[o]));
        }
    }

    #[test]
    fn strided_conv_matches_loop_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random([1, 2, 5, 5], &mut rng);
        let p = ConvParams { kernel: random([3, 2, 3, 3], &mut rng), bias: vec![0.1, 0.2, -0.3] };
        let y = conv2d(&x, &p, 2, 1).unwrap();
        let r = reference_conv(&x, &p, 2, 1);
        assert_eq!(y.dims(), [1, 3, 3, 3]);
        for (a, b) in y.data.iter().zip(&r.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn output_size_formula() {
        let x = Tensor4::zeros([1, 1, 9, 8]);
        for (k, s, pad) in [(3, 1, 1), (3, 2, 1), (2, 2, 0), (5, 3, 2), (1, 1, 0)] {
            let y = conv2d(&x, &ConvParams::zeros(1, 1, k), s, pad).unwrap();
            assert_eq!(y.height(), (9 + 2 * pad - k) / s + 1);
            assert_eq!(y.width(), (8 + 2 * pad - k) / s + 1);
        }
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let x = Tensor4::zeros([1, 3, 4, 4]);
        assert!(conv2d(&x, &ConvParams::zeros(2, 2, 3), 1, 1).is_err());
        assert!(conv2d(&Tensor4::zeros([1, 2, 4, 4]), &ConvParams::zeros(2, 2, 3), 0, 1).is_err());
    }

    #[test]
    fn zero_grad_out_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random([2, 2, 5, 5], &mut rng);
        let p = ConvParams { kernel: random([2, 2, 3, 3], &mut rng), bias: vec![0.0; 2] };
        let (gx, gp) = conv2d_backward(&x, &p, &Tensor4::zeros([2, 2, 5, 5]), 1, 1).unwrap();
        assert!(gx.data.iter().chain(&gp.kernel.data).chain(&gp.bias).all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_passes_gradient_through() {
        let mut p = ConvParams::zeros(1, 1, 1);
        p.kernel.data[0] = 1.0;
        let x = Tensor4::zeros([1, 1, 3, 3]);
        let mut go = Tensor4::zeros([1, 1, 3, 3]);
        go.data[4] = 1.0;
        let (gx, _) = conv2d_backward(&x, &p, &go, 1, 0).unwrap();
        assert_eq!(gx, go);
    }

    #[test]
    fn transposed_impulse_places_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ConvParams { kernel: random([1, 1, 3, 3], &mut rng), bias: vec![0.0] };
        let mut x = Tensor4::zeros([1, 1, 3, 3]);
        x.data[4] = 1.0; // (1, 1)
        let y = transposed_conv2d(&x, &p, 2, 0).unwrap();
        assert_eq!(y.dims(), [1, 1, 7, 7]);
        for oy in 0..7 {
            for ox in 0..7 {
                let inside = (2..5).contains(&oy) && (2..5).contains(&ox);
                let expected = if inside { p.kernel.at(0, 0, oy - 2, ox - 2) } else { 0.0 };
                assert_eq!(y.at(0, 0, oy, ox), expected);
            }
        }
    }

    #[test]
    fn transposed_zero_input_gives_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = ConvParams { kernel: random([2, 3, 2, 2], &mut rng), bias: vec![1.0, 2.0, 3.0] };
        let y = transposed_conv2d(&Tensor4::zeros([1, 2, 4, 4]), &p, 2, 0).unwrap();
        assert_eq!(y.dims(), [1, 3, 8, 8]);
        for o in 0..3 {
            assert!(y.data[o * 64..(o + 1) * 64].iter().all(|&v| v == p.bias[o]));
        }
    }

    #[test]
    fn adjoint_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let (k, s, pad) = [(3, 1, 1), (3, 2, 1), (2, 2, 0), (4, 2, 1)][rng.random_range(0..4)];
            let ci = rng.random_range(1..4);
            let co = rng.random_range(1..4);
            // choose sizes where the strided grid covers the padded input exactly
            let steps = rng.random_range(2..6);
            let h = (steps - 1) * s + k - 2 * pad;
            let x = random([2, ci, h, h], &mut rng);
            let p = ConvParams { kernel: random([co, ci, k, k], &mut rng), bias: vec![0.0; co] };
            let cx = conv2d(&x, &p, s, pad).unwrap();
            let y = random(cx.dims(), &mut rng);
            let pt = ConvParams { kernel: p.kernel.clone(), bias: vec![0.0; ci] };
            let cty = transposed_conv2d(&y, &pt, s, pad).unwrap();
            assert_eq!(cty.dims(), x.dims());
            assert!((cx.dot(&y) - x.dot(&cty)).abs() < 1e-10);
        }
    }
}
