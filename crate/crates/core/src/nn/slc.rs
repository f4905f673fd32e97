//! Semi-local convolution (SLC) and plain strided convolution.
//!
//! Both are cross-correlations (no kernel flip) on a padded input:
//!
//! ```text
//! y[b, h, w, co] = bias[co, a(h)]
//!     + sum_{i, j, ci} k[i, j, ci, co, a(h)] * xpad[b, h + i, w * stride + j, ci]
//! a(h) = floor(h * alpha / H_out)
//! ```
//!
//! With `alpha = 1` this is an ordinary convolution. With `alpha = H_out`
//! every output row has its own filter. Rows sharing a component form a
//! contiguous band, so each (batch item, component) pair is one GEMM over
//! an im2col matrix.

use std::borrow::Cow;

use super::pad::{pad, pad_backward, PadSpec};
use super::Tensor;
use crate::{Error, Result};

/// Filter bank with `alpha` vertical components.
///
/// Weights are laid out `[kh, kw, c_in, c_out, alpha]`, bias `[c_out, alpha]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlcKernel {
    kh: usize,
    kw: usize,
    c_in: usize,
    c_out: usize,
    alpha: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

/// Plain convolution kernel, `[kh, kw, c_in, c_out]` plus bias `[c_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel {
    kh: usize,
    kw: usize,
    c_in: usize,
    c_out: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

/// Gradients of a convolution-like op. `weights` and `bias` follow the
/// kernel's own layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

fn check_dims(kh: usize, kw: usize, c_in: usize, c_out: usize, alpha: usize) -> Result<()> {
    if kh.is_multiple_of(2) || kw.is_multiple_of(2) {
        return Err(Error::shape(format!("kernel {kh}x{kw} must have odd sides")));
    }
    if c_in == 0 || c_out == 0 || alpha == 0 {
        return Err(Error::shape("kernel channels and alpha must be positive"));
    }
    Ok(())
}

impl SlcKernel {
    pub fn zeros(kh: usize, kw: usize, c_in: usize, c_out: usize, alpha: usize) -> Result<Self> {
        check_dims(kh, kw, c_in, c_out, alpha)?;
        Ok(Self {
            kh,
            kw,
            c_in,
            c_out,
            alpha,
            weights: vec![0.0; kh * kw * c_in * c_out * alpha],
            bias: vec![0.0; c_out * alpha],
        })
    }

    pub fn from_parts(dims: [usize; 5], weights: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        let [kh, kw, c_in, c_out, alpha] = dims;
        let mut k = Self::zeros(kh, kw, c_in, c_out, alpha)?;
        if weights.len() != k.weights.len() || bias.len() != k.bias.len() {
            return Err(Error::shape(format!(
                "SLC kernel {dims:?} needs {} weights and {} biases",
                k.weights.len(),
                k.bias.len()
            )));
        }
        k.weights = weights;
        k.bias = bias;
        Ok(k)
    }

    /// `[kh, kw, c_in, c_out, alpha]`.
    pub fn dims(&self) -> [usize; 5] {
        [self.kh, self.kw, self.c_in, self.c_out, self.alpha]
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn weight_index(&self, i: usize, j: usize, ci: usize, co: usize, a: usize) -> usize {
        (((i * self.kw + j) * self.c_in + ci) * self.c_out + co) * self.alpha + a
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f32] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f32] {
        &mut self.bias
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [f32], &mut [f32]) {
        (&mut self.weights, &mut self.bias)
    }

    /// `kh * kw * c_in * c_out * alpha + c_out * alpha`.
    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn view(&self) -> KernelRef<'_> {
        KernelRef {
            kh: self.kh,
            kw: self.kw,
            c_in: self.c_in,
            c_out: self.c_out,
            alpha: self.alpha,
            weights: &self.weights,
            bias: &self.bias,
        }
    }
}

impl ConvKernel {
    pub fn zeros(kh: usize, kw: usize, c_in: usize, c_out: usize) -> Result<Self> {
        check_dims(kh, kw, c_in, c_out, 1)?;
        Ok(Self {
            kh,
            kw,
            c_in,
            c_out,
            weights: vec![0.0; kh * kw * c_in * c_out],
            bias: vec![0.0; c_out],
        })
    }

    pub fn from_parts(dims: [usize; 4], weights: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        let [kh, kw, c_in, c_out] = dims;
        let mut k = Self::zeros(kh, kw, c_in, c_out)?;
        if weights.len() != k.weights.len() || bias.len() != k.bias.len() {
            return Err(Error::shape(format!(
                "conv kernel {dims:?} needs {} weights and {} biases",
                k.weights.len(),
                k.bias.len()
            )));
        }
        k.weights = weights;
        k.bias = bias;
        Ok(k)
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.kh, self.kw, self.c_in, self.c_out]
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f32] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f32] {
        &mut self.bias
    }

    /// The same filter as a single-component SLC kernel (identical layout).
    pub fn to_slc(&self) -> SlcKernel {
        SlcKernel {
            kh: self.kh,
            kw: self.kw,
            c_in: self.c_in,
            c_out: self.c_out,
            alpha: 1,
            weights: self.weights.clone(),
            bias: self.bias.clone(),
        }
    }

    fn view(&self) -> KernelRef<'_> {
        KernelRef {
            kh: self.kh,
            kw: self.kw,
            c_in: self.c_in,
            c_out: self.c_out,
            alpha: 1,
            weights: &self.weights,
            bias: &self.bias,
        }
    }
}

/// Component used by output row `h` of `height` rows.
pub fn component_of_row(h: usize, height: usize, alpha: usize) -> usize {
    h * alpha / height
}

/// Output rows `[start, end)` that use component `a`.
fn component_rows(a: usize, height: usize, alpha: usize) -> (usize, usize) {
    let first = |a: usize| (a * height).div_ceil(alpha);
    (first(a), first(a + 1).min(height))
}

#[derive(Clone, Copy)]
struct KernelRef<'a> {
    kh: usize,
    kw: usize,
    c_in: usize,
    c_out: usize,
    alpha: usize,
    weights: &'a [f32],
    bias: &'a [f32],
}

struct Geometry {
    batch: usize,
    out_h: usize,
    out_w: usize,
    stride: usize,
    /// Length of one im2col row, `kh * kw * c_in`.
    patch: usize,
}

impl KernelRef<'_> {
    fn geometry(&self, x: &Tensor, pad: &PadSpec, stride: usize) -> Result<Geometry> {
        if x.channels() != self.c_in {
            return Err(Error::shape(format!(
                "kernel expects {} input channels, tensor has {}",
                self.c_in,
                x.channels()
            )));
        }
        if stride == 0 {
            return Err(Error::shape("stride must be at least 1"));
        }
        let [batch, hp, wp, _] = pad.padded_shape(x.shape());
        if hp < self.kh || wp < self.kw {
            return Err(Error::shape(format!(
                "padded input {hp}x{wp} smaller than kernel {}x{}",
                self.kh, self.kw
            )));
        }
        let out_h = hp - self.kh + 1;
        let out_w = (wp - self.kw) / stride + 1;
        if self.alpha > out_h {
            return Err(Error::shape(format!(
                "alpha = {} exceeds output height {out_h}",
                self.alpha
            )));
        }
        Ok(Geometry {
            batch,
            out_h,
            out_w,
            stride,
            patch: self.kh * self.kw * self.c_in,
        })
    }

    /// Patch matrix `[out_h * out_w, patch]` for batch item `b`.
    fn im2col<'x>(&self, xp: &'x Tensor, b: usize, g: &Geometry, buf: &'x mut Vec<f32>) -> &'x [f32] {
        let per_item = g.out_h * g.out_w * g.patch;
        if self.kh == 1 && self.kw == 1 && g.stride == 1 {
            let start = xp.offset(b, 0, 0, 0);
            return &xp.data()[start..start + per_item];
        }
        buf.resize(per_item, 0.0);
        let run = self.kw * self.c_in;
        for oh in 0..g.out_h {
            for ow in 0..g.out_w {
                let dst = (oh * g.out_w + ow) * g.patch;
                for i in 0..self.kh {
                    let src = xp.offset(b, oh + i, ow * g.stride, 0);
                    buf[dst + i * run..dst + (i + 1) * run].copy_from_slice(&xp.data()[src..src + run]);
                }
            }
        }
        buf
    }

    fn col2im_add(&self, cols: &[f32], gxp: &mut Tensor, b: usize, g: &Geometry) {
        let run = self.kw * self.c_in;
        for oh in 0..g.out_h {
            for ow in 0..g.out_w {
                let src = (oh * g.out_w + ow) * g.patch;
                for i in 0..self.kh {
                    let dst = gxp.offset(b, oh + i, ow * g.stride, 0);
                    let target = &mut gxp.data_mut()[dst..dst + run];
                    for (t, v) in target.iter_mut().zip(&cols[src + i * run..src + (i + 1) * run]) {
                        *t += v;
                    }
                }
            }
        }
    }

    /// Forward without a patch matrix, for padded widths divisible by the
    /// stride. Output pixels are computed on a `wp / stride` wide grid, so
    /// for kernel row `i` the operand rows are the overlapping windows
    /// `xp[h + i, w*s .. w*s + kw, :]` at a fixed stride of `s * c_in`;
    /// columns past `out_w` are discarded.
    fn forward_direct(&self, xp: &Tensor, g: &Geometry) -> Result<Tensor> {
        let (ci, co, alpha) = (self.c_in, self.c_out, self.alpha);
        let (wp, st) = (xp.width(), g.stride);
        let wq = wp / st;
        let run = self.kw * ci;
        let mut out = Tensor::zeros([g.batch, g.out_h, g.out_w, co]);
        let mut acc = Vec::new();
        for b in 0..g.batch {
            let base = xp.offset(b, 0, 0, 0);
            for a in 0..alpha {
                let (h0, h1) = component_rows(a, g.out_h, alpha);
                if h0 == h1 {
                    continue;
                }
                let m = (h1 - h0 - 1) * wq + g.out_w;
                acc.clear();
                acc.resize(m * co, 0.0);
                for i in 0..self.kh {
                    let start = base + (h0 + i) * wp * ci;
                    // SAFETY: the last window read ends at row h1 - 1 + i,
                    // column (out_w - 1) * s + kw <= wp, inside the padded item. The
                    // weight view is run x co at offset a with strides
                    // (co*alpha, alpha) inside kernel row i; acc is m x co.
                    unsafe {
                        gemm_into(
                            [m, run, co],
                            (xp.data().as_ptr().add(start), (st * ci) as isize, 1),
                            (
                                self.weights.as_ptr().add(i * run * co * alpha + a),
                                (co * alpha) as isize,
                                alpha as isize,
                            ),
                            (acc.as_mut_ptr(), co as isize, 1),
                            i > 0,
                        );
                    }
                }
                for h in h0..h1 {
                    for w in 0..g.out_w {
                        let src = ((h - h0) * wq + w) * co;
                        let dst = out.offset(b, h, w, 0);
                        for (c, v) in out.data_mut()[dst..dst + co].iter_mut().enumerate() {
                            *v = acc[src + c] + self.bias[c * alpha + a];
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Backward on the same layout as `forward_direct`; the discarded
    /// columns carry zero upstream gradient. Returns the padded input
    /// gradient, weight gradient and bias gradient.
    fn backward_direct(&self, xp: &Tensor, g: &Geometry, gy: &Tensor) -> (Tensor, Vec<f32>, Vec<f32>) {
        let (ci, co, alpha) = (self.c_in, self.c_out, self.alpha);
        let (wp, st) = (xp.width(), g.stride);
        let wq = wp / st;
        let run = self.kw * ci;
        let mut gw = vec![0.0f32; self.weights.len()];
        let mut gb = vec![0.0f64; self.bias.len()];
        let mut gxp = Tensor::zeros(xp.shape());
        let mut gyp = Vec::new();
        for b in 0..g.batch {
            let base = xp.offset(b, 0, 0, 0);
            for a in 0..alpha {
                let (h0, h1) = component_rows(a, g.out_h, alpha);
                if h0 == h1 {
                    continue;
                }
                let m = (h1 - h0 - 1) * wq + g.out_w;
                gyp.clear();
                gyp.resize(m * co, 0.0);
                for h in h0..h1 {
                    for w in 0..g.out_w {
                        let src = gy.offset(b, h, w, 0);
                        let dst = ((h - h0) * wq + w) * co;
                        for (c, &v) in gy.data()[src..src + co].iter().enumerate() {
                            gyp[dst + c] = v;
                            gb[c * alpha + a] += f64::from(v);
                        }
                    }
                }
                for i in 0..self.kh {
                    let start = base + (h0 + i) * wp * ci;
                    // SAFETY: same extents as `forward_direct`. For the input
                    // gradient each (i, j) target is m disjoint rows of c_in
                    // values ending inside the padded item.
                    unsafe {
                        // dW_i += windows^T . gy
                        gemm_into(
                            [run, m, co],
                            (xp.data().as_ptr().add(start), 1, (st * ci) as isize),
                            (gyp.as_ptr(), co as isize, 1),
                            (
                                gw.as_mut_ptr().add(i * run * co * alpha + a),
                                (co * alpha) as isize,
                                alpha as isize,
                            ),
                            true,
                        );
                        for j in 0..self.kw {
                            // dX[window + j] += gy . W_ij^T
                            gemm_into(
                                [m, co, ci],
                                (gyp.as_ptr(), co as isize, 1),
                                (
                                    self.weights.as_ptr().add((i * self.kw + j) * ci * co * alpha + a),
                                    alpha as isize,
                                    (co * alpha) as isize,
                                ),
                                (gxp.data_mut().as_mut_ptr().add(start + j * ci), (st * ci) as isize, 1),
                                true,
                            );
                        }
                    }
                }
            }
        }
        (gxp, gw, gb.into_iter().map(|v| v as f32).collect())
    }

    fn forward(&self, x: &Tensor, pad_spec: &PadSpec, stride: usize) -> Result<Tensor> {
        let g = self.geometry(x, pad_spec, stride)?;
        let xp: Cow<'_, Tensor> = if pad_spec.height == 0 && pad_spec.width == 0 {
            Cow::Borrowed(x)
        } else {
            Cow::Owned(pad(x, pad_spec)?)
        };
        if xp.width().is_multiple_of(stride) {
            return self.forward_direct(&xp, &g);
        }
        let (co, alpha) = (self.c_out, self.alpha);
        let mut out = Tensor::zeros([g.batch, g.out_h, g.out_w, co]);
        let mut buf = Vec::new();
        for b in 0..g.batch {
            let cols = self.im2col(&xp, b, &g, &mut buf);
            for a in 0..alpha {
                let (h0, h1) = component_rows(a, g.out_h, alpha);
                if h0 == h1 {
                    continue;
                }
                let m = (h1 - h0) * g.out_w;
                let y0 = out.offset(b, h0, 0, 0);
                let y = &mut out.data_mut()[y0..y0 + m * co];
                for px in y.chunks_exact_mut(co) {
                    for (c, v) in px.iter_mut().enumerate() {
                        *v = self.bias[c * alpha + a];
                    }
                }
                let a_rows = &cols[h0 * g.out_w * g.patch..h1 * g.out_w * g.patch];
                // SAFETY: every operand slice covers the strided extents passed here:
                // a_rows is m x patch (row stride patch), the weight view is
                // patch x co starting at offset a with strides (co*alpha, alpha),
                // and y is m x co.
                unsafe {
                    gemm_into(
                        [m, g.patch, co],
                        (a_rows.as_ptr(), g.patch as isize, 1),
                        (self.weights.as_ptr().add(a), (co * alpha) as isize, alpha as isize),
                        (y.as_mut_ptr(), co as isize, 1),
                        true,
                    );
                }
            }
        }
        Ok(out)
    }

    fn backward(&self, x: &Tensor, pad_spec: &PadSpec, stride: usize, gy: &Tensor) -> Result<ConvGrads> {
        let g = self.geometry(x, pad_spec, stride)?;
        gy.ensure_shape([g.batch, g.out_h, g.out_w, self.c_out], "convolution upstream gradient")?;
        let xp = pad(x, pad_spec)?;
        if xp.width() % stride == 0 {
            let (gxp, weights, bias) = self.backward_direct(&xp, &g, gy);
            return Ok(ConvGrads {
                input: pad_backward(&gxp, pad_spec, x.shape())?,
                weights,
                bias,
            });
        }
        let (co, alpha) = (self.c_out, self.alpha);
        let mut gw = vec![0.0f32; self.weights.len()];
        let mut gb = vec![0.0f64; self.bias.len()];
        let mut gxp = Tensor::zeros(xp.shape());
        let mut gcols = vec![0.0f32; g.out_h * g.out_w * g.patch];
        let mut buf = Vec::new();
        for b in 0..g.batch {
            let cols = self.im2col(&xp, b, &g, &mut buf);
            for a in 0..alpha {
                let (h0, h1) = component_rows(a, g.out_h, alpha);
                if h0 == h1 {
                    continue;
                }
                let m = (h1 - h0) * g.out_w;
                let y0 = gy.offset(b, h0, 0, 0);
                let gy_rows = &gy.data()[y0..y0 + m * co];
                for px in gy_rows.chunks_exact(co) {
                    for (c, v) in px.iter().enumerate() {
                        gb[c * alpha + a] += f64::from(*v);
                    }
                }
                let span = h0 * g.out_w * g.patch..h1 * g.out_w * g.patch;
                let a_rows = &cols[span.clone()];
                let g_rows = &mut gcols[span];
                // SAFETY: extents as in `forward`; the transposed views swap the
                // row/column strides of the same allocations.
                unsafe {
                    // dW_a += cols^T . gy
                    gemm_into(
                        [g.patch, m, co],
                        (a_rows.as_ptr(), 1, g.patch as isize),
                        (gy_rows.as_ptr(), co as isize, 1),
                        (gw.as_mut_ptr().add(a), (co * alpha) as isize, alpha as isize),
                        true,
                    );
                    // dcols = gy . W_a^T
                    gemm_into(
                        [m, co, g.patch],
                        (gy_rows.as_ptr(), co as isize, 1),
                        (self.weights.as_ptr().add(a), alpha as isize, (co * alpha) as isize),
                        (g_rows.as_mut_ptr(), g.patch as isize, 1),
                        false,
                    );
                }
            }
            self.col2im_add(&gcols, &mut gxp, b, &g);
        }
        Ok(ConvGrads {
            input: pad_backward(&gxp, pad_spec, x.shape())?,
            weights: gw,
            bias: gb.into_iter().map(|v| v as f32).collect(),
        })
    }
}

/// `c (+)= a . b` on strided views given as (pointer, row stride, column
/// stride); `dims` is `[m, k, n]`.
///
/// # Safety
/// Every view must address valid memory over its full extent, and `c` must
/// not overlap `a` or `b`.
unsafe fn gemm_into(
    [m, k, n]: [usize; 3],
    a: (*const f32, isize, isize),
    b: (*const f32, isize, isize),
    c: (*mut f32, isize, isize),
    accumulate: bool,
) {
    gemm::gemm(
        m,
        n,
        k,
        c.0,
        c.2,
        c.1,
        accumulate,
        a.0,
        a.2,
        a.1,
        b.0,
        b.2,
        b.1,
        1.0,
        1.0,
        false,
        false,
        false,
        gemm::Parallelism::None,
    );
}

pub fn slc_forward(x: &Tensor, k: &SlcKernel, pad: &PadSpec) -> Result<Tensor> {
    k.view().forward(x, pad, 1)
}

pub fn slc_backward(x: &Tensor, k: &SlcKernel, pad: &PadSpec, upstream: &Tensor) -> Result<ConvGrads> {
    k.view().backward(x, pad, 1, upstream)
}

/// Strided-width convolution. Height is never strided.
pub fn conv_forward(x: &Tensor, k: &ConvKernel, stride_w: usize, pad: &PadSpec) -> Result<Tensor> {
    k.view().forward(x, pad, stride_w)
}

pub fn conv_backward(
    x: &Tensor,
    k: &ConvKernel,
    stride_w: usize,
    pad: &PadSpec,
    upstream: &Tensor,
) -> Result<ConvGrads> {
    k.view().backward(x, pad, stride_w, upstream)
}

/// Strided SLC, used by the backbone's downsampling layers.
pub(crate) fn slc_forward_strided(x: &Tensor, k: &SlcKernel, pad: &PadSpec, stride_w: usize) -> Result<Tensor> {
    k.view().forward(x, pad, stride_w)
}

pub(crate) fn slc_backward_strided(
    x: &Tensor,
    k: &SlcKernel,
    pad: &PadSpec,
    stride_w: usize,
    upstream: &Tensor,
) -> Result<ConvGrads> {
    k.view().backward(x, pad, stride_w, upstream)
}
