//! Slow, obviously-correct f64 reference implementations used by the
//! integration tests, plus finite-difference helpers.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rangeseg::nn::{Tensor, WidthPadding};

pub mod grad_suite;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Dense f64 tensor in the same `[B, H, W, C]` layout.
#[derive(Clone, Debug)]
pub struct Dense {
    pub shape: [usize; 4],
    pub data: Vec<f64>,
}

impl Dense {
    pub fn from_tensor(t: &Tensor) -> Self {
        Self {
            shape: t.shape(),
            data: t.data().iter().map(|&v| f64::from(v)).collect(),
        }
    }

    pub fn at(&self, b: usize, h: usize, w: usize, c: usize) -> f64 {
        let [_, hh, ww, cc] = self.shape;
        self.data[((b * hh + h) * ww + w) * cc + c]
    }

    pub fn max_abs_diff(&self, t: &Tensor) -> f64 {
        assert_eq!(self.shape, t.shape());
        self.data
            .iter()
            .zip(t.data())
            .map(|(a, &b)| (a - f64::from(b)).abs())
            .fold(0.0, f64::max)
    }
}

/// Semi-local convolution by definition: output row `h` uses weight
/// component `floor(h * alpha / H_out)`; height is zero padded by `kh / 2`,
/// width by `kw / 2` with zeros or wrap-around.
#[allow(clippy::too_many_arguments)]
pub fn slc_reference(
    x: &Dense,
    weights: &[f64],
    bias: &[f64],
    [kh, kw, ci, co, alpha]: [usize; 5],
    stride: usize,
    mode: WidthPadding,
) -> Dense {
    let [bn, h, w, c] = x.shape;
    assert_eq!(c, ci);
    let (ph, pw) = (kh / 2, kw / 2);
    let oh = h + 2 * ph - kh + 1;
    let ow = (w + 2 * pw - kw) / stride + 1;
    let widx = |i: usize, j: usize, c: usize, o: usize, a: usize| (((i * kw + j) * ci + c) * co + o) * alpha + a;
    let mut out = vec![0.0; bn * oh * ow * co];
    for b in 0..bn {
        for r in 0..oh {
            let a = r * alpha / oh;
            for q in 0..ow {
                for o in 0..co {
                    let mut s = bias[o * alpha + a];
                    for i in 0..kh {
                        let src_r = r as isize + i as isize - ph as isize;
                        if src_r < 0 || src_r >= h as isize {
                            continue;
                        }
                        for j in 0..kw {
                            let mut src_c = (q * stride + j) as isize - pw as isize;
                            if src_c < 0 || src_c >= w as isize {
                                match mode {
                                    WidthPadding::Zeros => continue,
                                    WidthPadding::Cyclic => src_c = src_c.rem_euclid(w as isize),
                                }
                            }
                            for cc in 0..ci {
                                s += x.at(b, src_r as usize, src_c as usize, cc) * weights[widx(i, j, cc, o, a)];
                            }
                        }
                    }
                    out[((b * oh + r) * ow + q) * co + o] = s;
                }
            }
        }
    }
    Dense {
        shape: [bn, oh, ow, co],
        data: out,
    }
}

/// Plain zero-padded cross-correlation, written independently of the SLC
/// reference: one weight tensor `[kh, kw, ci, co]`, stride 1.
pub fn conv_reference(x: &Dense, weights: &[f64], bias: &[f64], [kh, kw, ci, co]: [usize; 4]) -> Dense {
    let [bn, h, w, _] = x.shape;
    let mut out = Dense {
        shape: [bn, h, w, co],
        data: vec![0.0; bn * h * w * co],
    };
    for b in 0..bn {
        for r in 0..h {
            for q in 0..w {
                for o in 0..co {
                    let mut s = bias[o];
                    for i in 0..kh {
                        for j in 0..kw {
                            let (sr, sc) = (r + i, q + j);
                            if sr < kh / 2 || sc < kw / 2 || sr - kh / 2 >= h || sc - kw / 2 >= w {
                                continue;
                            }
                            for c in 0..ci {
                                s += x.at(b, sr - kh / 2, sc - kw / 2, c) * weights[((i * kw + j) * ci + c) * co + o];
                            }
                        }
                    }
                    out.data[((b * h + r) * w + q) * co + o] = s;
                }
            }
        }
    }
    out
}

pub fn softmax_reference(logits: &[f64], c: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for px in logits.chunks_exact(c) {
        let m = px.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = px.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| v / z));
    }
    out
}

/// Mean negative log-likelihood over pixels whose target is not `ignore`.
pub fn cross_entropy_reference(probs: &[f64], c: usize, targets: &[u16], ignore: Option<u16>) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for (px, &t) in probs.chunks_exact(c).zip(targets) {
        if Some(t) == ignore {
            continue;
        }
        total -= px[usize::from(t)].ln();
        n += 1;
    }
    total / n as f64
}

/// `1 - mean_k 2 sum(t p) / (sum t^2 + sum p^2)` over non-ignored classes
/// with a positive denominator; ignored pixels are dropped.
pub fn dice_reference(probs: &[f64], c: usize, targets: &[u16], ignore: Option<u16>) -> f64 {
    let mut terms = Vec::new();
    for k in 0..c {
        if ignore.map(usize::from) == Some(k) {
            continue;
        }
        let (mut tp, mut tt, mut pp) = (0.0, 0.0, 0.0);
        for (px, &t) in probs.chunks_exact(c).zip(targets) {
            if Some(t) == ignore {
                continue;
            }
            let onehot = if usize::from(t) == k { 1.0 } else { 0.0 };
            tp += onehot * px[k];
            tt += onehot;
            pp += px[k] * px[k];
        }
        if tt + pp > 0.0 {
            terms.push(2.0 * tp / (tt + pp));
        }
    }
    1.0 - terms.iter().sum::<f64>() / terms.len() as f64
}

/// Training-mode normalization per channel with biased batch variance.
pub fn norm_reference(x: &Dense, gamma: &[f64], beta: &[f64], eps: f64) -> Dense {
    let c = x.shape[3];
    let n = x.data.len() / c;
    let mut out = x.clone();
    for k in 0..c {
        let vals: Vec<f64> = x.data.iter().skip(k).step_by(c).copied().collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        for (i, v) in vals.iter().enumerate() {
            out.data[i * c + k] = gamma[k] * (v - mean) / (var + eps).sqrt() + beta[k];
        }
    }
    out
}

/// Nearest-neighbour width upsampling.
pub fn upsample_reference(x: &Dense, factor: usize) -> Dense {
    let [b, h, w, c] = x.shape;
    let mut data = Vec::with_capacity(x.data.len() * factor);
    for bb in 0..b {
        for r in 0..h {
            for q in 0..w * factor {
                for k in 0..c {
                    data.push(x.at(bb, r, q / factor, k));
                }
            }
        }
    }
    Dense {
        shape: [b, h, w * factor, c],
        data,
    }
}

/// Central differences of a scalar f64 function at the given coordinates.
pub fn numeric_grad(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], coords: &[usize], eps: f64) -> Vec<f64> {
    let mut xv = x.to_vec();
    coords
        .iter()
        .map(|&i| {
            let orig = xv[i];
            xv[i] = orig + eps;
            let up = f(&xv);
            xv[i] = orig - eps;
            let down = f(&xv);
            xv[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// `max |a - n| / max |n|` over the checked coordinates.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()))
        / scale
}

/// Up to `max` evenly spread indices of `0..n`.
pub fn sample_coords(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    (0..max).map(|k| k * n / max + (k * 7919) % (n / max).max(1)).collect()
}

pub fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

/// Inner product of an f64 buffer with fixed projection weights; turns a
/// tensor-valued op into a scalar objective for finite differences.
pub fn project(y: &[f64], r: &[f64]) -> f64 {
    y.iter().zip(r).map(|(a, b)| a * b).sum()
}

/// IoU from explicit index sets; pixels whose truth is `ignore` are dropped.
pub fn set_miou(preds: &[u16], targets: &[u16], c: usize, ignore: Option<u16>) -> (Vec<Option<f64>>, Option<f64>) {
    let scored: Vec<usize> = (0..preds.len()).filter(|&i| Some(targets[i]) != ignore).collect();
    let per: Vec<Option<f64>> = (0..c as u16)
        .map(|k| {
            if Some(k) == ignore {
                return None;
            }
            let p: BTreeSet<usize> = scored.iter().copied().filter(|&i| preds[i] == k).collect();
            let t: BTreeSet<usize> = scored.iter().copied().filter(|&i| targets[i] == k).collect();
            let union = p.union(&t).count();
            (union > 0).then(|| p.intersection(&t).count() as f64 / union as f64)
        })
        .collect();
    let defined: Vec<f64> = per.iter().flatten().copied().collect();
    let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    (per, mean)
}
