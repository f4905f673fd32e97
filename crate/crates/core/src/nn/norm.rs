use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

pub const NORM_EPS: f64 = 1e-5;
pub const NORM_MOMENTUM: f32 = 0.1;

/// Per-channel normalization with learned scale/shift and running statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
}

/// What the backward pass needs from a training-mode forward.
#[derive(Clone, Debug)]
pub struct NormCache {
    normalized: Tensor,
    inv_std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormGrads {
    pub input: Tensor,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Normalizes with the running statistics (inference).
    pub fn forward_inference(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let c = self.channels();
        let scale: Vec<f32> = (0..c)
            .map(|k| (f64::from(self.gamma[k]) / (f64::from(self.running_var[k]) + NORM_EPS).sqrt()) as f32)
            .collect();
        let mut out = x.clone();
        for px in out.data_mut().chunks_exact_mut(c) {
            for k in 0..c {
                px[k] = (px[k] - self.running_mean[k]) * scale[k] + self.beta[k];
            }
        }
        Ok(out)
    }

    /// Normalizes with batch statistics and updates the running averages.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, NormCache)> {
        self.check(x)?;
        let (y, cache, mean, var) = batch_stats_norm_inner(x, &self.gamma, &self.beta)?;
        let n = (x.len() / self.channels()) as f64;
        let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        for k in 0..self.channels() {
            let m = NORM_MOMENTUM;
            self.running_mean[k] = (1.0 - m) * self.running_mean[k] + m * mean[k] as f32;
            self.running_var[k] = (1.0 - m) * self.running_var[k] + m * (var[k] * unbias) as f32;
        }
        Ok((y, cache))
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.channels() != self.channels() {
            return Err(Error::shape(format!(
                "normalization over {} channels applied to {}",
                self.channels(),
                x.channels()
            )));
        }
        Ok(())
    }
}

/// `gamma * (x - mean) / sqrt(var + eps) + beta` with per-channel batch
/// statistics over batch, height and width.
pub fn batch_stats_norm(x: &Tensor, gamma: &[f32], beta: &[f32]) -> Result<(Tensor, NormCache)> {
    let (y, cache, _, _) = batch_stats_norm_inner(x, gamma, beta)?;
    Ok((y, cache))
}

fn batch_stats_norm_inner(x: &Tensor, gamma: &[f32], beta: &[f32]) -> Result<(Tensor, NormCache, Vec<f64>, Vec<f64>)> {
    let c = x.channels();
    if gamma.len() != c || beta.len() != c {
        return Err(Error::shape("gamma/beta length must equal channel count"));
    }
    if x.is_empty() {
        return Err(Error::shape("batch statistics of an empty tensor"));
    }
    let n = (x.len() / c) as f64;
    let mut mean = vec![0.0f64; c];
    for px in x.data().chunks_exact(c) {
        for k in 0..c {
            mean[k] += f64::from(px[k]);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0f64; c];
    for px in x.data().chunks_exact(c) {
        for k in 0..c {
            let d = f64::from(px[k]) - mean[k];
            var[k] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + NORM_EPS).sqrt()).collect();

    let mut normalized = x.clone();
    let mut y = x.clone();
    for (xh, out) in normalized
        .data_mut()
        .chunks_exact_mut(c)
        .zip(y.data_mut().chunks_exact_mut(c))
    {
        for k in 0..c {
            let v = ((f64::from(xh[k]) - mean[k]) * inv_std[k]) as f32;
            xh[k] = v;
            out[k] = gamma[k] * v + beta[k];
        }
    }
    Ok((y, NormCache { normalized, inv_std }, mean, var))
}

pub fn batch_stats_norm_backward(cache: &NormCache, gamma: &[f32], upstream: &Tensor) -> Result<NormGrads> {
    upstream.ensure_shape(cache.normalized.shape(), "normalization upstream gradient")?;
    let c = gamma.len();
    let n = (upstream.len() / c) as f64;
    let mut sum_g = vec![0.0f64; c];
    let mut sum_gx = vec![0.0f64; c];
    for (g, xh) in upstream
        .data()
        .chunks_exact(c)
        .zip(cache.normalized.data().chunks_exact(c))
    {
        for k in 0..c {
            sum_g[k] += f64::from(g[k]);
            sum_gx[k] += f64::from(g[k]) * f64::from(xh[k]);
        }
    }
    let mut input = upstream.clone();
    for (gi, xh) in input
        .data_mut()
        .chunks_exact_mut(c)
        .zip(cache.normalized.data().chunks_exact(c))
    {
        for k in 0..c {
            let gk = f64::from(gamma[k]) * cache.inv_std[k];
            let v = gk * (f64::from(gi[k]) - sum_g[k] / n - f64::from(xh[k]) * sum_gx[k] / n);
            gi[k] = v as f32;
        }
    }
    Ok(NormGrads {
        input,
        gamma: sum_gx.iter().map(|&v| v as f32).collect(),
        beta: sum_g.iter().map(|&v| v as f32).collect(),
    })
}
