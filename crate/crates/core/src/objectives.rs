//! Losses and evaluation.
//!
//! Targets are per-pixel class ids aligned with the `B*H*W` pixels of a
//! probability tensor. Pixels whose target equals the ignore id (0,
//! "unlabeled", by default) contribute to neither loss nor metric.

use crate::nn::Tensor;
use crate::{Error, Result};

pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct LossOptions {
    pub ignore_index: Option<u16>,
    /// Per-class cross-entropy weights; uniform when `None`.
    pub class_weights: Option<Vec<f32>>,
    /// Added to numerator and denominator of every Dice term. With a
    /// positive value all classes take part in the mean.
    pub dice_epsilon: f64,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self {
            ignore_index: Some(0),
            class_weights: None,
            dice_epsilon: 0.0,
        }
    }
}

impl LossOptions {
    /// Every id is scored; used for the textbook fixtures.
    pub fn no_ignore() -> Self {
        Self {
            ignore_index: None,
            ..Self::default()
        }
    }

    fn is_ignored(&self, t: u16) -> bool {
        self.ignore_index == Some(t)
    }
}

/// Scalar loss and its gradient.
#[derive(Clone, Debug)]
pub struct LossValue {
    pub value: f64,
    pub grad: Tensor,
    /// Nothing was scored (every pixel ignored / no includable class); the
    /// loss is reported as 0 with a zero gradient.
    pub degenerate: bool,
}

/// Max-shifted softmax over the channel axis.
pub fn softmax(logits: &Tensor) -> Tensor {
    let c = logits.channels();
    let mut out = logits.clone();
    if c == 0 {
        return out;
    }
    for px in out.data_mut().chunks_exact_mut(c) {
        let max = px.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f64;
        for v in px.iter_mut() {
            let e = f64::from(*v - max).exp();
            *v = e as f32;
            sum += e;
        }
        for v in px.iter_mut() {
            *v = (f64::from(*v) / sum) as f32;
        }
    }
    out
}

/// Chain rule through softmax: `dz_k = p_k * (g_k - sum_j g_j p_j)`.
pub fn softmax_backward(probs: &Tensor, grad_probs: &Tensor) -> Result<Tensor> {
    grad_probs.ensure_shape(probs.shape(), "softmax upstream gradient")?;
    let c = probs.channels();
    let mut out = grad_probs.clone();
    for (g, p) in out.data_mut().chunks_exact_mut(c).zip(probs.data().chunks_exact(c)) {
        let dot: f64 = g.iter().zip(p).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
        for k in 0..c {
            g[k] = (f64::from(p[k]) * (f64::from(g[k]) - dot)) as f32;
        }
    }
    Ok(out)
}

fn check_targets(probs: &Tensor, targets: &[u16], opts: &LossOptions) -> Result<()> {
    let [b, h, w, c] = probs.shape();
    if targets.len() != b * h * w {
        return Err(Error::shape(format!(
            "{} targets for {} pixels",
            targets.len(),
            b * h * w
        )));
    }
    if let Some(bad) = targets.iter().find(|&&t| !opts.is_ignored(t) && usize::from(t) >= c) {
        return Err(Error::shape(format!("target id {bad} outside {c} classes")));
    }
    if let Some(wts) = &opts.class_weights {
        if wts.len() != c {
            return Err(Error::shape(format!("{} class weights for {c} classes", wts.len())));
        }
    }
    Ok(())
}

/// Mean (optionally weighted) negative log-likelihood over scored pixels.
/// The gradient is with respect to the logits that produced `probs`.
pub fn cross_entropy(probs: &Tensor, targets: &[u16], opts: &LossOptions) -> Result<LossValue> {
    check_targets(probs, targets, opts)?;
    let c = probs.channels();
    let n_scored = targets.iter().filter(|&&t| !opts.is_ignored(t)).count();
    let mut grad = Tensor::zeros(probs.shape());
    if n_scored == 0 {
        log::warn!("cross-entropy: every pixel is ignored");
        return Ok(LossValue {
            value: 0.0,
            grad,
            degenerate: true,
        });
    }
    let n = n_scored as f64;
    let mut total = 0.0f64;
    for (i, &t) in targets.iter().enumerate() {
        if opts.is_ignored(t) {
            continue;
        }
        let t = usize::from(t);
        let w = opts.class_weights.as_ref().map_or(1.0, |ws| f64::from(ws[t]));
        let p = &probs.data()[i * c..(i + 1) * c];
        total -= w * f64::from(p[t]).max(LOG_CLAMP).ln();
        let g = &mut grad.data_mut()[i * c..(i + 1) * c];
        for k in 0..c {
            let onehot = if k == t { 1.0 } else { 0.0 };
            g[k] = (w / n * (f64::from(p[k]) - onehot)) as f32;
        }
    }
    Ok(LossValue {
        value: total / n,
        grad,
        degenerate: false,
    })
}

/// Soft Dice loss with squared denominators,
/// `1 - mean_c 2 sum(t p) / (sum t^2 + sum p^2)`, over the included classes.
///
/// The ignore class itself is not part of the mean, and neither is any
/// class whose denominator is zero. The gradient is with respect to `probs`.
pub fn dice_loss(probs: &Tensor, targets: &[u16], opts: &LossOptions) -> Result<LossValue> {
    check_targets(probs, targets, opts)?;
    let c = probs.channels();
    let eps = opts.dice_epsilon;
    let mut inter = vec![0.0f64; c];
    let mut denom = vec![0.0f64; c];
    for (i, &t) in targets.iter().enumerate() {
        if opts.is_ignored(t) {
            continue;
        }
        let p = &probs.data()[i * c..(i + 1) * c];
        for k in 0..c {
            let pk = f64::from(p[k]);
            denom[k] += pk * pk;
        }
        let t = usize::from(t);
        inter[t] += f64::from(p[t]);
        denom[t] += 1.0;
    }
    let included: Vec<usize> = (0..c)
        .filter(|&k| opts.ignore_index.is_none_or(|ig| usize::from(ig) != k))
        .filter(|&k| denom[k] + eps > 0.0)
        .collect();
    let mut grad = Tensor::zeros(probs.shape());
    if included.is_empty() {
        log::warn!("dice loss: no class can be scored");
        return Ok(LossValue {
            value: 0.0,
            grad,
            degenerate: true,
        });
    }
    let m = included.len() as f64;
    let score: f64 = included
        .iter()
        .map(|&k| (2.0 * inter[k] + eps) / (denom[k] + eps))
        .sum();

    // d/dp_ik of (2I + e)/(S + e) = 2 t_ik / (S + e) - (2I + e) 2 p_ik / (S + e)^2
    for (i, &t) in targets.iter().enumerate() {
        if opts.is_ignored(t) {
            continue;
        }
        let t = usize::from(t);
        let p = &probs.data()[i * c..(i + 1) * c];
        let g = &mut grad.data_mut()[i * c..(i + 1) * c];
        for &k in &included {
            let s = denom[k] + eps;
            let onehot = if k == t { 1.0 } else { 0.0 };
            let d = 2.0 * onehot / s - (2.0 * inter[k] + eps) * 2.0 * f64::from(p[k]) / (s * s);
            g[k] = (-d / m) as f32;
        }
    }
    Ok(LossValue {
        value: 1.0 - score / m,
        grad,
        degenerate: false,
    })
}

/// Argmax over channels, one class id per pixel.
pub fn argmax(scores: &Tensor) -> Vec<u16> {
    let c = scores.channels();
    scores
        .data()
        .chunks_exact(c)
        .map(|px| {
            let mut best = 0;
            for k in 1..c {
                if px[k] > px[best] {
                    best = k;
                }
            }
            best as u16
        })
        .collect()
}

/// Ground truth (rows) against prediction (columns).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    ignore: Option<u16>,
    counts: Vec<u64>,
}

/// Per-class IoU (`None` where the class never occurs) and their mean.
#[derive(Clone, Debug, PartialEq)]
pub struct IouReport {
    pub per_class: Vec<Option<f64>>,
    pub mean: Option<f64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize, ignore: Option<u16>) -> Self {
        Self {
            num_classes,
            ignore,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accumulate(&mut self, preds: &[u16], targets: &[u16]) -> Result<()> {
        if preds.len() != targets.len() {
            return Err(Error::shape(format!(
                "{} predictions for {} targets",
                preds.len(),
                targets.len()
            )));
        }
        let c = self.num_classes;
        if let Some(bad) = preds.iter().chain(targets).find(|&&id| usize::from(id) >= c) {
            return Err(Error::shape(format!("class id {bad} outside {c} classes")));
        }
        for (&p, &t) in preds.iter().zip(targets) {
            if self.ignore == Some(t) {
                continue;
            }
            self.counts[usize::from(t) * c + usize::from(p)] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes || other.ignore != self.ignore {
            return Err(Error::shape("cannot merge differently configured confusion matrices"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// `IoU_c = TP / (TP + FP + FN)`; classes with an empty union and the
    /// ignore class are left out of the mean.
    pub fn miou(&self) -> IouReport {
        let c = self.num_classes;
        let per_class: Vec<Option<f64>> = (0..c)
            .map(|k| {
                if self.ignore.map(usize::from) == Some(k) {
                    return None;
                }
                let tp = self.get(k, k);
                let fn_: u64 = (0..c).filter(|&p| p != k).map(|p| self.get(k, p)).sum();
                let fp: u64 = (0..c).filter(|&t| t != k).map(|t| self.get(t, k)).sum();
                let union = tp + fp + fn_;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect();
        let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
        let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        IouReport { per_class, mean }
    }
}
