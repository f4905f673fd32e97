use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{LossKind, TrainConfig};
use super::data::{input_tensor, Sample};
use super::optim::Optimizer;
use super::report::{EvalMetrics, RunReport};
use crate::net::Network;
use crate::nn::Tensor;
use crate::objectives::{argmax, cross_entropy, dice_loss, softmax, softmax_backward, ConfusionMatrix, LossOptions};
use crate::projection::backproject_labels;
use crate::{Error, Result};

/// Anything that maps a `[B, H, W, 3]` input to class scores.
pub trait Predictor {
    fn logits(&self, input: &Tensor) -> Result<Tensor>;
}

impl Predictor for Network {
    fn logits(&self, input: &Tensor) -> Result<Tensor> {
        self.forward(input)
    }
}

fn check_dataset(samples: &[Sample], num_classes: usize) -> Result<(usize, usize)> {
    let Some(first) = samples.first() else {
        return Err(Error::shape("dataset is empty"));
    };
    let shape = first.shape();
    for s in samples {
        if s.shape() != shape {
            return Err(Error::shape(format!(
                "sample {} is {:?}, expected {shape:?}",
                s.seed,
                s.shape()
            )));
        }
        if s.point_labels.len() != s.index.point_to_pixel.len() {
            return Err(Error::shape(format!(
                "sample {}: point labels do not match its index map",
                s.seed
            )));
        }
        let max = s.targets().iter().chain(&s.point_labels).copied().max().unwrap_or(0);
        if usize::from(max) >= num_classes {
            return Err(Error::shape(format!(
                "sample {} has label {max}, network predicts {num_classes} classes",
                s.seed
            )));
        }
    }
    Ok(shape)
}

/// Loss value and gradient with respect to the logits.
fn loss_and_grad(kind: LossKind, logits: &Tensor, targets: &[u16], opts: &LossOptions) -> Result<(f64, Tensor)> {
    let probs = softmax(logits);
    let dice = |probs: &Tensor| -> Result<(f64, Tensor)> {
        let d = dice_loss(probs, targets, opts)?;
        Ok((d.value, softmax_backward(probs, &d.grad)?))
    };
    match kind {
        LossKind::CrossEntropy => {
            let ce = cross_entropy(&probs, targets, opts)?;
            Ok((ce.value, ce.grad))
        }
        LossKind::Dice => dice(&probs),
        LossKind::Both => {
            let ce = cross_entropy(&probs, targets, opts)?;
            let (dv, mut dg) = dice(&probs)?;
            for (d, c) in dg.data_mut().iter_mut().zip(ce.grad.data()) {
                *d += c;
            }
            Ok((ce.value + dv, dg))
        }
    }
}

/// Sample indices, reshuffled every pass over the data.
struct BatchOrder {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
}

impl BatchOrder {
    fn new(n: usize, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..n).collect(),
            pos: n,
        }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        (0..size)
            .map(|_| {
                if self.pos == self.order.len() {
                    self.order.shuffle(&mut self.rng);
                    self.pos = 0;
                }
                self.pos += 1;
                self.order[self.pos - 1]
            })
            .collect()
    }
}

/// Trains a freshly built network on `dataset` and scores it on the same
/// samples. Deterministic for a fixed config apart from the timing fields.
pub fn train(config: &TrainConfig, dataset: &[Sample]) -> Result<(Network, RunReport)> {
    config.validate()?;
    let net_cfg = config.network_config();
    let (h, w) = check_dataset(dataset, net_cfg.num_classes)?;
    net_cfg.check_input(h, w)?;

    let started = Instant::now();
    let mut net = Network::build(&net_cfg)?;
    let mut opt = Optimizer::new(config.optimizer);
    let mut batches = BatchOrder::new(dataset.len(), config.seed);
    let opts = LossOptions::default();
    let mut trace = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let idx = batches.next_batch(config.batch_size);
        let images: Vec<_> = idx.iter().map(|&i| &dataset[i].image).collect();
        let x = input_tensor(&images)?;
        let targets: Vec<u16> = idx.iter().flat_map(|&i| dataset[i].targets().iter().copied()).collect();

        net.zero_grad();
        let logits = net.forward_train(&x)?;
        let (loss, grad) = loss_and_grad(config.loss, &logits, &targets, &opts)?;
        if !loss.is_finite() || !grad.all_finite() {
            return Err(Error::Diverged { step, loss });
        }
        net.backward(&grad)?;
        opt.step(&mut net);
        trace.push(loss);
        if step % 10 == 0 || step + 1 == config.steps {
            log::info!("step {step}: loss {loss:.5}");
        }
    }
    let train_seconds = started.elapsed().as_secs_f64();

    let metrics = evaluate(&net, dataset, true)?;
    let report = RunReport {
        config: config.clone(),
        param_count: net.count_params(),
        loss_trace: trace,
        train: metrics,
        val: None,
        train_seconds,
    };
    Ok((net, report))
}

/// Runs `model` on every sample (one scan per forward pass) and scores the
/// arg-max labels.
pub fn evaluate<P: Predictor + ?Sized>(model: &P, samples: &[Sample], backproject: bool) -> Result<EvalMetrics> {
    let mut preds = Vec::with_capacity(samples.len());
    let mut num_classes = 0;
    let mut elapsed = 0.0;
    for s in samples {
        let x = input_tensor(&[&s.image])?;
        let t0 = Instant::now();
        let logits = model.logits(&x)?;
        elapsed += t0.elapsed().as_secs_f64();
        num_classes = logits.channels();
        preds.push(argmax(&logits));
    }
    let mut m = evaluate_labels(samples, &preds, num_classes, backproject)?;
    if !samples.is_empty() {
        m.forward_ms = 1e3 * elapsed / samples.len() as f64;
    }
    Ok(m)
}

/// Scores given per-pixel label images, class 0 ignored.
pub fn evaluate_labels(
    samples: &[Sample],
    preds: &[Vec<u16>],
    num_classes: usize,
    backproject: bool,
) -> Result<EvalMetrics> {
    if preds.len() != samples.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} samples",
            preds.len(),
            samples.len()
        )));
    }
    let mut pixel = ConfusionMatrix::new(num_classes, Some(0));
    let mut point = ConfusionMatrix::new(num_classes, Some(0));
    for (s, p) in samples.iter().zip(preds) {
        pixel.accumulate(p, s.targets())?;
        if backproject {
            let per_point = backproject_labels(&s.index, p, s.point_labels.len())?;
            point.accumulate(&per_point, &s.point_labels)?;
        }
    }
    Ok(EvalMetrics {
        samples: samples.len(),
        pixel: pixel.miou(),
        point: backproject.then(|| point.miou()),
        forward_ms: 0.0,
    })
}
