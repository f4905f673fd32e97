use std::time::Instant;

use crate::net::{Network, NetworkConfig};
use crate::nn::Tensor;
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub name: String,
    pub params: usize,
    pub times_ms: Vec<f64>,
}

impl BenchRow {
    pub fn min_ms(&self) -> f64 {
        self.times_ms.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean_ms(&self) -> f64 {
        self.times_ms.iter().sum::<f64>() / self.times_ms.len().max(1) as f64
    }
}

/// Times `reps` single-scan forward passes per configuration on a fixed
/// synthetic input, after one untimed warm-up pass.
pub fn bench(configs: &[(String, NetworkConfig)], height: usize, width: usize, reps: usize) -> Result<Vec<BenchRow>> {
    configs
        .iter()
        .map(|(name, cfg)| {
            cfg.check_input(height, width)?;
            let mut net = Network::build(cfg)?;
            let x = Tensor::from_fn([1, height, width, cfg.in_channels], |[_, h, w, c]| {
                ((h * 31 + w * 17 + c * 7) % 23) as f32 / 23.0
            });
            net.forward(&x)?;
            let times_ms = (0..reps)
                .map(|_| {
                    let t0 = Instant::now();
                    net.forward(&x).map(|_| 1e3 * t0.elapsed().as_secs_f64())
                })
                .collect::<Result<Vec<_>>>()?;
            log::info!("bench {name}: {times_ms:?} ms");
            Ok(BenchRow {
                name: name.clone(),
                params: net.count_params(),
                times_ms,
            })
        })
        .collect()
}
