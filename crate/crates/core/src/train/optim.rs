use super::config::OptimizerConfig;
use crate::net::Network;

/// First-order update over the network's trainable tensors. State is kept
/// per tensor in visiting order.
#[derive(Clone, Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    step: u32,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u32 {
        self.step
    }

    pub fn step(&mut self, net: &mut Network) {
        self.step += 1;
        let mut slot = 0;
        match self.config {
            OptimizerConfig::Sgd { lr } => {
                let lr = lr as f32;
                net.for_each_param(|_, w, g| {
                    for (w, g) in w.iter_mut().zip(g.iter()) {
                        *w -= lr * g;
                    }
                });
            }
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = (1.0 - beta1.powi(t)) as f32;
                let c2 = (1.0 - beta2.powi(t)) as f32;
                let (lr, b1, b2, eps) = (lr as f32, beta1 as f32, beta2 as f32, eps as f32);
                let (first, second) = (&mut self.first, &mut self.second);
                net.for_each_param(|_, w, g| {
                    if first.len() == slot {
                        first.push(vec![0.0; w.len()]);
                        second.push(vec![0.0; w.len()]);
                    }
                    let (m, v) = (&mut first[slot], &mut second[slot]);
                    for i in 0..w.len() {
                        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                        w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                    }
                    slot += 1;
                });
            }
        }
    }
}
