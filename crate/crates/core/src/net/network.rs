use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{NetworkConfig, STAGES};
use super::layers::{Conv, ConvNorm, DecoderStage, ResBlock, Slot};
use crate::nn::{add, Tensor};
use crate::{Error, Result};

struct Stage {
    down: Option<ConvNorm>,
    blocks: Vec<ResBlock>,
}

/// A built backbone. Inference (`forward`) takes `&self`; training
/// (`forward_train` / `backward`) caches activations inside the layers.
pub struct Network {
    config: NetworkConfig,
    stem: ConvNorm,
    stages: Vec<Stage>,
    /// `decoder[s - 1]` maps stage `s` back onto stage `s - 1`.
    decoder: Vec<DecoderStage>,
    head: Conv,
}

/// Read-only view of one named tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamView {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
    pub trainable: bool,
}

impl Network {
    pub fn build(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let f = config.filter_sizes();
        let pad = config.padding;
        let stride = config.width_stride;
        let alpha = |name: &str| config.alpha_for(name);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

        let stem = ConvNorm::new(
            &mut rng,
            "stem",
            3,
            config.in_channels,
            f[0],
            alpha("stem"),
            1,
            pad,
            true,
        )?;
        let mut stages = Vec::with_capacity(STAGES);
        for s in 0..STAGES {
            let down = if s == 0 {
                None
            } else {
                let name = format!("enc{s}.down");
                Some(ConvNorm::new(
                    &mut rng,
                    &name,
                    3,
                    f[s - 1],
                    f[s],
                    alpha(&name),
                    stride,
                    pad,
                    true,
                )?)
            };
            let blocks = (0..config.blocks[s])
                .map(|b| {
                    let name = format!("enc{s}.block{b}");
                    let alphas = [alpha(&format!("{name}.conv1")), alpha(&format!("{name}.conv2"))];
                    ResBlock::new(&mut rng, &name, f[s], alphas, pad)
                })
                .collect::<Result<Vec<_>>>()?;
            stages.push(Stage { down, blocks });
        }
        let decoder = (1..STAGES)
            .map(|s| {
                let name = format!("dec{s}");
                let alphas = [alpha(&format!("{name}.lateral")), alpha(&format!("{name}.fuse"))];
                DecoderStage::new(&mut rng, &name, f[s], f[s - 1], alphas, stride, pad)
            })
            .collect::<Result<Vec<_>>>()?;
        let head = Conv::new(
            &mut rng,
            "head".into(),
            1,
            f[0],
            config.num_classes,
            alpha("head"),
            1,
            pad,
        )?;
        Ok(Self {
            config: config.clone(),
            stem,
            stages,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.channels() != self.config.in_channels {
            return Err(Error::shape(format!(
                "network expects {} input channels, got {}",
                self.config.in_channels,
                x.channels()
            )));
        }
        self.config.check_input(x.height(), x.width())
    }

    /// Logits `[B, H, W, num_classes]`, normalization from running statistics.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = self.stem.forward(x)?;
        let mut feats = Vec::with_capacity(STAGES);
        for stage in &self.stages {
            if let Some(down) = &stage.down {
                h = down.forward(&h)?;
            }
            for block in &stage.blocks {
                h = block.forward(&h)?;
            }
            feats.push(h.clone());
        }
        for s in (1..STAGES).rev() {
            h = self.decoder[s - 1].forward(&h, &feats[s - 1])?;
        }
        self.head.forward(&h)
    }

    /// Training forward with batch statistics; must be followed by [`Network::backward`].
    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = self.stem.forward_train(x)?;
        let mut feats = Vec::with_capacity(STAGES);
        for stage in &mut self.stages {
            if let Some(down) = &mut stage.down {
                h = down.forward_train(&h)?;
            }
            for block in &mut stage.blocks {
                h = block.forward_train(&h)?;
            }
            feats.push(h.clone());
        }
        for s in (1..STAGES).rev() {
            h = self.decoder[s - 1].forward_train(&h, &feats[s - 1])?;
        }
        self.head.forward_train(&h)
    }

    /// Accumulates parameter gradients for the last training forward and
    /// returns the gradient with respect to the input.
    pub fn backward(&mut self, grad_logits: &Tensor) -> Result<Tensor> {
        let mut g = self.head.backward(grad_logits)?;
        let mut skip_grads: Vec<Option<Tensor>> = vec![None; STAGES];
        for s in 1..STAGES {
            let (gx, gskip) = self.decoder[s - 1].backward(&g)?;
            skip_grads[s - 1] = Some(gskip);
            g = gx;
        }
        for s in (0..STAGES).rev() {
            if let Some(gs) = skip_grads[s].take() {
                g = add(&g, &gs)?;
            }
            let stage = &mut self.stages[s];
            for block in stage.blocks.iter_mut().rev() {
                g = block.backward(&g)?;
            }
            if let Some(down) = &mut stage.down {
                g = down.backward(&g)?;
            }
        }
        self.stem.backward(&g)
    }

    pub(crate) fn visit(&mut self, v: &mut dyn FnMut(Slot<'_>)) {
        self.stem.visit(v);
        for stage in &mut self.stages {
            if let Some(down) = &mut stage.down {
                down.visit(v);
            }
            for block in &mut stage.blocks {
                block.visit(v);
            }
        }
        for dec in &mut self.decoder {
            dec.visit(v);
        }
        self.head.visit(v);
    }

    /// Applies `f(name, value, grad)` to every trainable tensor in a fixed order.
    pub fn for_each_param(&mut self, mut f: impl FnMut(&str, &mut [f32], &mut [f32])) {
        self.visit(&mut |slot| {
            if let Some(grad) = slot.grad {
                f(&slot.name, slot.value, grad);
            }
        });
    }

    pub fn zero_grad(&mut self) {
        self.for_each_param(|_, _, g| g.fill(0.0));
    }

    /// Every named tensor, trainable parameters and running statistics.
    pub fn tensors(&mut self) -> Vec<ParamView> {
        let mut out = Vec::new();
        self.visit(&mut |slot| {
            out.push(ParamView {
                name: slot.name,
                shape: slot.shape,
                values: slot.value.to_vec(),
                trainable: slot.grad.is_some(),
            })
        });
        out
    }

    /// Overwrites named tensors. The caller guarantees names and shapes.
    pub(crate) fn assign(&mut self, mut f: impl FnMut(&str, &mut [f32])) {
        self.visit(&mut |slot| f(&slot.name, slot.value));
    }

    /// Number of trainable scalars.
    pub fn count_params(&mut self) -> usize {
        let mut n = 0;
        self.for_each_param(|_, v, _| n += v.len());
        n
    }
}
