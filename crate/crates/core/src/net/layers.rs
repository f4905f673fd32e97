//! Trainable building blocks. Each `forward_train` caches what its
//! `backward` needs; `forward` is the cache-free inference path.

use rand::Rng;

use crate::nn::slc::{slc_backward_strided, slc_forward_strided};
use crate::nn::{
    add, batch_stats_norm_backward, glorot_uniform, relu, relu_backward, upsample_width, upsample_width_backward,
    BatchNorm, NormCache, PadSpec, SlcKernel, Tensor, WidthPadding,
};
use crate::{Error, Result};

/// Visitor over named tensors. `grad` is `None` for non-trainable buffers.
pub(crate) struct Slot<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: &'a mut [f32],
    pub grad: Option<&'a mut [f32]>,
}

pub(crate) type Visitor<'v> = dyn FnMut(Slot<'_>) + 'v;

fn missing_cache(name: &str) -> Error {
    Error::shape(format!("{name}: backward called without a training forward"))
}

pub(crate) struct Conv {
    pub name: String,
    kernel: SlcKernel,
    stride: usize,
    pad: PadSpec,
    grad_w: Vec<f32>,
    grad_b: Vec<f32>,
    input: Option<Tensor>,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        rng: &mut R,
        name: String,
        k: usize,
        c_in: usize,
        c_out: usize,
        alpha: usize,
        stride: usize,
        padding: WidthPadding,
    ) -> Result<Self> {
        let mut kernel = SlcKernel::zeros(k, k, c_in, c_out, alpha)?;
        glorot_uniform(rng, kernel.weights_mut(), k * k * c_in, k * k * c_out);
        Ok(Self {
            grad_w: vec![0.0; kernel.weights().len()],
            grad_b: vec![0.0; kernel.bias().len()],
            name,
            kernel,
            stride,
            pad: PadSpec::same(k, k, padding),
            input: None,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        slc_forward_strided(x, &self.kernel, &self.pad, self.stride)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = self.forward(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let x = self.input.take().ok_or_else(|| missing_cache(&self.name))?;
        let g = slc_backward_strided(&x, &self.kernel, &self.pad, self.stride, gy)?;
        for (a, b) in self.grad_w.iter_mut().zip(&g.weights) {
            *a += b;
        }
        for (a, b) in self.grad_b.iter_mut().zip(&g.bias) {
            *a += b;
        }
        Ok(g.input)
    }

    pub fn visit(&mut self, v: &mut Visitor<'_>) {
        let [kh, kw, ci, co, alpha] = self.kernel.dims();
        let (w, b) = self.kernel.parts_mut();
        v(Slot {
            name: format!("{}.weight", self.name),
            shape: vec![kh, kw, ci, co, alpha],
            value: w,
            grad: Some(&mut self.grad_w),
        });
        v(Slot {
            name: format!("{}.bias", self.name),
            shape: vec![co, alpha],
            value: b,
            grad: Some(&mut self.grad_b),
        });
    }
}

pub(crate) struct Norm {
    name: String,
    bn: BatchNorm,
    grad_gamma: Vec<f32>,
    grad_beta: Vec<f32>,
    cache: Option<NormCache>,
}

impl Norm {
    pub fn new(name: String, channels: usize) -> Self {
        Self {
            name,
            bn: BatchNorm::new(channels),
            grad_gamma: vec![0.0; channels],
            grad_beta: vec![0.0; channels],
            cache: None,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.bn.forward_inference(x)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let (y, cache) = self.bn.forward_train(x)?;
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(|| missing_cache(&self.name))?;
        let g = batch_stats_norm_backward(&cache, &self.bn.gamma, gy)?;
        for (a, b) in self.grad_gamma.iter_mut().zip(&g.gamma) {
            *a += b;
        }
        for (a, b) in self.grad_beta.iter_mut().zip(&g.beta) {
            *a += b;
        }
        Ok(g.input)
    }

    pub fn visit(&mut self, v: &mut Visitor<'_>) {
        let c = self.bn.channels();
        let BatchNorm {
            gamma,
            beta,
            running_mean,
            running_var,
        } = &mut self.bn;
        v(Slot {
            name: format!("{}.gamma", self.name),
            shape: vec![c],
            value: gamma,
            grad: Some(&mut self.grad_gamma),
        });
        v(Slot {
            name: format!("{}.beta", self.name),
            shape: vec![c],
            value: beta,
            grad: Some(&mut self.grad_beta),
        });
        v(Slot {
            name: format!("{}.running_mean", self.name),
            shape: vec![c],
            value: running_mean,
            grad: None,
        });
        v(Slot {
            name: format!("{}.running_var", self.name),
            shape: vec![c],
            value: running_var,
            grad: None,
        });
    }
}

/// conv -> norm -> optional relu.
pub(crate) struct ConvNorm {
    conv: Conv,
    norm: Norm,
    relu: bool,
    pre_act: Option<Tensor>,
}

impl ConvNorm {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        rng: &mut R,
        name: &str,
        k: usize,
        c_in: usize,
        c_out: usize,
        alpha: usize,
        stride: usize,
        padding: WidthPadding,
        relu: bool,
    ) -> Result<Self> {
        Ok(Self {
            conv: Conv::new(rng, format!("{name}.conv"), k, c_in, c_out, alpha, stride, padding)?,
            norm: Norm::new(format!("{name}.norm"), c_out),
            relu,
            pre_act: None,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.norm.forward(&self.conv.forward(x)?)?;
        Ok(if self.relu { relu(&y) } else { y })
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let c = self.conv.forward_train(x)?;
        let y = self.norm.forward_train(&c)?;
        if self.relu {
            let out = relu(&y);
            self.pre_act = Some(y);
            Ok(out)
        } else {
            Ok(y)
        }
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let g = if self.relu {
            let pre = self.pre_act.take().ok_or_else(|| missing_cache(&self.conv.name))?;
            relu_backward(&pre, gy)?
        } else {
            gy.clone()
        };
        let g = self.norm.backward(&g)?;
        self.conv.backward(&g)
    }

    pub fn visit(&mut self, v: &mut Visitor<'_>) {
        self.conv.visit(v);
        self.norm.visit(v);
    }
}

/// `relu(x + convnorm2(convnorm1(x)))`.
pub(crate) struct ResBlock {
    first: ConvNorm,
    second: ConvNorm,
    pre_act: Option<Tensor>,
}

impl ResBlock {
    pub fn new<R: Rng>(
        rng: &mut R,
        name: &str,
        channels: usize,
        alphas: [usize; 2],
        padding: WidthPadding,
    ) -> Result<Self> {
        Ok(Self {
            first: ConvNorm::new(
                rng,
                &format!("{name}.conv1"),
                3,
                channels,
                channels,
                alphas[0],
                1,
                padding,
                true,
            )?,
            second: ConvNorm::new(
                rng,
                &format!("{name}.conv2"),
                3,
                channels,
                channels,
                alphas[1],
                1,
                padding,
                false,
            )?,
            pre_act: None,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let r = self.second.forward(&self.first.forward(x)?)?;
        Ok(relu(&add(x, &r)?))
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let r = self.first.forward_train(x)?;
        let r = self.second.forward_train(&r)?;
        let sum = add(x, &r)?;
        let out = relu(&sum);
        self.pre_act = Some(sum);
        Ok(out)
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        let sum = self
            .pre_act
            .take()
            .ok_or_else(|| Error::shape("residual block backward without forward"))?;
        let g = relu_backward(&sum, gy)?;
        let through = self.first.backward(&self.second.backward(&g)?)?;
        add(&g, &through)
    }

    pub fn visit(&mut self, v: &mut Visitor<'_>) {
        self.first.visit(v);
        self.second.visit(v);
    }
}

/// Lateral 1x1 projection, width upsampling, skip addition, 3x3 fuse.
pub(crate) struct DecoderStage {
    lateral: Conv,
    fuse: ConvNorm,
    factor: usize,
}

impl DecoderStage {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        rng: &mut R,
        name: &str,
        c_in: usize,
        c_out: usize,
        alphas: [usize; 2],
        factor: usize,
        padding: WidthPadding,
    ) -> Result<Self> {
        Ok(Self {
            lateral: Conv::new(rng, format!("{name}.lateral"), 1, c_in, c_out, alphas[0], 1, padding)?,
            fuse: ConvNorm::new(
                rng,
                &format!("{name}.fuse"),
                3,
                c_out,
                c_out,
                alphas[1],
                1,
                padding,
                true,
            )?,
            factor,
        })
    }

    pub fn forward(&self, x: &Tensor, skip: &Tensor) -> Result<Tensor> {
        let up = upsample_width(&self.lateral.forward(x)?, self.factor)?;
        self.fuse.forward(&add(&up, skip)?)
    }

    pub fn forward_train(&mut self, x: &Tensor, skip: &Tensor) -> Result<Tensor> {
        let up = upsample_width(&self.lateral.forward_train(x)?, self.factor)?;
        self.fuse.forward_train(&add(&up, skip)?)
    }

    /// Returns the gradients for `(x, skip)`.
    pub fn backward(&mut self, gy: &Tensor) -> Result<(Tensor, Tensor)> {
        let g_sum = self.fuse.backward(gy)?;
        let g_lat = upsample_width_backward(&g_sum, self.factor)?;
        let g_x = self.lateral.backward(&g_lat)?;
        Ok((g_x, g_sum))
    }

    pub fn visit(&mut self, v: &mut Visitor<'_>) {
        self.lateral.visit(v);
        self.fuse.visit(v);
    }
}
