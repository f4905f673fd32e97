use super::Tensor;
use crate::{Error, Result};

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Gradient of [`relu`] given its input.
pub fn relu_backward(x: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    upstream.ensure_shape(x.shape(), "relu upstream gradient")?;
    let data = x
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    b.ensure_shape(a.shape(), "add")?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::from_vec(a.shape(), data)
}

/// Nearest-neighbour upsampling along width: `[a, b] -> [a, a, b, b]` for factor 2.
pub fn upsample_width(x: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::shape("upsampling factor must be at least 1"));
    }
    let [b, h, w, c] = x.shape();
    let mut out = Tensor::zeros([b, h, w * factor, c]);
    for row in 0..b * h {
        for col in 0..w {
            let src = (row * w + col) * c;
            for r in 0..factor {
                let dst = (row * w * factor + col * factor + r) * c;
                out.data_mut()[dst..dst + c].copy_from_slice(&x.data()[src..src + c]);
            }
        }
    }
    Ok(out)
}

pub fn upsample_width_backward(upstream: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::shape("upsampling factor must be at least 1"));
    }
    let [b, h, wf, c] = upstream.shape();
    if wf % factor != 0 {
        return Err(Error::shape(format!("width {wf} is not a multiple of {factor}")));
    }
    let w = wf / factor;
    let mut out = Tensor::zeros([b, h, w, c]);
    for row in 0..b * h {
        for col in 0..w {
            let dst = (row * w + col) * c;
            for r in 0..factor {
                let src = (row * wf + col * factor + r) * c;
                for k in 0..c {
                    out.data_mut()[dst + k] += upstream.data()[src + k];
                }
            }
        }
    }
    Ok(out)
}
