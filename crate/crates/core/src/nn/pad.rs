use super::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WidthPadding {
    #[default]
    Zeros,
    /// Wrap around: the range image is a closed 360 degree cylinder.
    Cyclic,
}

/// Padding amounts per side. Height is always zero-padded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PadSpec {
    pub height: usize,
    pub width: usize,
    pub width_mode: WidthPadding,
}

impl PadSpec {
    /// "Same" padding for an `kh x kw` kernel.
    pub fn same(kh: usize, kw: usize, width_mode: WidthPadding) -> Self {
        Self {
            height: kh / 2,
            width: kw / 2,
            width_mode,
        }
    }

    pub fn none() -> Self {
        Self {
            height: 0,
            width: 0,
            width_mode: WidthPadding::Zeros,
        }
    }

    pub fn padded_shape(&self, shape: [usize; 4]) -> [usize; 4] {
        let [b, h, w, c] = shape;
        [b, h + 2 * self.height, w + 2 * self.width, c]
    }

    fn check(&self, w: usize) -> Result<()> {
        if self.width_mode == WidthPadding::Cyclic && self.width > w {
            return Err(Error::shape(format!(
                "cyclic pad of {} columns exceeds width {w}",
                self.width
            )));
        }
        Ok(())
    }
}

/// Source column in the unpadded input for padded column `pc`, if any.
#[inline]
fn source_col(pc: usize, pad: usize, w: usize, mode: WidthPadding) -> Option<usize> {
    let c = pc as isize - pad as isize;
    if (0..w as isize).contains(&c) {
        Some(c as usize)
    } else {
        match mode {
            WidthPadding::Zeros => None,
            WidthPadding::Cyclic => Some(c.rem_euclid(w as isize) as usize),
        }
    }
}

pub fn pad(x: &Tensor, spec: &PadSpec) -> Result<Tensor> {
    let [b, h, w, c] = x.shape();
    spec.check(w)?;
    if spec.height == 0 && spec.width == 0 {
        return Ok(x.clone());
    }
    let mut out = Tensor::zeros(spec.padded_shape(x.shape()));
    let pw = w + 2 * spec.width;
    for ib in 0..b {
        for ih in 0..h {
            let src_row = x.offset(ib, ih, 0, 0);
            let dst_row = out.offset(ib, ih + spec.height, 0, 0);
            for pc in 0..pw {
                if let Some(sc) = source_col(pc, spec.width, w, spec.width_mode) {
                    let (s, d) = (src_row + sc * c, dst_row + pc * c);
                    let src = &x.data()[s..s + c];
                    out.data_mut()[d..d + c].copy_from_slice(src);
                }
            }
        }
    }
    Ok(out)
}

/// Gradient of [`pad`]: wrapped columns accumulate back onto their sources.
pub fn pad_backward(grad_padded: &Tensor, spec: &PadSpec, input_shape: [usize; 4]) -> Result<Tensor> {
    let [b, h, w, c] = input_shape;
    spec.check(w)?;
    grad_padded.ensure_shape(spec.padded_shape(input_shape), "pad_backward upstream")?;
    let mut out = Tensor::zeros(input_shape);
    let pw = w + 2 * spec.width;
    for ib in 0..b {
        for ih in 0..h {
            let src_row = grad_padded.offset(ib, ih + spec.height, 0, 0);
            let dst_row = out.offset(ib, ih, 0, 0);
            for pc in 0..pw {
                if let Some(sc) = source_col(pc, spec.width, w, spec.width_mode) {
                    for k in 0..c {
                        out.data_mut()[dst_row + sc * c + k] += grad_padded.data()[src_row + pc * c + k];
                    }
                }
            }
        }
    }
    Ok(out)
}
