use crate::{Error, Result};

/// Rank-4 `[batch, height, width, channels]` f32 tensor, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: [usize; 4], value: f32) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> f32) -> Self {
        let [b, h, w, c] = shape;
        let mut data = Vec::with_capacity(b * h * w * c);
        for ib in 0..b {
            for ih in 0..h {
                for iw in 0..w {
                    for ic in 0..c {
                        data.push(f([ib, ih, iw, ic]));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn height(&self) -> usize {
        self.shape[1]
    }

    pub fn width(&self) -> usize {
        self.shape[2]
    }

    pub fn channels(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn offset(&self, b: usize, h: usize, w: usize, c: usize) -> usize {
        ((b * self.shape[1] + h) * self.shape[2] + w) * self.shape[3] + c
    }

    pub fn at(&self, b: usize, h: usize, w: usize, c: usize) -> f32 {
        self.data[self.offset(b, h, w, c)]
    }

    pub fn set(&mut self, b: usize, h: usize, w: usize, c: usize, v: f32) {
        let o = self.offset(b, h, w, c);
        self.data[o] = v;
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rotates every row `shift` columns to the right (cyclically).
    pub fn roll_width(&self, shift: isize) -> Self {
        let [b, h, w, c] = self.shape;
        let mut out = Self::zeros(self.shape);
        if w == 0 {
            return out;
        }
        let s = shift.rem_euclid(w as isize) as usize;
        for row in 0..b * h {
            let src = &self.data[row * w * c..(row + 1) * w * c];
            let dst = &mut out.data[row * w * c..(row + 1) * w * c];
            dst[s * c..].copy_from_slice(&src[..(w - s) * c]);
            dst[..s * c].copy_from_slice(&src[(w - s) * c..]);
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        assert_eq!(self.shape, other.shape, "max_abs_diff on different shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    /// Concatenates tensors along the batch axis.
    pub fn stack(parts: &[&Tensor]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::shape("cannot stack zero tensors"))?;
        let [_, h, w, c] = first.shape;
        let mut data = Vec::new();
        let mut b = 0;
        for t in parts {
            if t.shape[1..] != [h, w, c] {
                return Err(Error::shape(format!(
                    "cannot stack {:?} onto {:?}",
                    t.shape, first.shape
                )));
            }
            b += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        Ok(Self {
            shape: [b, h, w, c],
            data,
        })
    }

    pub(crate) fn ensure_shape(&self, expected: [usize; 4], what: &str) -> Result<()> {
        if self.shape != expected {
            return Err(Error::shape(format!(
                "{what}: expected {expected:?}, got {:?}",
                self.shape
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_nhwc() {
        let t = Tensor::from_fn([2, 3, 4, 5], |[b, h, w, c]| (((b * 3 + h) * 4 + w) * 5 + c) as f32);
        assert_eq!(t.at(1, 2, 3, 4), 119.0);
        assert_eq!(t.data()[t.offset(1, 0, 2, 1)], t.at(1, 0, 2, 1));
    }

    #[test]
    fn roll_width_rotates_rows() {
        let t = Tensor::from_vec([1, 1, 4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.roll_width(1).data(), &[4.0, 1.0, 2.0, 3.0]);
        assert_eq!(t.roll_width(-1).data(), &[2.0, 3.0, 4.0, 1.0]);
        assert_eq!(t.roll_width(4), t);
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec([1, 2, 2, 1], vec![0.0; 3]).is_err());
    }

    #[test]
    fn stack_concatenates_batches() {
        let a = Tensor::full([1, 2, 2, 1], 1.0);
        let b = Tensor::full([2, 2, 2, 1], 2.0);
        let s = Tensor::stack(&[&a, &b]).unwrap();
        assert_eq!(s.shape(), [3, 2, 2, 1]);
        assert_eq!(s.at(2, 1, 1, 0), 2.0);
        assert!(Tensor::stack(&[&a, &Tensor::zeros([1, 2, 3, 1])]).is_err());
    }
}
