//! Netpbm previews: PGM for depth, PPM for class ids.

use std::path::Path;

use crate::cloud_io::write_file;
use crate::projection::RangeImage;
use crate::{Error, Result};

const PALETTE: [[u8; 3]; 8] = [
    [0, 0, 0],
    [128, 64, 128],
    [70, 70, 70],
    [0, 0, 142],
    [153, 153, 153],
    [107, 142, 35],
    [0, 60, 100],
    [220, 20, 60],
];

/// Colour for a class id; 0 is black, ids past the palette get a hashed colour.
pub fn class_color(id: u16) -> [u8; 3] {
    if let Some(c) = PALETTE.get(usize::from(id)) {
        return *c;
    }
    let h = u32::from(id).wrapping_mul(0x9E37_79B9);
    [(h >> 24) as u8 | 0x40, (h >> 16) as u8 | 0x40, (h >> 8) as u8 | 0x40]
}

/// Binary PGM. Near returns are bright, empty pixels black.
pub fn depth_pgm(img: &RangeImage) -> Vec<u8> {
    let max = img
        .depth()
        .iter()
        .zip(img.mask())
        .filter(|(_, &m)| m)
        .map(|(&d, _)| d)
        .fold(0.0f32, f32::max);
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.depth().iter().zip(img.mask()).map(|(&d, &m)| {
        if !m || max <= 0.0 {
            0
        } else {
            (1.0 + 254.0 * (1.0 - d / max)).round() as u8
        }
    }));
    out
}

/// Binary PPM of a row-major `height x width` label image.
pub fn class_ppm(labels: &[u16], height: usize, width: usize) -> Result<Vec<u8>> {
    if labels.len() != height * width {
        return Err(Error::shape(format!(
            "{} labels for a {height}x{width} image",
            labels.len()
        )));
    }
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    for &l in labels {
        out.extend_from_slice(&class_color(l));
    }
    Ok(out)
}

pub fn write_depth_pgm(img: &RangeImage, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &depth_pgm(img))
}

pub fn write_class_ppm(labels: &[u16], height: usize, width: usize, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &class_ppm(labels, height, width)?)
}
