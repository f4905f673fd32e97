//! On-disk formats: KITTI velodyne scans, SemanticKITTI labels and the
//! `RIMG` range-image container.
//!
//! ```text
//! .bin    N x (x: f32, y: f32, z: f32, reflectance: f32), little-endian
//! .label  N x u32 little-endian, low 16 bits = semantic id, high 16 = instance
//! .rimg   "RIMG" | version: u32 | H: u32 | W: u32                (16 bytes)
//!         n_channels: u32 | n_channels x (name: [u8; 8], dtype: u32)
//!         one H*W plane per channel, in directory order
//!         dtype 0 = f32 LE, dtype 1 = u8
//! ```
//!
//! Version 1 of `RIMG` writes the channels `depth`, `refl`, `label` (f32)
//! and `mask` (u8). Readers accept them in any order and skip unknown
//! channels.

use std::fs;
use std::path::Path;

use crate::projection::RangeImage;
use crate::{Error, Result};

const POINT_STRIDE: usize = 16;
const LABEL_STRIDE: usize = 4;

pub const RIMG_MAGIC: &[u8; 4] = b"RIMG";
pub const RIMG_VERSION: u32 = 1;
const RIMG_HEADER_LEN: usize = 16;
const DIR_ENTRY_LEN: usize = 12;
const DTYPE_F32: u32 = 0;
const DTYPE_U8: u32 = 1;

/// Points of one sweep in acquisition order, sensor frame, meters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<[f32; 3]>,
    reflectance: Vec<f32>,
}

impl PointCloud {
    pub fn new(points: Vec<[f32; 3]>, reflectance: Vec<f32>) -> Result<Self> {
        if points.len() != reflectance.len() {
            return Err(Error::shape(format!(
                "{} points but {} reflectance values",
                points.len(),
                reflectance.len()
            )));
        }
        for (i, (p, r)) in points.iter().zip(&reflectance).enumerate() {
            if !(p.iter().all(|v| v.is_finite()) && r.is_finite()) {
                return Err(Error::format(format!("non-finite value at point {i}")));
            }
        }
        Ok(Self { points, reflectance })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    pub fn reflectance(&self) -> &[f32] {
        &self.reflectance
    }

    pub(crate) fn push(&mut self, point: [f32; 3], reflectance: f32) {
        debug_assert!(point.iter().all(|v| v.is_finite()) && reflectance.is_finite());
        self.points.push(point);
        self.reflectance.push(reflectance);
    }
}

/// Per-point semantic and instance ids, paired with a [`PointCloud`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelArray {
    pub semantic: Vec<u16>,
    pub instance: Vec<u16>,
}

impl LabelArray {
    pub fn from_semantic(semantic: Vec<u16>) -> Self {
        let instance = vec![0; semantic.len()];
        Self { semantic, instance }
    }

    pub fn len(&self) -> usize {
        self.semantic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.semantic.is_empty()
    }
}

pub fn read_point_cloud(bytes: &[u8]) -> Result<PointCloud> {
    if !bytes.len().is_multiple_of(POINT_STRIDE) {
        return Err(Error::format(format!(
            "point cloud length {} is not a multiple of {POINT_STRIDE}",
            bytes.len()
        )));
    }
    let n = bytes.len() / POINT_STRIDE;
    let mut points = Vec::with_capacity(n);
    let mut reflectance = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(POINT_STRIDE).enumerate() {
        let [x, y, z, r] = std::array::from_fn(|k| le_f32(&rec[4 * k..]));
        if !(x.is_finite() && y.is_finite() && z.is_finite() && r.is_finite()) {
            return Err(Error::format(format!("non-finite value at point {i}")));
        }
        points.push([x, y, z]);
        reflectance.push(r);
    }
    Ok(PointCloud { points, reflectance })
}

pub fn write_point_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_STRIDE);
    for (p, r) in cloud.points.iter().zip(&cloud.reflectance) {
        for v in [p[0], p[1], p[2], *r] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_labels(bytes: &[u8]) -> Result<LabelArray> {
    if !bytes.len().is_multiple_of(LABEL_STRIDE) {
        return Err(Error::format(format!(
            "label length {} is not a multiple of {LABEL_STRIDE}",
            bytes.len()
        )));
    }
    let (semantic, instance) = bytes
        .chunks_exact(LABEL_STRIDE)
        .map(|w| {
            let word = u32::from_le_bytes([w[0], w[1], w[2], w[3]]);
            ((word & 0xFFFF) as u16, (word >> 16) as u16)
        })
        .unzip();
    Ok(LabelArray { semantic, instance })
}

pub fn write_labels(labels: &LabelArray) -> Result<Vec<u8>> {
    if labels.semantic.len() != labels.instance.len() {
        return Err(Error::shape("semantic and instance ids differ in length"));
    }
    Ok(labels
        .semantic
        .iter()
        .zip(&labels.instance)
        .flat_map(|(&s, &i)| ((u32::from(i) << 16) | u32::from(s)).to_le_bytes())
        .collect())
}

pub fn load_point_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    read_point_cloud(&read_file(path.as_ref())?)
}

pub fn save_point_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    write_file(path.as_ref(), &write_point_cloud(cloud))
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelArray> {
    read_labels(&read_file(path.as_ref())?)
}

pub fn save_labels(path: impl AsRef<Path>, labels: &LabelArray) -> Result<()> {
    write_file(path.as_ref(), &write_labels(labels)?)
}

pub fn encode_range_image(img: &RangeImage) -> Vec<u8> {
    let (h, w) = (img.height(), img.width());
    let plane = h * w;
    let mut out = Vec::with_capacity(RIMG_HEADER_LEN + 4 + 4 * DIR_ENTRY_LEN + plane * 13);
    out.extend_from_slice(RIMG_MAGIC);
    for v in [RIMG_VERSION, h as u32, w as u32, 4] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (name, dtype) in [
        ("depth", DTYPE_F32),
        ("refl", DTYPE_F32),
        ("label", DTYPE_F32),
        ("mask", DTYPE_U8),
    ] {
        let mut field = [0u8; 8];
        field[..name.len()].copy_from_slice(name.as_bytes());
        out.extend_from_slice(&field);
        out.extend_from_slice(&dtype.to_le_bytes());
    }
    for v in img.depth() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in img.reflectance() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in img.label() {
        out.extend_from_slice(&f32::from(v).to_le_bytes());
    }
    out.extend(img.mask().iter().map(|&m| u8::from(m)));
    out
}

pub fn decode_range_image(bytes: &[u8]) -> Result<RangeImage> {
    let mut cur = Cursor::new(bytes);
    if cur.take(4)? != RIMG_MAGIC {
        return Err(Error::format("bad RIMG magic"));
    }
    let version = cur.u32()?;
    if version != RIMG_VERSION {
        return Err(Error::format(format!("unsupported RIMG version {version}")));
    }
    let h = cur.u32()? as usize;
    let w = cur.u32()? as usize;
    let plane = h
        .checked_mul(w)
        .ok_or_else(|| Error::format("RIMG dimensions overflow"))?;

    let n_channels = cur.u32()? as usize;
    if n_channels > cur.remaining() / DIR_ENTRY_LEN {
        return Err(Error::format("RIMG channel directory truncated"));
    }
    let mut directory = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        let raw = cur.take(8)?;
        let end = raw.iter().position(|&b| b == 0).unwrap_or(raw.len());
        let name = std::str::from_utf8(&raw[..end])
            .map_err(|_| Error::format("RIMG channel name is not UTF-8"))?
            .to_owned();
        let dtype = cur.u32()?;
        let elem = match dtype {
            DTYPE_F32 => 4,
            DTYPE_U8 => 1,
            other => return Err(Error::format(format!("unknown RIMG dtype {other}"))),
        };
        directory.push((name, dtype, elem));
    }
    let payload: usize = directory
        .iter()
        .try_fold(0usize, |acc, &(_, _, elem)| {
            plane.checked_mul(elem).and_then(|n| acc.checked_add(n))
        })
        .ok_or_else(|| Error::format("RIMG planes overflow"))?;
    if payload != cur.remaining() {
        return Err(Error::format(format!(
            "RIMG payload is {} bytes, directory expects {payload}",
            cur.remaining()
        )));
    }

    let mut depth = None;
    let mut refl = None;
    let mut label = None;
    let mut mask = None;
    for (name, dtype, elem) in directory {
        let data = cur.take(plane * elem)?;
        let slot_taken = match (name.as_str(), dtype) {
            ("depth", DTYPE_F32) => depth.replace(f32_plane(data)).is_some(),
            ("refl", DTYPE_F32) => refl.replace(f32_plane(data)).is_some(),
            ("label", DTYPE_F32) => label.replace(label_plane(data)?).is_some(),
            ("mask", DTYPE_U8) => mask.replace(mask_plane(data)?).is_some(),
            ("depth" | "refl" | "label" | "mask", _) => {
                return Err(Error::format(format!("RIMG channel {name} has wrong dtype")))
            }
            _ => false,
        };
        if slot_taken {
            return Err(Error::format(format!("duplicate RIMG channel {name}")));
        }
    }
    let missing = |what: &str| Error::format(format!("RIMG channel {what} missing"));
    RangeImage::from_planes(
        h,
        w,
        depth.ok_or_else(|| missing("depth"))?,
        refl.ok_or_else(|| missing("refl"))?,
        label.ok_or_else(|| missing("label"))?,
        mask.ok_or_else(|| missing("mask"))?,
    )
    .map_err(|e| Error::format(format!("RIMG content invalid: {e}")))
}

pub fn write_range_image(img: &RangeImage, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_range_image(img))
}

pub fn read_range_image(path: impl AsRef<Path>) -> Result<RangeImage> {
    decode_range_image(&read_file(path.as_ref())?)
}

fn f32_plane(data: &[u8]) -> Vec<f32> {
    data.chunks_exact(4).map(le_f32).collect()
}

fn label_plane(data: &[u8]) -> Result<Vec<u16>> {
    data.chunks_exact(4)
        .map(|c| {
            let v = le_f32(c);
            if v.fract() == 0.0 && (0.0..=f32::from(u16::MAX)).contains(&v) {
                Ok(v as u16)
            } else {
                Err(Error::format(format!("label value {v} is not a class id")))
            }
        })
        .collect()
}

fn mask_plane(data: &[u8]) -> Result<Vec<bool>> {
    data.iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::format(format!("mask byte {other} is not 0 or 1"))),
        })
        .collect()
}

fn le_f32(b: &[u8]) -> f32 {
    f32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Bounds-checked little-endian reader shared by the binary containers.
pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::format(format!(
                "truncated: need {n} bytes at offset {}, {} left",
                self.pos,
                self.remaining()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
