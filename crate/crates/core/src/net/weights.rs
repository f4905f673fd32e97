//! Flat weight container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic    b"RSNW"
//! version  u32 = 1
//! count    u32
//! count x {
//!     name_len u32, name (UTF-8)
//!     ndim     u32, dims (u32 each)
//!     data     f32 x product(dims)
//! }
//! ```
//!
//! Names are unique. Running normalization statistics are stored alongside
//! trainable tensors so a loaded network reproduces inference exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::network::Network;
use crate::cloud_io::{read_file, write_file, Cursor};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"RSNW";
const VERSION: u32 = 1;
const MAX_NAME: usize = 4096;
const MAX_DIMS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn encode_weights(entries: &[WeightEntry]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u32_of(entries.len(), "entry count")?.to_le_bytes());
    for e in entries {
        if e.shape.iter().product::<usize>() != e.data.len() {
            return Err(Error::shape(format!(
                "{}: shape {:?} does not hold {} values",
                e.name,
                e.shape,
                e.data.len()
            )));
        }
        out.extend_from_slice(&u32_of(e.name.len(), "name length")?.to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.extend_from_slice(&u32_of(e.shape.len(), "rank")?.to_le_bytes());
        for &d in &e.shape {
            out.extend_from_slice(&u32_of(d, "dimension")?.to_le_bytes());
        }
        for v in &e.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn u32_of(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::format(format!("{what} {n} exceeds u32")))
}

pub fn decode_weights(bytes: &[u8]) -> Result<Vec<WeightEntry>> {
    let mut cur = Cursor::new(bytes);
    if cur.take(4)? != MAGIC {
        return Err(Error::format("not a weight container (bad magic)"));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported weight container version {version}")));
    }
    let count = cur.u32()? as usize;
    let mut seen = BTreeSet::new();
    let mut entries = Vec::new();
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        if name_len == 0 || name_len > MAX_NAME {
            return Err(Error::format(format!("bad tensor name length {name_len}")));
        }
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| Error::format("tensor name is not UTF-8"))?
            .to_string();
        let ndim = cur.u32()? as usize;
        if ndim > MAX_DIMS {
            return Err(Error::format(format!("{name}: rank {ndim} too large")));
        }
        let mut shape = Vec::with_capacity(ndim);
        let mut n: usize = 1;
        for _ in 0..ndim {
            let d = cur.u32()? as usize;
            n = n
                .checked_mul(d)
                .ok_or_else(|| Error::format(format!("{name}: element count overflows")))?;
            shape.push(d);
        }
        let byte_len = n
            .checked_mul(4)
            .filter(|&b| b <= cur.remaining())
            .ok_or_else(|| Error::format(format!("{name}: truncated tensor data ({n} values)")))?;
        let data = cur
            .take(byte_len)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if !seen.insert(name.clone()) {
            return Err(Error::format(format!("duplicate tensor name {name}")));
        }
        entries.push(WeightEntry { name, shape, data });
    }
    if cur.remaining() != 0 {
        return Err(Error::format(format!(
            "{} trailing bytes after last tensor",
            cur.remaining()
        )));
    }
    Ok(entries)
}

/// All named tensors of `net`, in visiting order.
pub fn network_entries(net: &mut Network) -> Vec<WeightEntry> {
    net.tensors()
        .into_iter()
        .map(|t| WeightEntry {
            name: t.name,
            shape: t.shape,
            data: t.values,
        })
        .collect()
}

/// Replaces every tensor of `net`. Nothing is assigned unless names and
/// shapes match exactly; otherwise the error lists each offending name.
pub fn apply_entries(net: &mut Network, entries: Vec<WeightEntry>) -> Result<()> {
    let expected: BTreeMap<String, Vec<usize>> = net.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
    let mut given: BTreeMap<String, WeightEntry> = entries.into_iter().map(|e| (e.name.clone(), e)).collect();
    let mut problems = Vec::new();
    for (name, shape) in &expected {
        match given.get(name) {
            None => problems.push(format!("{name}: missing")),
            Some(e) if &e.shape != shape => problems.push(format!("{name}: expected {shape:?}, found {:?}", e.shape)),
            Some(_) => {}
        }
    }
    for name in given.keys().filter(|n| !expected.contains_key(*n)) {
        problems.push(format!("{name}: not in network"));
    }
    if !problems.is_empty() {
        return Err(Error::shape(format!(
            "weights do not fit network: {}",
            problems.join("; ")
        )));
    }
    net.assign(|name, dst| {
        let e = given.remove(name).expect("checked above");
        dst.copy_from_slice(&e.data);
    });
    Ok(())
}

pub fn save_weights(net: &mut Network, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_weights(&network_entries(net))?)
}

pub fn load_weights(net: &mut Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let entries = decode_weights(&read_file(path)?).map_err(|e| match e {
        Error::Format(msg) => Error::format(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    apply_entries(net, entries)
}
