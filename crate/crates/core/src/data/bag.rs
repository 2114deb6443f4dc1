//! Bag file format: one slide's instance-embedding matrix.
//!
//! Layout (little-endian): magic `MILB`, version `u16 = 1`, flags
//! `u16 = 0`, `n: u32`, `d: u32`, then `n * d` IEEE-754 `f32` values
//! row-major. The file length must equal `16 + 4 * n * d` exactly.

use std::path::Path;

use crate::nn::Matrix;
use crate::{Error, Result};

pub const BAG_MAGIC: [u8; 4] = *b"MILB";
pub const BAG_VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

/// One slide's `N x d` matrix of instance features.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingBag {
    pub slide_id: String,
    data: Matrix,
}

impl EmbeddingBag {
    /// Requires at least one instance, at least one feature, and finite
    /// values throughout.
    pub fn new(slide_id: impl Into<String>, data: Matrix) -> Result<Self> {
        if data.rows() == 0 {
            return Err(Error::Format("bag must hold at least one instance".into()));
        }
        if data.cols() == 0 {
            return Err(Error::Format("bag embedding dimension must be >= 1".into()));
        }
        if !data.all_finite() {
            return Err(Error::Format("bag contains non-finite values".into()));
        }
        Ok(EmbeddingBag {
            slide_id: slide_id.into(),
            data,
        })
    }

    pub fn n(&self) -> usize {
        self.data.rows()
    }

    pub fn d(&self) -> usize {
        self.data.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }
}

/// Serialize a bag. The product `write_bag` then [`read_bag`] reproduces
/// the matrix bit for bit.
pub fn write_bag(bag: &EmbeddingBag, path: &Path) -> Result<()> {
    let n = bag.n();
    let d = bag.d();
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * n * d);
    buf.extend_from_slice(&BAG_MAGIC);
    buf.extend_from_slice(&BAG_VERSION.to_le_bytes());
    buf.extend_from_slice(&0u16.to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    for v in bag.matrix().data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Read a bag file. The slide id defaults to the file stem; manifest-driven
/// loaders overwrite it with the record's id.
pub fn read_bag(path: &Path) -> Result<EmbeddingBag> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "{}: file shorter than the {HEADER_LEN}-byte header",
            path.display()
        )));
    }
    if bytes[0..4] != BAG_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}, expected \"MILB\"",
            path.display(),
            &bytes[0..4]
        )));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != BAG_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported bag version {version}",
            path.display()
        )));
    }
    let flags = u16::from_le_bytes([bytes[6], bytes[7]]);
    if flags != 0 {
        return Err(Error::Format(format!(
            "{}: unsupported flags {flags:#06x}",
            path.display()
        )));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as u64;
    let d = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as u64;
    if n == 0 || d == 0 {
        return Err(Error::Format(format!(
            "{}: header declares an empty {n}x{d} bag",
            path.display()
        )));
    }
    let count = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(HEADER_LEN as u64))
        .filter(|&v| v <= usize::MAX as u64)
        .ok_or_else(|| {
            Error::Format(format!("{}: n*d overflows ({n} x {d})", path.display()))
        })?;
    if bytes.len() as u64 != count {
        return Err(Error::Format(format!(
            "{}: payload truncated or oversized: expected {count} bytes for a {n}x{d} bag, found {}",
            path.display(),
            bytes.len()
        )));
    }
    let values: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let data = Matrix::from_vec(n as usize, d as usize, values)?;
    let slide_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    EmbeddingBag::new(slide_id, data)
}
