//! Flat binary cache of an encoded dataset.
//!
//! ```text
//! magic      4 bytes  "TDDS"
//! version    u32 LE   (1)
//! n          u64 LE   instances
//! d          u64 LE   features
//! n_classes  u32 LE   (<= 256)
//! features   n*d f32 LE, row-major
//! labels     n bytes
//! names      n_classes x (u16 LE length + UTF-8 bytes)
//! ```
//!
//! Features are stored as `f32`, so a cached MNIST set is not bit-identical
//! to one decoded straight from the IDX files.

use std::fs;
use std::path::Path;

use super::{DatasetError, LabeledDataset};
use crate::linalg::Matrix;

pub const CACHE_MAGIC: &[u8; 4] = b"TDDS";
pub const CACHE_VERSION: u32 = 1;

pub fn write_cache(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    if ds.n_classes() > 256 {
        return Err(DatasetError::Invalid("cache stores labels as bytes".into()));
    }
    let (n, d) = (ds.len(), ds.n_features());
    let mut out = Vec::with_capacity(28 + n * d * 4 + n);
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(d as u64).to_le_bytes());
    out.extend_from_slice(&(ds.n_classes() as u32).to_le_bytes());
    for &v in ds.features().as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.extend(ds.labels().iter().map(|&l| l as u8));
    for name in ds.class_names() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    fs::write(path, out).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], DatasetError> {
        let end = self.pos + len;
        let s = self.bytes.get(self.pos..end).ok_or(DatasetError::Truncated {
            what: "dataset cache".into(),
            expected: end,
            found: self.bytes.len(),
        })?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DatasetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DatasetError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<LabeledDataset, DatasetError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    let magic = c.take(4)?;
    if magic != CACHE_MAGIC {
        return Err(DatasetError::BadMagic {
            what: "dataset cache".into(),
            expected: u32::from_be_bytes(*CACHE_MAGIC),
            found: u32::from_be_bytes(magic.try_into().unwrap()),
        });
    }
    let version = c.u32()?;
    if version != CACHE_VERSION {
        return Err(DatasetError::Invalid(format!("unsupported cache version {version}")));
    }
    let n = c.u64()? as usize;
    let d = c.u64()? as usize;
    let n_classes = c.u32()? as usize;
    let raw = c.take(n * d * 4)?;
    let features: Vec<f64> = raw
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
        .collect();
    let labels: Vec<usize> = c.take(n)?.iter().map(|&b| usize::from(b)).collect();
    let mut names = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        let len = u16::from_le_bytes(c.take(2)?.try_into().unwrap()) as usize;
        let s = std::str::from_utf8(c.take(len)?).map_err(|e| DatasetError::Invalid(format!("class name: {e}")))?;
        names.push(s.to_string());
    }
    LabeledDataset::new(Matrix::from_vec(n, d, features), labels, n_classes, names)
}
