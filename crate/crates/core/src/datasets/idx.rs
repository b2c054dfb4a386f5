//! MNIST IDX reader.
//!
//! Layout: big-endian `u32` magic, one big-endian `u32` per dimension, then
//! an unsigned-byte payload. Images use magic `0x00000803` (three dims:
//! count, rows, cols) and labels `0x00000801` (one dim: count).

use std::fs;
use std::path::Path;

use super::{DatasetError, LabeledDataset};
use crate::linalg::Matrix;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

const MNIST_CLASSES: usize = 10;

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32, DatasetError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DatasetError::Truncated {
            what: what.to_string(),
            expected: offset + 4,
            found: bytes.len(),
        })
}

/// Parses an image file into `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8]), DatasetError> {
    let what = "images";
    let magic = read_u32(bytes, 0, what)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DatasetError::BadMagic {
            what: what.into(),
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = read_u32(bytes, 4, what)? as usize;
    let rows = read_u32(bytes, 8, what)? as usize;
    let cols = read_u32(bytes, 12, what)? as usize;
    let expected = 16 + n * rows * cols;
    if bytes.len() < expected {
        return Err(DatasetError::Truncated {
            what: what.into(),
            expected,
            found: bytes.len(),
        });
    }
    Ok((n, rows, cols, &bytes[16..expected]))
}

/// Parses a label file into its raw label bytes.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8], DatasetError> {
    let what = "labels";
    let magic = read_u32(bytes, 0, what)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DatasetError::BadMagic {
            what: what.into(),
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let n = read_u32(bytes, 4, what)? as usize;
    let expected = 8 + n;
    if bytes.len() < expected {
        return Err(DatasetError::Truncated {
            what: what.into(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(&bytes[8..expected])
}

fn read_file(path: &Path) -> Result<Vec<u8>, DatasetError> {
    fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn mnist_from_bytes(images: &[u8], labels: &[u8]) -> Result<LabeledDataset, DatasetError> {
    let (n, rows, cols, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != n {
        return Err(DatasetError::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    let features: Vec<f64> = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
    LabeledDataset::new(
        Matrix::from_vec(n, rows * cols, features),
        labels,
        MNIST_CLASSES,
        LabeledDataset::numbered_classes(MNIST_CLASSES),
    )
}

/// Loads an image/label file pair; pixels are scaled to `[0, 1]`.
pub fn load_mnist_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<LabeledDataset, DatasetError> {
    let images = read_file(images_path.as_ref())?;
    let labels = read_file(labels_path.as_ref())?;
    mnist_from_bytes(&images, &labels)
}
