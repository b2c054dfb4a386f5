use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::checkpoint::hex;
use super::TeacherError;
use crate::linalg::Matrix;

/// Teacher logits, one row per instance in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMatrix {
    values: Matrix,
}

impl LogitMatrix {
    /// Rejects non-finite entries and zero-width rows.
    pub fn new(values: Matrix) -> Result<LogitMatrix, TeacherError> {
        if values.cols() == 0 {
            return Err(TeacherError::InvalidSpec("logits need at least one class".into()));
        }
        if let Some(pos) = values.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(TeacherError::NonFiniteLogit {
                row: pos / values.cols(),
                col: pos % values.cols(),
            });
        }
        Ok(LogitMatrix { values })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn into_matrix(self) -> Matrix {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn n_classes(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    /// Hex SHA-256 over the little-endian bytes of every value.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.values.rows() as u64).to_le_bytes());
        h.update((self.values.cols() as u64).to_le_bytes());
        for v in self.values.as_slice() {
            h.update(v.to_le_bytes());
        }
        hex(&h.finalize())
    }

    /// Comma-separated rows without a header; values are written with 17
    /// significant digits so they parse back exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.values.iter_rows() {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{v:.16e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<LogitMatrix, TeacherError> {
        let mut data = Vec::new();
        let mut cols = None;
        let mut rows = 0;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let before = data.len();
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|e| TeacherError::Parse {
                    line: i + 1,
                    message: format!("{field:?}: {e}"),
                })?;
                data.push(v);
            }
            let width = data.len() - before;
            match cols {
                None => cols = Some(width),
                Some(c) if c != width => {
                    return Err(TeacherError::Parse {
                        line: i + 1,
                        message: format!("expected {c} values, found {width}"),
                    })
                }
                _ => {}
            }
            rows += 1;
        }
        LogitMatrix::new(Matrix::from_vec(rows, cols.unwrap_or(0), data))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), TeacherError> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|source| TeacherError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<LogitMatrix, TeacherError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| TeacherError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        LogitMatrix::from_csv(&text)
    }
}
