//! Versioned binary checkpoint of a network.
//!
//! ```text
//! magic    4 bytes "TDNN", version u32 LE (1)
//! input    3 x u32 LE (channels, height, width)
//! layers   u32 LE count, then per layer a tag byte and its fields:
//!   0 dense    units u32, weights, bias
//!   1 conv2d   filters u32, kernel u32, stride u32, weights, bias
//!   2 maxpool  size u32, stride u32
//!   3 relu
//!   4 dropout  keep_prob f64
//!   5 flatten
//! ```
//! Tensors are a u64 LE length followed by f64 LE values.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::layers::{Init, LayerSpec, Shape};
use super::{Network, TeacherError};

const MAGIC: &[u8; 4] = b"TDNN";
const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, t: &[f64]) {
    out.extend_from_slice(&(t.len() as u64).to_le_bytes());
    for v in t {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn to_bytes(net: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let s = net.input_shape();
    for d in [s.channels, s.height, s.width] {
        put_u32(&mut out, d);
    }
    put_u32(&mut out, net.layers().len());
    for layer in net.layers() {
        match layer.spec() {
            LayerSpec::Dense { units } => {
                out.push(0);
                put_u32(&mut out, units);
            }
            LayerSpec::Conv2d {
                filters,
                kernel,
                stride,
            } => {
                out.push(1);
                for v in [filters, kernel, stride] {
                    put_u32(&mut out, v);
                }
            }
            LayerSpec::MaxPool { size, stride } => {
                out.push(2);
                put_u32(&mut out, size);
                put_u32(&mut out, stride);
            }
            LayerSpec::Relu => out.push(3),
            LayerSpec::Dropout { keep_prob } => {
                out.push(4);
                out.extend_from_slice(&keep_prob.to_le_bytes());
            }
            LayerSpec::Flatten => out.push(5),
        }
        if let Some((w, b)) = layer.params() {
            put_tensor(&mut out, w);
            put_tensor(&mut out, b);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TeacherError> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| TeacherError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, TeacherError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize, TeacherError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64, TeacherError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor_into(&mut self, dst: &mut [f64]) -> Result<(), TeacherError> {
        let n = u64::from_le_bytes(self.take(8)?.try_into().unwrap()) as usize;
        if n != dst.len() {
            return Err(TeacherError::Checkpoint(format!(
                "tensor holds {n} values, layer expects {}",
                dst.len()
            )));
        }
        for v in dst.iter_mut() {
            *v = self.f64()?;
        }
        Ok(())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Network, TeacherError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(TeacherError::Checkpoint("not a network checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(TeacherError::Checkpoint(format!("unsupported version {version}")));
    }
    let input = Shape::new(r.u32()?, r.u32()?, r.u32()?);
    let n_layers = r.u32()?;
    // specs come first; a second pass fills the tensors in layer order
    let mut specs = Vec::with_capacity(n_layers);
    let mut tensor_at = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let spec = match r.u8()? {
            0 => LayerSpec::Dense { units: r.u32()? },
            1 => LayerSpec::Conv2d {
                filters: r.u32()?,
                kernel: r.u32()?,
                stride: r.u32()?,
            },
            2 => LayerSpec::MaxPool {
                size: r.u32()?,
                stride: r.u32()?,
            },
            3 => LayerSpec::Relu,
            4 => LayerSpec::Dropout { keep_prob: r.f64()? },
            5 => LayerSpec::Flatten,
            tag => return Err(TeacherError::Checkpoint(format!("unknown layer tag {tag}"))),
        };
        if matches!(spec, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. }) {
            tensor_at.push(Some(r.pos));
            for _ in 0..2 {
                let n = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
                r.take(
                    n.checked_mul(8)
                        .ok_or_else(|| TeacherError::Checkpoint("tensor too large".into()))?,
                )?;
            }
        } else {
            tensor_at.push(None);
        }
        specs.push(spec);
    }
    if r.pos != bytes.len() {
        return Err(TeacherError::Checkpoint("trailing bytes".into()));
    }
    let mut net = Network::build(input, &specs, Init::Zeros, 0)?;
    for (layer, at) in net.layers_mut().iter_mut().zip(tensor_at) {
        if let (Some(pos), Some((w, b))) = (at, layer.params_mut()) {
            let mut t = Reader { bytes, pos };
            t.tensor_into(w)?;
            t.tensor_into(b)?;
        }
    }
    Ok(net)
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<(), TeacherError> {
    let path = path.as_ref();
    fs::write(path, to_bytes(net)).map_err(|source| TeacherError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: impl AsRef<Path>) -> Result<Network, TeacherError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| TeacherError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_bytes(&bytes)
}

/// Hex SHA-256 of the checkpoint bytes; identifies a trained teacher.
pub fn fingerprint(net: &Network) -> String {
    hex(&Sha256::digest(to_bytes(net)))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::teacher::network::{connect4_mlp, mnist_cnn};

    #[test]
    fn round_trip_preserves_logits_bitwise() {
        for (shape, specs, init) in [connect4_mlp(), mnist_cnn()] {
            let net = Network::build(shape, &specs, init, 12).unwrap();
            let back = from_bytes(&to_bytes(&net)).unwrap();
            assert_eq!(back, net);
            let x = Matrix::from_vec(
                3,
                shape.size(),
                (0..3 * shape.size()).map(|i| (i % 7) as f64 / 7.0).collect(),
            );
            assert_eq!(back.forward(&x, false).unwrap(), net.forward(&x, false).unwrap());
            assert_eq!(fingerprint(&back), fingerprint(&net));
        }
    }

    #[test]
    fn file_round_trip() {
        let (shape, specs, init) = connect4_mlp();
        let net = Network::build(shape, &specs, init, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("teacher.bin");
        save(&net, &p).unwrap();
        assert_eq!(load(&p).unwrap(), net);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let (shape, specs, init) = connect4_mlp();
        let bytes = to_bytes(&Network::build(shape, &specs, init, 1).unwrap());
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
        assert!(from_bytes(b"XXXX").is_err());
    }

    #[test]
    fn fingerprint_tracks_weights() {
        let (shape, specs, init) = connect4_mlp();
        let a = Network::build(shape, &specs, init, 1).unwrap();
        let b = Network::build(shape, &specs, init, 2).unwrap();
        assert_ne!(fingerprint(&a), fingerprint(&b));
        assert_eq!(fingerprint(&a).len(), 64);
    }
}
