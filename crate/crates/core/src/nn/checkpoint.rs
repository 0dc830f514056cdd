//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "MMKGCKPT"
//! version  u32
//! meta_len u32, meta: UTF-8 JSON object of string → string
//! count    u32
//! per tensor:
//!   name_len u32, name UTF-8
//!   ndim u32, dims u64 × ndim
//!   payload f32 × prod(dims), row-major
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use ndarray::Array2;

use super::layers::Parameterized;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MMKGCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub version: u32,
    pub metadata: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, StoredTensor>,
}

impl Checkpoint {
    pub fn from_model(model: &impl Parameterized, metadata: BTreeMap<String, String>) -> Self {
        let tensors = model
            .params()
            .into_iter()
            .map(|(name, t)| {
                let (r, c) = t.shape();
                let data = t.value().iter().map(|&x| x as f32).collect();
                (
                    name,
                    StoredTensor {
                        shape: vec![r, c],
                        data,
                    },
                )
            })
            .collect();
        Self {
            version: VERSION,
            metadata,
            tensors,
        }
    }

    /// Overwrite every parameter of `model` from this checkpoint. Names and
    /// shapes must match exactly.
    pub fn load_into(&self, model: &mut impl Parameterized) -> Result<()> {
        for (name, t) in model.params_mut() {
            let stored = self
                .tensors
                .get(&name)
                .ok_or_else(|| Error::data(format!("checkpoint lacks tensor `{name}`")))?;
            let (r, c) = t.shape();
            if stored.shape != [r, c] {
                return Err(Error::shape(format!(
                    "tensor `{name}`: checkpoint shape {:?}, model shape {:?}",
                    stored.shape,
                    (r, c)
                )));
            }
            let values = Array2::from_shape_vec((r, c), stored.data.iter().map(|&x| x as f64).collect())
                .map_err(|e| Error::data(e.to_string()))?;
            *t.value_mut() = values;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        let meta = serde_json::to_vec(&self.metadata).expect("string map serializes");
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        read_exact(&mut cur, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::data("not a checkpoint file (bad magic)"));
        }
        let version = read_u32(&mut cur)?;
        if version != VERSION {
            return Err(Error::data(format!("unsupported checkpoint version {version}")));
        }
        let meta_len = read_u32(&mut cur)? as usize;
        let meta = read_vec(&mut cur, meta_len)?;
        let metadata: BTreeMap<String, String> = serde_json::from_slice(&meta)?;
        let count = read_u32(&mut cur)?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = read_u32(&mut cur)? as usize;
            let name = String::from_utf8(read_vec(&mut cur, name_len)?)
                .map_err(|_| Error::data("tensor name is not UTF-8"))?;
            let ndim = read_u32(&mut cur)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u64(&mut cur)? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = read_vec(&mut cur, n * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.insert(name, StoredTensor { shape, data });
        }
        if (cur.position() as usize) != bytes.len() {
            return Err(Error::data("trailing bytes after checkpoint"));
        }
        Ok(Self {
            version,
            metadata,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn read_exact(cur: &mut Cursor<&[u8]>, buf: &mut [u8]) -> Result<()> {
    cur.read_exact(buf)
        .map_err(|_| Error::data("truncated checkpoint"))
}

fn read_vec(cur: &mut Cursor<&[u8]>, n: usize) -> Result<Vec<u8>> {
    let remaining = cur.get_ref().len() - cur.position() as usize;
    if n > remaining {
        return Err(Error::data("truncated checkpoint"));
    }
    let mut buf = vec![0u8; n];
    read_exact(cur, &mut buf)?;
    Ok(buf)
}

fn read_u32(cur: &mut Cursor<&[u8]>) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(cur, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(cur: &mut Cursor<&[u8]>) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(cur, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::DenseLayer;

    #[test]
    fn round_trip_through_bytes() {
        let mut rng = crate::rng::rng_from_seed(5);
        let layer = DenseLayer::new(3, 2, &mut rng);
        let mut meta = BTreeMap::new();
        meta.insert("scorer".to_string(), "ikrl_like".to_string());
        let ck = Checkpoint::from_model(&layer, meta);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);

        let mut other = DenseLayer::zeros(3, 2);
        back.load_into(&mut other).unwrap();
        for ((_, a), (_, b)) in layer.params().into_iter().zip(other.params()) {
            for (x, y) in a.value().iter().zip(b.value()) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let layer = DenseLayer::zeros(3, 2);
        let ck = Checkpoint::from_model(&layer, BTreeMap::new());
        let mut wrong = DenseLayer::zeros(4, 2);
        assert!(matches!(ck.load_into(&mut wrong), Err(Error::Shape(_))));
    }

    #[test]
    fn truncated_and_bad_magic_rejected() {
        let ck = Checkpoint::from_model(&DenseLayer::zeros(2, 2), BTreeMap::new());
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }
}
