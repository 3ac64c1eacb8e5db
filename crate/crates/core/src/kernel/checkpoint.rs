//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   "MLTCKPT\0"
//! version      u32       FORMAT_VERSION
//! config_hash  32 bytes  SHA-256 of the run configuration
//! meta_len     u32       length of the metadata block
//! meta         meta_len  UTF-8 JSON describing the network
//! count        u32       number of tensors
//! per tensor:
//!   name_len   u32
//!   name       name_len  UTF-8
//!   dtype      u8        1 = f32, 2 = f64
//!   ndim       u8
//!   dims       ndim x u64
//!   values     product(dims) x dtype width, row-major
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{DType, KernelError, ParamStore, Real, Tensor};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MLTCKPT\0";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated checkpoint")]
    Truncated,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint is missing parameter `{0}`")]
    MissingParameter(String),
    #[error("checkpoint has unexpected parameter `{0}`")]
    UnexpectedParameter(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTensor {
    pub name: String,
    pub dtype: DType,
    pub value: Tensor<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: [u8; 32],
    pub metadata: String,
    pub tensors: Vec<StoredTensor>,
}

impl Checkpoint {
    pub fn from_store<T: Real>(
        store: &ParamStore<T>,
        config_hash: [u8; 32],
        metadata: String,
    ) -> Self {
        let tensors = store
            .iter()
            .map(|p| StoredTensor {
                name: p.name().to_string(),
                dtype: T::DTYPE,
                value: p.value.cast(),
            })
            .collect();
        Self {
            config_hash,
            metadata,
            tensors,
        }
    }

    /// Copies every stored tensor into the same-named parameter of `store`.
    /// The sets of names must match exactly and shapes must agree.
    pub fn load_into<T: Real>(&self, store: &mut ParamStore<T>) -> Result<(), CheckpointError> {
        for t in &self.tensors {
            if store.get(&t.name).is_none() {
                return Err(CheckpointError::UnexpectedParameter(t.name.clone()));
            }
        }
        for p in store.iter() {
            if !self.tensors.iter().any(|t| t.name == p.name()) {
                return Err(CheckpointError::MissingParameter(p.name().to_string()));
            }
        }
        for t in &self.tensors {
            store.assign(&t.name, t.value.cast())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.config_hash);
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        out.extend_from_slice(self.metadata.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.dtype.tag());
            out.push(t.value.shape().len() as u8);
            for &d in t.value.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.value.data() {
                match t.dtype {
                    DType::F32 => (v as f32).write_le(&mut out),
                    DType::F64 => v.write_le(&mut out),
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let config_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let meta_len = r.u32()? as usize;
        let metadata = String::from_utf8(r.take(meta_len)?.to_vec())
            .map_err(|_| CheckpointError::Corrupt("metadata is not UTF-8".into()))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| CheckpointError::Corrupt("tensor name is not UTF-8".into()))?;
            let tag = r.take(1)?[0];
            let dtype = DType::from_tag(tag)
                .ok_or_else(|| CheckpointError::Corrupt(format!("unknown dtype tag {tag}")))?;
            let ndim = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| CheckpointError::Corrupt(format!("shape overflow for `{name}`")))?;
            let raw = r.take(
                n.checked_mul(dtype.width())
                    .ok_or(CheckpointError::Truncated)?,
            )?;
            let values: Vec<f64> = match dtype {
                DType::F32 => raw
                    .chunks_exact(4)
                    .map(|c| f32::read_le(c) as f64)
                    .collect(),
                DType::F64 => raw.chunks_exact(8).map(f64::read_le).collect(),
            };
            let value = Tensor::new(shape, values)
                .map_err(|e| CheckpointError::Corrupt(format!("`{name}`: {e}")))?;
            tensors.push(StoredTensor { name, dtype, value });
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Corrupt("trailing bytes".into()));
        }
        Ok(Self {
            config_hash,
            metadata,
            tensors,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

pub fn write_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_store() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.insert(
            "a.weight",
            Tensor::new(vec![2, 3], vec![0.5, -1.25, 3.0, 1e-7, 0.0, -2.0]).unwrap(),
        )
        .unwrap();
        s.insert("a.bias", Tensor::from_vec(vec![0.125, 7.5]))
            .unwrap();
        s
    }

    #[test]
    fn round_trip_preserves_values_and_bytes() {
        let store = sample_store();
        let ckpt = Checkpoint::from_store(&store, [7; 32], "{\"kind\":\"test\"}".into());
        let bytes = ckpt.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_bytes(), bytes);

        let mut fresh = ParamStore::<f32>::new();
        fresh.insert("a.weight", Tensor::zeros(&[2, 3])).unwrap();
        fresh.insert("a.bias", Tensor::zeros(&[2])).unwrap();
        back.load_into(&mut fresh).unwrap();
        assert_eq!(
            fresh.get("a.weight").unwrap().value,
            store.get("a.weight").unwrap().value
        );
    }

    #[test]
    fn rejects_corruption() {
        let ckpt = Checkpoint::from_store(&sample_store(), [0; 32], String::new());
        let bytes = ckpt.to_bytes();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 1]),
            Err(CheckpointError::Truncated)
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(CheckpointError::BadMagic)
        ));
        let mut bad = bytes;
        bad[8] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(CheckpointError::UnsupportedVersion(9))
        ));
    }

    #[test]
    fn load_requires_matching_names() {
        let ckpt = Checkpoint::from_store(&sample_store(), [0; 32], String::new());
        let mut other = ParamStore::<f32>::new();
        other.insert("a.weight", Tensor::zeros(&[2, 3])).unwrap();
        assert!(matches!(
            ckpt.load_into(&mut other),
            Err(CheckpointError::UnexpectedParameter(_))
        ));
    }
}
