//! Binary checkpoint format.
//!
//! ```text
//! "SFCK" | version u16 | n_pairs u16 | n_pairs x (key_len u16, key, f64)
//!        | records until EOF: name_len u16, name, rank u8, extents u32[rank], f32[]
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::config::ModelConfig;
use super::transformer::Model;
use crate::error::{Error, Result};
use crate::tensor::{Param, ParamStore, Real, Tensor};

const MAGIC: &[u8; 4] = b"SFCK";
const VERSION: u16 = 1;

pub fn encode_checkpoint<T: Real>(model: &Model<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let pairs = model.config.to_pairs();
    out.extend_from_slice(&(pairs.len() as u16).to_le_bytes());
    for (k, v) in pairs {
        out.extend_from_slice(&(k.len() as u16).to_le_bytes());
        out.extend_from_slice(k.as_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    for p in &model.params.params {
        out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(p.value.shape.len() as u8);
        for &e in &p.value.shape {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &x in &p.value.data {
            out.extend_from_slice(&(x.f64() as f32).to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("name is not UTF-8".into()))
    }

    fn done(&self) -> bool {
        self.at == self.bytes.len()
    }
}

pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<Model<T>> {
    let mut c = Cursor { bytes, at: 0 };
    if c.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n_pairs = c.u16()?;
    let mut pairs = Vec::with_capacity(n_pairs as usize);
    for _ in 0..n_pairs {
        let k = c.string()?;
        pairs.push((k, c.f64()?));
    }
    let config = ModelConfig::from_pairs(&pairs)?;
    config
        .validate()
        .map_err(|e| Error::Checkpoint(format!("invalid stored config: {e}")))?;
    let mut store = ParamStore::new();
    while !c.done() {
        let name = c.string()?;
        let rank = c.u8()? as usize;
        let shape = (0..rank)
            .map(|_| c.u32().map(|e| e as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = c.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| T::of(f32::from_le_bytes(b.try_into().unwrap()) as f64))
            .collect();
        store.params.push(Param {
            name,
            grad: vec![T::zero(); n],
            value: Tensor { shape, data },
        });
    }
    Model::new(config, 0)?
        .with_params(store)
        .map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save_checkpoint<T: Real>(model: &Model<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<Model<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Loads a checkpoint and rejects it unless its architecture equals
/// `expected` (dropout may differ).
pub fn load_checkpoint_expecting<T: Real>(
    path: impl AsRef<Path>,
    expected: &ModelConfig,
) -> Result<Model<T>> {
    let model = load_checkpoint::<T>(path)?;
    if !model.config.same_architecture(expected) {
        return Err(Error::Checkpoint(format!(
            "checkpoint config {:?} does not match expected {:?}",
            model.config, expected
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact_for_f32() {
        let m = Model::<f32>::new(ModelConfig::tiny(8, 1), 4).unwrap();
        let bytes = encode_checkpoint(&m);
        assert_eq!(&bytes[..4], b"SFCK");
        let back: Model<f32> = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.config, m.config);
        for (a, b) in m.params.params.iter().zip(&back.params.params) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn rejects_corruption_and_mismatch() {
        let m = Model::<f32>::new(ModelConfig::tiny(8, 1), 4).unwrap();
        let bytes = encode_checkpoint(&m);
        assert!(decode_checkpoint::<f32>(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint::<f32>(&bad).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ck");
        save_checkpoint(&m, &p).unwrap();
        assert!(load_checkpoint_expecting::<f32>(&p, &ModelConfig::tiny(16, 1)).is_err());
        let mut with_dropout = ModelConfig::tiny(8, 1);
        with_dropout.dropout = 0.3;
        assert!(load_checkpoint_expecting::<f32>(&p, &with_dropout).is_ok());
    }
}
