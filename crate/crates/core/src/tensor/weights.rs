//! `RDW1` weight container.
//!
//! Layout: the 4-byte magic `RDW1`, then records until end of file. Each record
//! is a little-endian `u32` name length, the UTF-8 name, four little-endian
//! `u32` dims, and `dims.product()` little-endian `f32` values.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Shape, Tensor};

pub const WEIGHT_MAGIC: &[u8; 4] = b"RDW1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    entries: BTreeMap<String, Tensor<f32>>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<f32>) {
        self.entries.insert(name.into(), tensor);
    }

    /// Stores a vector as a `(len, 1, 1, 1)` tensor.
    pub fn insert_vec(&mut self, name: impl Into<String>, values: Vec<f32>) {
        let len = values.len();
        self.insert(name, Tensor::new([len, 1, 1, 1], values).expect("non-empty vector"));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.entries.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = WEIGHT_MAGIC.to_vec();
        for (name, t) in &self.entries {
            out.extend((name.len() as u32).to_le_bytes());
            out.extend(name.as_bytes());
            for d in t.shape() {
                out.extend((d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend(v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != WEIGHT_MAGIC {
            return Err(Error::Data("weight file does not start with RDW1".into()));
        }
        let mut store = Self::new();
        while cur.pos < bytes.len() {
            let name_len = cur.u32()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| Error::Data(format!("weight name at byte {} is not UTF-8", cur.pos)))?
                .to_owned();
            let mut shape: Shape = [0; 4];
            for d in &mut shape {
                *d = cur.u32()? as usize;
            }
            let count: usize = shape.iter().product();
            let payload = cur.take(count * 4)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Tensor::new(shape, data)
                .map_err(|e| Error::Data(format!("weight {name}: {e}")))?;
            store.entries.insert(name, t);
        }
        Ok(store)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Starts a lookup session that collects every missing name.
    pub fn loader(&self) -> WeightLoader<'_> {
        WeightLoader {
            store: self,
            missing: Vec::new(),
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Data(format!("weight file truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Fetches named tensors with shape checks. Missing names are collected so
/// that [`WeightLoader::finish`] can report all of them at once.
pub struct WeightLoader<'a> {
    store: &'a WeightStore,
    missing: Vec<String>,
}

impl WeightLoader<'_> {
    pub fn tensor<T: Scalar>(&mut self, name: &str, shape: Shape) -> Result<Tensor<T>> {
        match self.store.get(name) {
            Some(t) if t.shape() == shape => Ok(t.cast()),
            Some(t) => Err(Error::Contract(format!(
                "weight {name} has shape {:?}, expected {shape:?}",
                t.shape()
            ))),
            None => {
                self.missing.push(name.to_owned());
                Ok(Tensor::zeros(shape))
            }
        }
    }

    pub fn vector<T: Scalar>(&mut self, name: &str, len: usize) -> Result<Vec<T>> {
        Ok(self.tensor(name, [len, 1, 1, 1])?.into_data())
    }

    pub fn finish(self) -> Result<()> {
        if self.missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingWeights(self.missing))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_bit_exact() {
        let mut s = WeightStore::new();
        s.insert("a", Tensor::new([1, 1, 1, 2], vec![1.0, -2.5]).unwrap());
        let b = s.to_bytes();
        let mut want = b"RDW1".to_vec();
        want.extend([1, 0, 0, 0, b'a']);
        for d in [1u32, 1, 1, 2] {
            want.extend(d.to_le_bytes());
        }
        want.extend(1.0f32.to_le_bytes());
        want.extend((-2.5f32).to_le_bytes());
        assert_eq!(b, want);
        assert_eq!(WeightStore::from_bytes(&b).unwrap(), s);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(WeightStore::from_bytes(b"RDW2").is_err());
        let mut s = WeightStore::new();
        s.insert_vec("bias", vec![1.0, 2.0, 3.0]);
        let b = s.to_bytes();
        assert!(WeightStore::from_bytes(&b[..b.len() - 1]).is_err());
    }

    #[test]
    fn loader_lists_every_missing_name() {
        let mut s = WeightStore::new();
        s.insert_vec("present", vec![0.0; 2]);
        let mut l = s.loader();
        l.vector::<f32>("present", 2).unwrap();
        l.vector::<f32>("gone.a", 2).unwrap();
        l.tensor::<f64>("gone.b", [1, 1, 3, 3]).unwrap();
        match l.finish() {
            Err(Error::MissingWeights(names)) => assert_eq!(names, ["gone.a", "gone.b"]),
            other => panic!("{other:?}"),
        }
        let mut l = s.loader();
        assert!(matches!(l.vector::<f32>("present", 3), Err(Error::Contract(_))));
    }
}
