//! Flat binary container of named f64 tensors with shape headers plus a
//! versioned JSON manifest. Round-trips bit-exactly.

use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"CARECKP\x01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorStore {
    /// Arbitrary JSON manifest; the trainer stores model dims, variant,
    /// controller state and training progress here.
    pub manifest: String,
    tensors: Vec<(String, Vec<usize>, Vec<f64>)>,
}

impl TensorStore {
    pub fn new(manifest: String) -> Self {
        TensorStore {
            manifest,
            tensors: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        let name = name.into();
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape/data mismatch for tensor {name}"
        );
        self.tensors.push((name, shape, data));
    }

    pub fn get(&self, name: &str) -> Option<(&[usize], &[f64])> {
        self.tensors
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, s, d)| (s.as_slice(), d.as_slice()))
    }

    pub fn require(&self, name: &str) -> Result<(&[usize], &[f64])> {
        self.get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _, _)| n.as_str())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
        let manifest = self.manifest.as_bytes();
        w.write_all(&(manifest.len() as u64).to_le_bytes())
            .map_err(io)?;
        w.write_all(manifest).map_err(io)?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())
            .map_err(io)?;
        for (name, shape, data) in &self.tensors {
            let nb = name.as_bytes();
            w.write_all(&(nb.len() as u32).to_le_bytes()).map_err(io)?;
            w.write_all(nb).map_err(io)?;
            w.write_all(&(shape.len() as u32).to_le_bytes())
                .map_err(io)?;
            for &d in shape {
                w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
            }
            for &v in data {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let io = |e| Error::io(path, e);
        let bad = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));

        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = read_u32(&mut r, path)?;
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported format version {version}")));
        }
        let mlen = read_u64(&mut r, path)? as usize;
        let mut mbytes = vec![0u8; mlen];
        r.read_exact(&mut mbytes).map_err(io)?;
        let manifest = String::from_utf8(mbytes).map_err(|_| bad("manifest is not UTF-8"))?;

        let count = read_u32(&mut r, path)? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let nlen = read_u32(&mut r, path)? as usize;
            let mut nbytes = vec![0u8; nlen];
            r.read_exact(&mut nbytes).map_err(io)?;
            let name = String::from_utf8(nbytes).map_err(|_| bad("tensor name is not UTF-8"))?;
            let ndim = read_u32(&mut r, path)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u64(&mut r, path)? as usize);
            }
            let len: usize = shape.iter().product();
            let mut data = Vec::with_capacity(len);
            let mut buf = [0u8; 8];
            for _ in 0..len {
                r.read_exact(&mut buf).map_err(io)?;
                data.push(f64::from_le_bytes(buf));
            }
            tensors.push((name, shape, data));
        }
        Ok(TensorStore { manifest, tensors })
    }
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read, path: &Path) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut store = TensorStore::new(r#"{"version":1}"#.to_string());
        store.insert("a.weight", vec![2, 3], vec![1.5, -2.25, 0.1, 4.0, 5.0, -0.0]);
        store.insert("a.bias", vec![2], vec![f64::MIN_POSITIVE, 1e300]);
        store.save(&path).unwrap();
        let loaded = TensorStore::load(&path).unwrap();
        assert_eq!(loaded.manifest, store.manifest);
        for name in ["a.weight", "a.bias"] {
            let (s0, d0) = store.get(name).unwrap();
            let (s1, d1) = loaded.get(name).unwrap();
            assert_eq!(s0, s1);
            let bits0: Vec<u64> = d0.iter().map(|v| v.to_bits()).collect();
            let bits1: Vec<u64> = d1.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits0, bits1);
        }
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(TensorStore::load(&path).is_err());
    }
}
