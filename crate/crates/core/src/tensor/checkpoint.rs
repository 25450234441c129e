//! Tensor checkpoint: a `meta` text header plus `tensors.bin`, the
//! little-endian `f64` payload of every tensor in declaration order.
//!
//! ```text
//! seed=7
//! epoch=500
//! tensor online.0 32 64
//! tensor online.1 64 64
//! ```

use std::fs;
use std::path::Path;

use super::DenseMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    /// Header fields in file order.
    pub fields: Vec<(String, String)>,
    pub tensors: Vec<(String, DenseMatrix)>,
}

impl Checkpoint {
    pub fn field(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&DenseMatrix> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut meta = String::new();
        for (k, v) in &self.fields {
            meta.push_str(&format!("{k}={v}\n"));
        }
        let mut blob = Vec::new();
        for (name, t) in &self.tensors {
            meta.push_str(&format!("tensor {name} {} {}\n", t.rows(), t.cols()));
            for v in t.as_slice() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let p = dir.join("meta");
        fs::write(&p, meta).map_err(|e| Error::io(&p, e))?;
        let p = dir.join("tensors.bin");
        fs::write(&p, blob).map_err(|e| Error::io(&p, e))
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta_path = dir.join("meta");
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let mut fields = Vec::new();
        let mut shapes = Vec::new();
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            let l = line.trim();
            if let Some(rest) = l.strip_prefix("tensor ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let parsed = match parts.as_slice() {
                    [name, r, c] => r.parse::<usize>().ok().zip(c.parse::<usize>().ok()).map(|s| (name.to_string(), s)),
                    _ => None,
                };
                let (name, (r, c)) =
                    parsed.ok_or_else(|| Error::format(&meta_path, offset, format!("bad tensor line {l:?}")))?;
                shapes.push((name, r, c));
            } else if let Some((k, v)) = l.split_once('=') {
                fields.push((k.to_string(), v.to_string()));
            } else if !l.is_empty() {
                return Err(Error::format(&meta_path, offset, format!("unrecognized line {l:?}")));
            }
            offset += line.len() as u64;
        }

        let blob_path = dir.join("tensors.bin");
        let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        let mut pos = 0usize;
        let mut tensors = Vec::with_capacity(shapes.len());
        for (name, r, c) in shapes {
            let bytes = r * c * 8;
            if pos + bytes > blob.len() {
                return Err(Error::format(&blob_path, pos as u64, format!("truncated tensor {name}")));
            }
            let data = blob[pos..pos + bytes]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            let t = DenseMatrix::from_vec(r, c, data)
                .map_err(|e| Error::format(&blob_path, pos as u64, format!("{name}: {e}")))?;
            tensors.push((name, t));
            pos += bytes;
        }
        if pos != blob.len() {
            return Err(Error::format(&blob_path, pos as u64, "trailing bytes after last tensor"));
        }
        Ok(Self { fields, tensors })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_read_preserves_bits() {
        let ck = Checkpoint {
            fields: vec![("seed".into(), "3".into()), ("epoch".into(), "9".into())],
            tensors: vec![
                ("a".into(), DenseMatrix::from_rows(&[[0.1, -2.5e-300], [3.0, 1.0 / 3.0]])),
                ("b".into(), DenseMatrix::zeros(0, 4)),
                ("c".into(), DenseMatrix::from_rows(&[[7.0]])),
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        ck.write(dir.path()).unwrap();
        let back = Checkpoint::read(dir.path()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.field("epoch"), Some("9"));
        assert_eq!(back.tensor("c").unwrap().as_slice(), &[7.0]);
    }

    #[test]
    fn trailing_bytes_rejected() {
        let ck = Checkpoint {
            fields: vec![],
            tensors: vec![("a".into(), DenseMatrix::zeros(1, 1))],
        };
        let dir = tempfile::tempdir().unwrap();
        ck.write(dir.path()).unwrap();
        let p = dir.path().join("tensors.bin");
        let mut b = fs::read(&p).unwrap();
        b.push(1);
        fs::write(&p, b).unwrap();
        assert!(Checkpoint::read(dir.path()).is_err());
    }
}
