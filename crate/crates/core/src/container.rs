//! Binary tensor container shared by ViT weight files (`.vitw`) and
//! autoencoder model files (`.aenc`).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "PXTENSOR"
//! version    u32      1
//! kind       4 bytes  e.g. "VITW", "AENC"
//! meta_count u32
//!   key_len u16, key utf-8, tag u8 (0 = i64, 1 = f64), value 8 bytes
//! tensor_count u32
//!   name_len u16, name utf-8, ndim u8, dims u64 × ndim, offset u64
//! data       f64 × Σ numel, offsets in bytes from the start of this section
//! checksum   32 bytes SHA-256 of everything above
//! ```
//!
//! The checksum is verified before any field is parsed, so a truncated or
//! corrupted file always reports [`Error::Checksum`].

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PXTENSOR";
pub const VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetaValue {
    Int(i64),
    Real(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            name: name.into(),
            shape,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub kind: [u8; 4],
    pub meta: BTreeMap<String, MetaValue>,
    pub tensors: Vec<Tensor>,
}

impl TensorFile {
    pub fn new(kind: [u8; 4]) -> Self {
        Self {
            kind,
            meta: BTreeMap::new(),
            tensors: Vec::new(),
        }
    }

    pub fn set_int(&mut self, key: &str, v: i64) {
        self.meta.insert(key.to_string(), MetaValue::Int(v));
    }

    pub fn set_real(&mut self, key: &str, v: f64) {
        self.meta.insert(key.to_string(), MetaValue::Real(v));
    }

    pub fn int(&self, key: &str) -> Result<i64> {
        match self.meta.get(key) {
            Some(MetaValue::Int(v)) => Ok(*v),
            Some(MetaValue::Real(_)) => Err(Error::Format(format!("metadata `{key}` is not an integer"))),
            None => Err(Error::Format(format!("missing metadata `{key}`"))),
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let v = self.int(key)?;
        usize::try_from(v).map_err(|_| Error::Format(format!("metadata `{key}` = {v} is negative")))
    }

    pub fn real(&self, key: &str) -> Result<f64> {
        match self.meta.get(key) {
            Some(MetaValue::Real(v)) => Ok(*v),
            Some(MetaValue::Int(v)) => Ok(*v as f64),
            None => Err(Error::Format(format!("missing metadata `{key}`"))),
        }
    }

    pub fn push(&mut self, tensor: Tensor) {
        self.tensors.push(tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("missing tensor `{name}`")))
    }

    /// Fetches a tensor and checks its shape.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<&Tensor> {
        let t = self.get(name)?;
        if t.shape != shape {
            return Err(Error::ShapeMismatch {
                tensor: name.to_string(),
                expected: shape.to_vec(),
                actual: t.shape.clone(),
            });
        }
        Ok(t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.kind);
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            out.extend_from_slice(&(k.len() as u16).to_le_bytes());
            out.extend_from_slice(k.as_bytes());
            match v {
                MetaValue::Int(i) => {
                    out.push(0);
                    out.extend_from_slice(&i.to_le_bytes());
                }
                MetaValue::Real(r) => {
                    out.push(1);
                    out.extend_from_slice(&r.to_le_bytes());
                }
            }
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        let mut offset = 0u64;
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&offset.to_le_bytes());
            offset += 8 * t.data.len() as u64;
        }
        out.reserve(offset as usize + CHECKSUM_LEN);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < CHECKSUM_LEN {
            return Err(Error::Checksum { path: path.to_path_buf() });
        }
        let (body, stored) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != stored {
            return Err(Error::Checksum { path: path.to_path_buf() });
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported container version {version}")));
        }
        let mut kind = [0u8; 4];
        kind.copy_from_slice(r.take(4)?);
        let mut file = TensorFile::new(kind);
        for _ in 0..r.u32()? {
            let key = r.string()?;
            let tag = r.take(1)?[0];
            let raw: [u8; 8] = r.take(8)?.try_into().unwrap();
            let v = match tag {
                0 => MetaValue::Int(i64::from_le_bytes(raw)),
                1 => MetaValue::Real(f64::from_le_bytes(raw)),
                t => return Err(Error::Format(format!("unknown metadata tag {t}"))),
            };
            file.meta.insert(key, v);
        }
        let count = r.u32()? as usize;
        let mut table = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string()?;
            let ndim = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let offset = r.u64()? as usize;
            table.push((name, shape, offset));
        }
        let data = &body[r.pos..];
        for (name, shape, offset) in table {
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let end = numel
                .and_then(|n| n.checked_mul(8))
                .and_then(|b| b.checked_add(offset))
                .filter(|&e| e <= data.len())
                .ok_or_else(|| Error::Format(format!("tensor `{name}` extends past data section")))?;
            let values = data[offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            file.tensors.push(Tensor { name, shape, data: values });
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("unexpected end of header".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| Error::Format("non-utf8 name".into()))
    }
}
