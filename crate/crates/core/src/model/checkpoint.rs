//! Binary tensor archive used for checkpoints.
//!
//! Layout (little endian): magic `FGANCKPT`, `u32` version, `u8` element
//! width (4 or 8), `u64` metadata length and UTF-8 JSON metadata, `u64`
//! tensor count, then per tensor `u32` name length, name, `u32` rank,
//! `u64` dims and the raw elements in row-major order.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::nn::{Module, Real, Slot};

const MAGIC: &[u8; 8] = b"FGANCKPT";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Archive<F> {
    pub meta: serde_json::Value,
    tensors: Vec<(String, ArrayD<F>)>,
    index: HashMap<String, usize>,
}

impl<F: Real> Archive<F> {
    pub fn new(meta: serde_json::Value) -> Self {
        Self {
            meta,
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: ArrayD<F>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate tensor {name}")));
        }
        self.index.insert(name.clone(), self.tensors.len());
        self.tensors.push((name, tensor.as_standard_layout().into_owned()));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<F>> {
        self.index.get(name).map(|&i| &self.tensors[i].1)
    }

    pub fn require(&self, name: &str) -> Result<&ArrayD<F>> {
        self.get(name)
            .ok_or_else(|| Error::Shape(format!("checkpoint has no tensor {name}")))
    }

    /// Stores every parameter and buffer of `module` under `prefix`.
    pub fn push_module<M: Module<F> + ?Sized>(&mut self, prefix: &str, module: &mut M) -> Result<()> {
        let mut items = Vec::new();
        module.visit(prefix, &mut |name, slot| {
            let v = match slot {
                Slot::Param { value, .. } => value.to_owned(),
                Slot::Buffer(b) => b.to_owned(),
            };
            items.push((name.to_string(), v));
        });
        items.into_iter().try_for_each(|(n, v)| self.push(n, v))
    }

    /// Overwrites every parameter and buffer of `module` from `prefix`.
    pub fn restore_module<M: Module<F> + ?Sized>(&self, prefix: &str, module: &mut M) -> Result<()> {
        let mut err = None;
        module.visit(prefix, &mut |name, slot| {
            let mut dst = match slot {
                Slot::Param { value, .. } => value,
                Slot::Buffer(b) => b,
            };
            match self.get(name) {
                Some(src) if src.shape() == dst.shape() => dst.assign(src),
                Some(src) if err.is_none() => {
                    err = Some(format!("tensor {name}: stored {:?}, expected {:?}", src.shape(), dst.shape()))
                }
                None if err.is_none() => err = Some(format!("checkpoint has no tensor {name}")),
                _ => {}
            }
        });
        err.map_or(Ok(()), |e| Err(Error::Shape(e)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.meta).expect("json value serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
        out.push(F::BYTES);
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.iter() {
                v.put_le(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err("not a checkpoint (bad magic)".into());
        }
        let version = r.u32()?;
        if version != ARCHIVE_VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let width = r.take(1)?[0];
        if width != F::BYTES {
            return Err(format!("element width {width} bytes, expected {}", F::BYTES));
        }
        let meta_len = r.u64()? as usize;
        let meta = serde_json::from_slice(r.take(meta_len)?).map_err(|e| format!("metadata: {e}"))?;
        let mut archive = Self::new(meta);
        let count = r.u64()?;
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| "tensor name is not UTF-8")?;
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
            let elems: usize = dims.iter().product();
            let w = F::BYTES as usize;
            let raw = r.take(elems.checked_mul(w).ok_or("tensor too large")?)?;
            let data = raw.chunks_exact(w).map(F::get_le).collect();
            let t = ArrayD::from_shape_vec(IxDyn(&dims), data).map_err(|e| e.to_string())?;
            archive.push(name, t).map_err(|e| e.to_string())?;
        }
        if r.pos != bytes.len() {
            return Err("trailing bytes after last tensor".into());
        }
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|m| Error::format(path, m))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated checkpoint")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
