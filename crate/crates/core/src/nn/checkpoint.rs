//! Model checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "GRANCKPT"
//! version  u32      1
//! arch     u32 length + UTF-8 TOML architecture
//! count    u32      number of parameter tensors
//! per tensor:
//!   name   u32 length + UTF-8
//!   ndim   u32, then ndim x u64 dimensions
//!   data   prod(dims) x f64
//! ```

use std::path::Path;

use super::arch::Architecture;
use super::model::{Model, Parameter};
use crate::{Error, Real, Result, Tensor};

pub const MAGIC: &[u8; 8] = b"GRANCKPT";
pub const VERSION: u32 = 1;

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + model.param_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_str(&mut out, &model.architecture().to_toml());
    out.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for p in model.params() {
        put_str(&mut out, &p.name);
        out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
        for d in p.value.shape() {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&(*v as f64).to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0, origin };
    if r.take(8)? != MAGIC {
        return Err(Error::parse(origin, "not a model checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::parse(origin, format!("unsupported checkpoint version {version}")));
    }
    let arch_text = r.string()?;
    let arch = Architecture::from_toml(&arch_text, origin)?;
    let count = r.u32()? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let raw = r.take(numel.checked_mul(8).ok_or_else(|| Error::parse(origin, "tensor too large"))?)?;
        let data: Vec<Real> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()) as Real)
            .collect();
        params.push(Parameter {
            name,
            value: Tensor::new(shape, data).map_err(|e| Error::parse(origin, e.to_string()))?,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::parse(origin, "trailing bytes after last tensor"));
    }
    let mut model = Model::zeros(arch)?;
    model
        .set_params(params)
        .map_err(|e| Error::parse(origin, e.to_string()))?;
    Ok(model)
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, path)
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::parse(self.origin, "truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::parse(self.origin, "invalid UTF-8"))
    }
}
