//! IDX container (big-endian), as used by the MNIST distribution.
//!
//! Header: two zero bytes, a type code, the number of dimensions, then one
//! big-endian `u32` per dimension. Supported payload types are `0x08`
//! (unsigned byte), `0x0D` (f32) and `0x0E` (f64). Gzip-compressed files are
//! detected by their magic bytes and inflated transparently.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::{Error, Result};

pub const TYPE_U8: u8 = 0x08;
pub const TYPE_F32: u8 = 0x0D;
pub const TYPE_F64: u8 = 0x0E;

#[derive(Debug, Clone, PartialEq)]
pub enum IdxData {
    U8(Vec<u8>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: IdxData,
}

impl IdxArray {
    /// Payload as f64, scaling unsigned bytes by 1/255.
    pub fn to_unit_f64(&self) -> Vec<f64> {
        match &self.data {
            IdxData::U8(v) => v.iter().map(|&b| b as f64 / 255.0).collect(),
            IdxData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            IdxData::F64(v) => v.clone(),
        }
    }
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let raw = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::parse(path, format!("gzip: {e}")))?;
        out
    } else {
        raw
    };
    parse_idx(&bytes, path)
}

pub fn parse_idx(bytes: &[u8], origin: &Path) -> Result<IdxArray> {
    if bytes.is_empty() {
        return Err(Error::parse(origin, "empty IDX file"));
    }
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::parse(origin, "bad IDX magic number"));
    }
    let kind = bytes[2];
    let ndim = bytes[3] as usize;
    let width = match kind {
        TYPE_U8 => 1,
        TYPE_F32 => 4,
        TYPE_F64 => 8,
        other => return Err(Error::parse(origin, format!("unsupported IDX type code {other:#04x}"))),
    };
    if ndim == 0 {
        return Err(Error::parse(origin, "IDX file declares zero dimensions"));
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::parse(origin, "truncated IDX header"));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let record: usize = dims[1..].iter().product::<usize>() * width;
    let payload = &bytes[header..];
    let expected = dims[0] * record;
    if payload.len() < expected {
        let found = payload.len().checked_div(record).unwrap_or(0);
        return Err(Error::parse(
            origin,
            format!("truncated: header declares {} records, found {found}", dims[0]),
        ));
    }
    if payload.len() > expected {
        return Err(Error::parse(origin, "trailing bytes after IDX payload"));
    }
    let data = match kind {
        TYPE_U8 => IdxData::U8(payload.to_vec()),
        TYPE_F32 => IdxData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_be_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        _ => IdxData::F64(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_be_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    Ok(IdxArray { dims, data })
}

pub fn encode_idx(array: &IdxArray) -> Vec<u8> {
    let (kind, width) = match array.data {
        IdxData::U8(_) => (TYPE_U8, 1),
        IdxData::F32(_) => (TYPE_F32, 4),
        IdxData::F64(_) => (TYPE_F64, 8),
    };
    let n: usize = array.dims.iter().product();
    let mut out = Vec::with_capacity(4 + 4 * array.dims.len() + n * width);
    out.extend_from_slice(&[0, 0, kind, array.dims.len() as u8]);
    for d in &array.dims {
        out.extend_from_slice(&(*d as u32).to_be_bytes());
    }
    match &array.data {
        IdxData::U8(v) => out.extend_from_slice(v),
        IdxData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_be_bytes())),
        IdxData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_be_bytes())),
    }
    out
}

pub fn write_idx(path: &Path, array: &IdxArray) -> Result<()> {
    std::fs::write(path, encode_idx(array)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(kind: u8, dims: &[u32]) -> Vec<u8> {
        let mut b = vec![0, 0, kind, dims.len() as u8];
        for d in dims {
            b.extend_from_slice(&d.to_be_bytes());
        }
        b
    }

    #[test]
    fn parses_unsigned_byte_images() {
        let mut b = header(TYPE_U8, &[2, 2, 2]);
        b.extend_from_slice(&[0, 255, 51, 102, 1, 2, 3, 4]);
        let a = parse_idx(&b, Path::new("t")).unwrap();
        assert_eq!(a.dims, vec![2, 2, 2]);
        assert_eq!(a.to_unit_f64()[..4], [0.0, 1.0, 0.2, 0.4]);
    }

    #[test]
    fn empty_file_error_names_the_file() {
        let err = parse_idx(&[], Path::new("digits.idx")).unwrap_err();
        assert!(err.to_string().contains("digits.idx"), "{err}");
    }

    #[test]
    fn short_payload_is_reported_as_truncation() {
        let mut b = header(TYPE_U8, &[5, 2, 2]);
        b.extend_from_slice(&[7; 16]);
        let err = parse_idx(&b, Path::new("t")).unwrap_err().to_string();
        assert!(err.contains("truncated") && err.contains("5 records, found 4"), "{err}");
    }

    #[test]
    fn bad_magic_and_type_are_rejected() {
        assert!(parse_idx(&[1, 0, 8, 1, 0, 0, 0, 0], Path::new("t")).is_err());
        assert!(parse_idx(&header(0x0C, &[0]), Path::new("t")).is_err());
    }

    #[test]
    fn f64_payload_is_bit_exact() {
        let a = IdxArray {
            dims: vec![3],
            data: IdxData::F64(vec![0.1, 1.0 / 3.0, f64::MIN_POSITIVE]),
        };
        assert_eq!(parse_idx(&encode_idx(&a), Path::new("t")).unwrap(), a);
    }

    #[test]
    fn gzip_is_transparent() {
        use flate2::{write::GzEncoder, Compression};
        use std::io::Write;
        let a = IdxArray {
            dims: vec![2, 1],
            data: IdxData::U8(vec![9, 10]),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.gz");
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&encode_idx(&a)).unwrap();
        std::fs::write(&path, enc.finish().unwrap()).unwrap();
        assert_eq!(read_idx(&path).unwrap(), a);
    }
}
