//! Reading and writing pipeline artifacts.
//!
//! JSON artifacts carry the config fingerprint of the run that produced them
//! and the checksum of the model they were computed with, so stale inputs are
//! refused instead of silently mixed.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Provenance embedded in every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub fingerprint: String,
    pub model_checksum: String,
}

impl Stamp {
    /// Fails with [`Error::ChecksumMismatch`] if `found` was produced by a
    /// different model.
    pub fn expect_model(&self, what: &str, found: &str) -> Result<()> {
        if self.model_checksum != found {
            return Err(Error::ChecksumMismatch {
                what: what.to_string(),
                expected: self.model_checksum.clone(),
                found: found.to_string(),
            });
        }
        Ok(())
    }
}

/// Reads a file, mapping "not found" to [`Error::MissingArtifact`].
pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::parse(path, e.to_string()))
}

/// Writes pretty JSON with a trailing newline, via a temporary file so a
/// crash never leaves a truncated artifact behind.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("absent.json");
        match read_json::<Stamp>(&p) {
            Err(Error::MissingArtifact(q)) => assert_eq!(q, p),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_round_trip_and_checksum_guard() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/stamp.json");
        let s = Stamp { fingerprint: "f".into(), model_checksum: "abc".into() };
        write_json(&p, &s).unwrap();
        let back: Stamp = read_json(&p).unwrap();
        assert_eq!(back, s);
        assert!(back.expect_model("features", "abc").is_ok());
        assert!(matches!(back.expect_model("features", "xyz"), Err(Error::ChecksumMismatch { .. })));
    }
}
