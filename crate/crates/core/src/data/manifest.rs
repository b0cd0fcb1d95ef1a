use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::idx::{self, IdxArray, IdxData};
use super::setup::{Cause, DetectionSetup, Partition, SetupMeta, SetupSample};
use crate::artifact::{self, Stamp};
use crate::fingerprint::sha256_hex;
use crate::{Error, Real, Result, Tensor};

pub const MANIFEST_VERSION: u32 = 1;

/// On-disk description of a set-up; pixels live in a separate f64 IDX file
/// of shape `[N, C, H, W]` whose rows follow `samples`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupManifest {
    pub version: u32,
    pub cause: Cause,
    pub stamp: Stamp,
    pub meta: SetupMeta,
    pub image_shape: Vec<usize>,
    pub images_file: String,
    pub images_sha256: String,
    pub samples: Vec<ManifestSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSample {
    pub id: u64,
    pub source_id: u64,
    pub label: u8,
    pub partition: Partition,
}

/// `(manifest, images)` paths for a cause inside `dir`.
pub fn setup_paths(dir: &Path, cause: Cause) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{}.setup.json", cause.name())),
        dir.join(format!("{}.images.idx", cause.name())),
    )
}

pub fn save_setup(dir: &Path, setup: &DetectionSetup, fingerprint: &str) -> Result<SetupManifest> {
    let (json_path, idx_path) = setup_paths(dir, setup.cause);
    let shape = setup.samples[0].pixels.shape().to_vec();
    let mut data = Vec::with_capacity(setup.samples.len() * setup.samples[0].pixels.numel());
    for s in &setup.samples {
        if s.pixels.shape() != shape.as_slice() {
            return Err(Error::invalid(format!("{}: mixed image shapes", setup.cause)));
        }
        data.extend(s.pixels.data().iter().map(|&v| v as f64));
    }
    let mut dims = vec![setup.samples.len()];
    dims.extend(&shape);
    let bytes = idx::encode_idx(&IdxArray { dims, data: IdxData::F64(data) });
    artifact::write_bytes(&idx_path, &bytes)?;
    let manifest = SetupManifest {
        version: MANIFEST_VERSION,
        cause: setup.cause,
        stamp: Stamp {
            fingerprint: fingerprint.to_string(),
            model_checksum: setup.meta.model_checksum.clone(),
        },
        meta: setup.meta.clone(),
        image_shape: shape,
        images_file: idx_path.file_name().expect("file name").to_string_lossy().into_owned(),
        images_sha256: sha256_hex(&bytes),
        samples: setup
            .samples
            .iter()
            .map(|s| ManifestSample {
                id: s.id,
                source_id: s.source_id,
                label: s.label,
                partition: s.partition,
            })
            .collect(),
    };
    artifact::write_json(&json_path, &manifest)?;
    Ok(manifest)
}

/// Loads and re-validates a set-up, checking the image file hash.
pub fn load_setup(dir: &Path, cause: Cause) -> Result<(DetectionSetup, SetupManifest)> {
    let (json_path, _) = setup_paths(dir, cause);
    let manifest: SetupManifest = artifact::read_json(&json_path)?;
    if manifest.version != MANIFEST_VERSION || manifest.cause != cause {
        return Err(Error::parse(&json_path, "unexpected manifest version or cause"));
    }
    let idx_path = dir.join(&manifest.images_file);
    let bytes = artifact::read_bytes(&idx_path)?;
    let digest = sha256_hex(&bytes);
    if digest != manifest.images_sha256 {
        return Err(Error::ChecksumMismatch {
            what: idx_path.display().to_string(),
            expected: manifest.images_sha256.clone(),
            found: digest,
        });
    }
    let array = idx::parse_idx(&bytes, &idx_path)?;
    let mut expected_dims = vec![manifest.samples.len()];
    expected_dims.extend(&manifest.image_shape);
    if array.dims != expected_dims {
        return Err(Error::parse(&idx_path, format!("dims {:?}, manifest says {expected_dims:?}", array.dims)));
    }
    let values = array.to_unit_f64();
    let per = values.len() / manifest.samples.len().max(1);
    let samples = manifest
        .samples
        .iter()
        .zip(values.chunks(per.max(1)))
        .map(|(m, px)| {
            Ok(SetupSample {
                id: m.id,
                source_id: m.source_id,
                label: m.label,
                partition: m.partition,
                pixels: Tensor::new(manifest.image_shape.clone(), px.iter().map(|&v| v as Real).collect())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let setup = DetectionSetup {
        cause,
        samples,
        meta: SetupMeta { ..manifest.meta.clone() },
    };
    setup.validate()?;
    Ok((setup, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> DetectionSetup {
        let mk = |n: usize, base: u64| -> Vec<(u64, Tensor)> {
            (0..n)
                .map(|i| (base + i as u64, Tensor::full(&[1, 2, 2], i as Real / 10.0 + 0.01)))
                .collect()
        };
        let meta = SetupMeta {
            seed: 4,
            model_checksum: "abcd".into(),
            sigma_star: Some(0.25),
            noise_rate: Some(0.5),
            noise_clipped: Some(true),
            attack: None,
            attempted: 10,
            positives: 5,
            negatives: 5,
        };
        DetectionSetup::balanced(Cause::Noisy, mk(5, 0), mk(5, 100), meta).unwrap()
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = setup();
        let written = save_setup(dir.path(), &s, "fp").unwrap();
        let (back, manifest) = load_setup(dir.path(), Cause::Noisy).unwrap();
        assert_eq!(back, s);
        assert_eq!(manifest, written);
        assert_eq!(manifest.stamp.model_checksum, "abcd");
        assert_eq!(manifest.meta.noise_clipped, Some(true));
    }

    #[test]
    fn tampered_images_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_setup(dir.path(), &setup(), "fp").unwrap();
        let (_, idx_path) = setup_paths(dir.path(), Cause::Noisy);
        let mut bytes = std::fs::read(&idx_path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        std::fs::write(&idx_path, bytes).unwrap();
        assert!(matches!(load_setup(dir.path(), Cause::Noisy), Err(Error::ChecksumMismatch { .. })));
    }

    #[test]
    fn missing_manifest_is_named() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_setup(dir.path(), Cause::Cw), Err(Error::MissingArtifact(_))));
    }
}
