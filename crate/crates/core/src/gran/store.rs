use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::head::DetectorHead;
use crate::artifact::{self, Stamp};
use crate::data::{Cause, Partition};
use crate::{Error, Result};

pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Gran,
    Lid,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 2] = [DetectorKind::Gran, DetectorKind::Lid];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Gran => "gran",
            DetectorKind::Lid => "lid",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            DetectorKind::Gran => "GraN",
            DetectorKind::Lid => "LID",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown detector {s:?} (expected gran or lid)")))
    }
}

/// Features of every sample of one set-up for one detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCache {
    pub version: u32,
    pub stamp: Stamp,
    pub detector: DetectorKind,
    pub cause: Cause,
    /// Smoothing used by GraN features.
    pub sigma: Option<f64>,
    /// Neighbour count used by LID features.
    pub k: Option<usize>,
    pub feature_names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub id: u64,
    pub label: u8,
    pub partition: Partition,
    pub values: Vec<f64>,
}

impl FeatureCache {
    /// Feature vectors and labels of one partition, in sample order.
    pub fn split(&self, p: Partition) -> (Vec<Vec<f64>>, Vec<u8>) {
        self.rows
            .iter()
            .filter(|r| r.partition == p)
            .map(|r| (r.values.clone(), r.label))
            .unzip()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        artifact::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: FeatureCache = artifact::read_json(path)?;
        if c.version != STORE_VERSION {
            return Err(Error::parse(path, format!("unsupported feature cache version {}", c.version)));
        }
        Ok(c)
    }
}

/// A fitted head bound to the model it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadFile {
    pub version: u32,
    pub stamp: Stamp,
    pub detector: DetectorKind,
    pub cause: Cause,
    pub feature_names: Vec<String>,
    pub head: DetectorHead,
}

impl HeadFile {
    /// Scores `features` after checking they come from the same model.
    pub fn score(&self, features: &[f64], model_checksum: &str) -> Result<f64> {
        self.stamp.expect_model("detector head", model_checksum)?;
        self.head.score(features)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        artifact::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let h: HeadFile = artifact::read_json(path)?;
        if h.version != STORE_VERSION || h.head.feature_len() != h.feature_names.len() {
            return Err(Error::parse(path, "inconsistent detector head file"));
        }
        Ok(h)
    }
}

pub fn feature_cache_path(dir: &Path, detector: DetectorKind, cause: Cause) -> PathBuf {
    dir.join(format!("{}-{}.features.json", detector.name(), cause.name()))
}

pub fn head_path(dir: &Path, detector: DetectorKind, cause: Cause) -> PathBuf {
    dir.join(format!("{}-{}.head.json", detector.name(), cause.name()))
}
