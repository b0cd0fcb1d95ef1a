use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gran_core::data::{setup_paths, Cause};
use gran_core::gran::{feature_cache_path, head_path, DetectorKind};

use crate::config::usage;

/// Where every artifact of a run lives inside the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub out: PathBuf,
    pub model: PathBuf,
}

impl Layout {
    pub fn new(out: &Path, model: Option<&Path>) -> Self {
        Layout {
            out: out.to_path_buf(),
            model: model.map_or_else(|| out.join("model.ckpt"), Path::to_path_buf),
        }
    }

    pub fn model_meta(&self) -> PathBuf {
        self.model.with_extension("json")
    }

    pub fn setups(&self) -> PathBuf {
        self.out.join("setups")
    }

    pub fn setup_manifest(&self, cause: Cause) -> PathBuf {
        setup_paths(&self.setups(), cause).0
    }

    pub fn features(&self, detector: DetectorKind, cause: Cause) -> PathBuf {
        feature_cache_path(&self.out.join("features"), detector, cause)
    }

    pub fn lid_reference(&self) -> PathBuf {
        self.out.join("features").join("lid-reference.json")
    }

    pub fn head(&self, detector: DetectorKind, cause: Cause) -> PathBuf {
        head_path(&self.out.join("heads"), detector, cause)
    }

    pub fn eval(&self, detector: DetectorKind, cause: Cause) -> PathBuf {
        self.out.join("eval").join(format!("{}-{}.eval.json", detector.name(), cause.name()))
    }

    pub fn runtime(&self, detector: DetectorKind) -> PathBuf {
        self.out.join("eval").join(format!("{}.runtime.json", detector.name()))
    }

    pub fn report_csv(&self) -> PathBuf {
        self.out.join("report.csv")
    }

    pub fn report_txt(&self) -> PathBuf {
        self.out.join("report.txt")
    }

    pub fn runtime_csv(&self) -> PathBuf {
        self.out.join("runtime.csv")
    }

    /// Takes the output directory's lock for the lifetime of the guard.
    pub fn lock(&self) -> Result<LockGuard> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(".gran.lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(LockGuard { path, _file: f })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(usage(format!(
                "{} is locked by another invocation; delete {} if no other run is active",
                self.out.display(),
                path.display()
            ))
            .into()),
            Err(e) => Err(e).with_context(|| format!("creating {}", path.display())),
        }
    }
}

pub struct LockGuard {
    path: PathBuf,
    _file: File,
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_lock_is_refused_until_released() {
        let dir = tempfile::tempdir().unwrap();
        let layout = Layout::new(dir.path(), None);
        let guard = layout.lock().unwrap();
        assert!(layout.lock().is_err());
        drop(guard);
        assert!(layout.lock().is_ok());
    }
}
