use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gran_core::attacks::{AttackConfig, AttackKind};
use gran_core::data::Cause;
use gran_core::fingerprint::fingerprint;
use gran_core::nn::TrainConfig;
use serde::{Deserialize, Serialize};

/// Resolved run configuration: config file values overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// `synthetic`, a dataset name under the data root, or a directory.
    pub dataset: Option<String>,
    /// Built-in architecture name or a TOML file; defaults to the dataset name.
    pub architecture: Option<String>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub setups: SetupSection,
    #[serde(default)]
    pub attacks: AttackSection,
    #[serde(default)]
    pub detector: DetectorSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub lr_decay: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            momentum: d.momentum,
            batch_size: d.batch_size,
            lr_decay: d.lr_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SetupSection {
    pub causes: Vec<Cause>,
    /// Cap on pre-test images per cause; absent means all.
    pub max_images: BTreeMap<Cause, usize>,
}

impl Default for SetupSection {
    fn default() -> Self {
        SetupSection { causes: Cause::ALL.to_vec(), max_images: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub epsilon: f64,
    /// BIM step; `epsilon / 10` when absent.
    pub alpha: Option<f64>,
    pub iterations: usize,
    pub jsma_theta: f64,
    pub jsma_gamma: f64,
    pub jsma_pairs: bool,
    pub cw_kappa: f64,
    pub cw_binary_steps: usize,
    pub cw_iterations: usize,
    pub cw_learning_rate: f64,
    pub cw_initial_const: f64,
}

impl Default for AttackSection {
    fn default() -> Self {
        let d = AttackConfig::new(AttackKind::Fgsm);
        AttackSection {
            epsilon: d.epsilon,
            alpha: None,
            iterations: d.iterations,
            jsma_theta: d.jsma_theta,
            jsma_gamma: d.jsma_gamma,
            jsma_pairs: d.jsma_pairs,
            cw_kappa: d.cw_kappa,
            cw_binary_steps: d.cw_binary_steps,
            cw_iterations: d.cw_iterations,
            cw_learning_rate: d.cw_learning_rate,
            cw_initial_const: d.cw_initial_const,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub sigma: f64,
    pub k: usize,
    /// Images timed per detector by `evaluate`.
    pub timing_samples: usize,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection { sigma: gran_core::gran::DEFAULT_SIGMA, k: gran_core::lid::DEFAULT_K, timing_samples: 200 }
    }
}

/// Flag values that override the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dataset: Option<String>,
    pub sigma: Option<f64>,
    pub epsilon: Option<f64>,
}

/// Fingerprints of the configuration each stage depends on. Each stage's
/// hash covers its upstream stages, so changing e.g. the smoothing only
/// invalidates features and later artifacts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprints {
    pub train: String,
    pub setups: String,
    pub features: String,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg: RunConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", p.display())))?
            }
            None => toml::from_str("").expect("empty config parses"),
        };
        if let Some(s) = overrides.seed {
            cfg.seed = Some(s);
        }
        if let Some(d) = &overrides.dataset {
            cfg.dataset = Some(d.clone());
        }
        if let Some(s) = overrides.sigma {
            cfg.detector.sigma = s;
        }
        if let Some(e) = overrides.epsilon {
            cfg.attacks.epsilon = e;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            bail!(usage("a seed is required (config `seed` or --seed)"));
        }
        if self.dataset.is_none() {
            bail!(usage("a dataset is required (config `dataset` or --dataset)"));
        }
        if !(self.detector.sigma >= 0.0 && self.detector.sigma.is_finite()) {
            bail!(usage("sigma must be a finite non-negative number"));
        }
        self.attack(AttackKind::Fgsm).validate().map_err(|e| usage(e.to_string()))?;
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated")
    }

    pub fn dataset(&self) -> &str {
        self.dataset.as_deref().expect("validated")
    }

    pub fn architecture(&self) -> &str {
        self.architecture.as_deref().unwrap_or_else(|| self.dataset())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            learning_rate: self.train.learning_rate,
            momentum: self.train.momentum,
            batch_size: self.train.batch_size,
            lr_decay: self.train.lr_decay,
            seed,
        }
    }

    pub fn attack(&self, kind: AttackKind) -> AttackConfig {
        let a = &self.attacks;
        AttackConfig {
            kind,
            epsilon: a.epsilon,
            alpha: a.alpha.unwrap_or(a.epsilon / 10.0),
            iterations: a.iterations,
            jsma_theta: a.jsma_theta,
            jsma_gamma: a.jsma_gamma,
            jsma_pairs: a.jsma_pairs,
            cw_kappa: a.cw_kappa,
            cw_binary_steps: a.cw_binary_steps,
            cw_iterations: a.cw_iterations,
            cw_learning_rate: a.cw_learning_rate,
            cw_initial_const: a.cw_initial_const,
        }
    }

    pub fn fingerprints(&self) -> Result<Fingerprints> {
        let train = fingerprint(&(self.seed, &self.dataset, self.architecture(), &self.train))?;
        let setups = fingerprint(&(&train, &self.setups, &self.attacks))?;
        let features = fingerprint(&(&setups, self.detector.sigma, self.detector.k))?;
        Ok(Fingerprints { train, setups, features })
    }
}

/// Error with a process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub fn usage(message: impl Into<String>) -> CliError {
    CliError { code: 1, message: message.into() }
}

pub fn stale(message: impl Into<String>) -> CliError {
    CliError { code: 2, message: message.into() }
}

/// Directory of a named dataset under the data root, or `dataset` itself
/// when it is an existing path.
pub fn dataset_dir(dataset: &str, data_root: &Path) -> PathBuf {
    let p = PathBuf::from(dataset);
    if p.is_dir() {
        p
    } else {
        data_root.join(dataset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> RunConfig {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn shipped_configs_parse() {
        for f in ["mnist", "synthetic"] {
            let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("configs/{f}.toml"));
            RunConfig::load(Some(&path), &Overrides::default()).unwrap();
        }
    }

    #[test]
    fn flags_win_over_file_values() {
        let cfg = parse("seed = 1\ndataset = \"mnist\"\n[detector]\nsigma = 0.4\n");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, toml::to_string(&cfg).unwrap()).unwrap();
        let o = Overrides { seed: Some(9), sigma: Some(0.0), ..Default::default() };
        let merged = RunConfig::load(Some(&p), &o).unwrap();
        assert_eq!(merged.seed(), 9);
        assert_eq!(merged.detector.sigma, 0.0);
    }

    #[test]
    fn seed_is_mandatory() {
        let err = RunConfig::load(None, &Overrides { dataset: Some("mnist".into()), ..Default::default() }).unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn downstream_fingerprints_follow_upstream_changes() {
        let a = parse("seed = 1\ndataset = \"mnist\"\n");
        let mut b = a.clone();
        b.detector.sigma = 0.0;
        let (fa, fb) = (a.fingerprints().unwrap(), b.fingerprints().unwrap());
        assert_eq!(fa.train, fb.train);
        assert_eq!(fa.setups, fb.setups);
        assert_ne!(fa.features, fb.features);
        let mut c = a.clone();
        c.seed = Some(2);
        let fc = c.fingerprints().unwrap();
        assert_ne!(fa.train, fc.train);
        assert_ne!(fa.features, fc.features);
    }

    #[test]
    fn alpha_defaults_to_a_tenth_of_epsilon() {
        let cfg = parse("seed = 1\ndataset = \"mnist\"\n[attacks]\nepsilon = 0.2\n");
        assert!((cfg.attack(AttackKind::BimA).alpha - 0.02).abs() < 1e-15);
    }
}
