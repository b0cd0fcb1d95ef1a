use std::path::PathBuf;

use anyhow::{bail, Context as _, Result};
use gran_core::artifact::{self, Stamp};
use gran_core::data::{
    build_adversarial_setup, build_noisy_setup, build_wrong_setup, load_dataset_dir, load_setup, save_setup,
    synthetic, Cause, Dataset, DetectionSetup, SetupOptions,
};
use gran_core::eval::{
    detector_resources, evaluate_head, fit_head, gran_feature_cache, lid_feature_cache, measure_runtime, EvalReport,
    EvalRow, RuntimeReport, RuntimeRow,
};
use gran_core::fingerprint::derive_seed;
use gran_core::gran::{DetectorKind, FeatureCache, HeadFile};
use gran_core::lid::LidReference;
use gran_core::nn::{checkpoint, train, Architecture, Model, TrainReport};
use gran_core::Tensor;
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{dataset_dir, stale, usage, Fingerprints, RunConfig};
use crate::layout::Layout;

/// Everything a stage needs.
pub struct Pipeline {
    pub config: RunConfig,
    pub fingerprints: Fingerprints,
    pub layout: Layout,
    pub data_root: PathBuf,
    pub causes: Vec<Cause>,
    pub detectors: Vec<DetectorKind>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelMeta {
    stamp: Stamp,
    architecture: String,
    parameter_tensors: usize,
    parameters: usize,
    report: TrainReport,
}

#[derive(Debug, Serialize, Deserialize)]
struct EvalFile {
    stamp: Stamp,
    row: EvalRow,
}

#[derive(Debug, Serialize, Deserialize)]
struct RuntimeFile {
    stamp: Stamp,
    row: RuntimeRow,
}

fn expect_fingerprint(what: &str, path: &std::path::Path, found: &str, expected: &str) -> Result<()> {
    if found != expected {
        bail!(stale(format!(
            "{what} at {} was produced under config fingerprint {found}, but the current config gives {expected}; \
             rerun the stage that writes it",
            path.display()
        )));
    }
    Ok(())
}

impl Pipeline {
    fn dataset(&self) -> Result<Dataset> {
        let name = self.config.dataset();
        if name == "synthetic" {
            return Ok(synthetic::dataset(derive_seed(self.config.seed(), "data")));
        }
        let dir = dataset_dir(name, &self.data_root);
        if !dir.is_dir() {
            bail!(gran_core::Error::MissingArtifact(dir));
        }
        Ok(load_dataset_dir(&dir, name)?)
    }

    /// Loads the checkpoint and checks it was trained under this config.
    fn model(&self) -> Result<Model> {
        let model = checkpoint::load(&self.layout.model)?;
        let meta_path = self.layout.model_meta();
        let meta: ModelMeta = artifact::read_json(&meta_path)?;
        expect_fingerprint("model", &meta_path, &meta.stamp.fingerprint, &self.fingerprints.train)?;
        meta.stamp.expect_model("model checkpoint", &model.checksum())?;
        Ok(model)
    }

    fn setup(&self, model: &Model, cause: Cause) -> Result<DetectionSetup> {
        let (setup, manifest) = load_setup(&self.layout.setups(), cause)?;
        let path = self.layout.setup_manifest(cause);
        expect_fingerprint("set-up", &path, &manifest.stamp.fingerprint, &self.fingerprints.setups)?;
        manifest.stamp.expect_model(&path.display().to_string(), &model.checksum())?;
        Ok(setup)
    }

    fn features(&self, model: &Model, detector: DetectorKind, cause: Cause) -> Result<FeatureCache> {
        let path = self.layout.features(detector, cause);
        let cache = FeatureCache::load(&path)?;
        expect_fingerprint("feature cache", &path, &cache.stamp.fingerprint, &self.fingerprints.features)?;
        cache.stamp.expect_model(&path.display().to_string(), &model.checksum())?;
        Ok(cache)
    }

    fn stamp(&self, fingerprint: &str, model: &Model) -> Stamp {
        Stamp { fingerprint: fingerprint.to_string(), model_checksum: model.checksum() }
    }

    pub fn train(&self) -> Result<()> {
        let data = self.dataset()?;
        let arch = Architecture::resolve(self.config.architecture())?;
        let seed = derive_seed(self.config.seed(), "train");
        let mut model = Model::new(arch, seed)?;
        let report = train(&mut model, &data.train, Some(&data.test), &self.config.train_config(seed))?;
        info!(
            "train accuracy {:.4}, test accuracy {:.4}",
            report.train_accuracy,
            report.test_accuracy.unwrap_or(f64::NAN)
        );
        checkpoint::save(&model, &self.layout.model)?;
        let meta = ModelMeta {
            stamp: self.stamp(&self.fingerprints.train, &model),
            architecture: model.architecture().name.clone(),
            parameter_tensors: model.param_tensor_count(),
            parameters: model.param_count(),
            report,
        };
        artifact::write_json(&self.layout.model_meta(), &meta)?;
        println!("{}", self.layout.model.display());
        Ok(())
    }

    /// Builds and saves the set-ups for `causes`.
    pub fn build_setups(&self, causes: &[Cause]) -> Result<()> {
        let model = self.model()?;
        let data = self.dataset()?;
        for &cause in causes {
            let opts = SetupOptions {
                seed: derive_seed(self.config.seed(), &format!("setup/{}", cause.name())),
                max_images: self.config.setups.max_images.get(&cause).copied(),
            };
            let setup = match cause.attack() {
                Some(kind) => build_adversarial_setup(&model, &data.test, &self.config.attack(kind), &opts),
                None if cause == Cause::Wrong => build_wrong_setup(&model, &data.test, &opts),
                None => build_noisy_setup(&model, &data.test, &opts),
            }
            .with_context(|| format!("building the {cause} set-up"))?;
            save_setup(&self.layout.setups(), &setup, &self.fingerprints.setups)?;
            println!(
                "{cause}: {} samples ({} train / {} test)",
                setup.samples.len(),
                setup.train().count(),
                setup.test().count()
            );
        }
        Ok(())
    }

    pub fn attack(&self) -> Result<()> {
        let causes: Vec<Cause> = self.causes.iter().copied().filter(|c| c.attack().is_some()).collect();
        if causes.is_empty() {
            bail!(usage("`attack` builds adversarial set-ups only; pass --setup with fgsm, bim_a, bim_b, jsma or cw"));
        }
        self.build_setups(&causes)
    }

    fn lid_reference(&self, model: &Model) -> Result<LidReference> {
        let path = self.layout.lid_reference();
        match LidReference::load(&path, &model.checksum()) {
            Ok(r) if r.stamp.fingerprint == self.fingerprints.features => return Ok(r),
            Ok(_) | Err(gran_core::Error::MissingArtifact(_)) | Err(gran_core::Error::ChecksumMismatch { .. }) => {}
            Err(e) => return Err(e.into()),
        }
        let data = self.dataset()?;
        let seed = derive_seed(self.config.seed(), "lid");
        let r = LidReference::build(model, &data.train, self.config.detector.k, seed, &self.fingerprints.features)?;
        r.save(&path)?;
        Ok(r)
    }

    pub fn extract(&self) -> Result<()> {
        let model = self.model()?;
        let reference = match self.detectors.contains(&DetectorKind::Lid) {
            true => Some(self.lid_reference(&model)?),
            false => None,
        };
        for &cause in &self.causes {
            let setup = self.setup(&model, cause)?;
            for &d in &self.detectors {
                let fp = &self.fingerprints.features;
                let cache = match d {
                    DetectorKind::Gran => gran_feature_cache(&model, &setup, self.config.detector.sigma, fp)?,
                    DetectorKind::Lid => lid_feature_cache(&model, &setup, reference.as_ref().expect("built"), fp)?,
                };
                let path = self.layout.features(d, cause);
                cache.save(&path)?;
                println!("{d}/{cause}: {} feature vectors -> {}", cache.rows.len(), path.display());
            }
        }
        Ok(())
    }

    pub fn fit_detector(&self) -> Result<()> {
        let model = self.model()?;
        for &cause in &self.causes {
            for &d in &self.detectors {
                let head = fit_head(&self.features(&model, d, cause)?)?;
                let path = self.layout.head(d, cause);
                head.save(&path)?;
                println!("{d}/{cause}: {} parameters -> {}", head.head.param_count(), path.display());
            }
        }
        Ok(())
    }

    pub fn evaluate(&self) -> Result<()> {
        let model = self.model()?;
        let reference_count = match self.detectors.contains(&DetectorKind::Lid) {
            true => self.lid_reference(&model)?.images.len(),
            false => 0,
        };
        for &cause in &self.causes {
            for &d in &self.detectors {
                let cache = self.features(&model, d, cause)?;
                let head_path = self.layout.head(d, cause);
                let head = HeadFile::load(&head_path)?;
                expect_fingerprint("detector head", &head_path, &head.stamp.fingerprint, &self.fingerprints.features)?;
                let (auc, train, test) = evaluate_head(&cache, &head)?;
                let res = detector_resources(d, &model, cache.feature_names.len(), reference_count);
                let row = EvalRow {
                    dataset: self.config.dataset().to_string(),
                    cause,
                    detector: d,
                    auc,
                    train_samples: train,
                    test_samples: test,
                    features: cache.feature_names.len(),
                    learned: res.learned,
                    stored: res.stored,
                };
                println!("{d}/{cause}: AUC {}", gran_core::eval::percent(auc));
                let file = EvalFile { stamp: self.stamp(&self.fingerprints.features, &model), row };
                artifact::write_json(&self.layout.eval(d, cause), &file)?;
            }
        }
        self.time_detectors(&model)
    }

    /// Times every selected detector on the same images: the first
    /// `timing_samples` samples of the first selected set-up.
    fn time_detectors(&self, model: &Model) -> Result<()> {
        let Some(&first) = self.causes.first() else { return Ok(()) };
        let setup = self.setup(model, first)?;
        let images: Vec<&Tensor> =
            setup.samples.iter().take(self.config.detector.timing_samples.max(1)).map(|s| &s.pixels).collect();
        let reference = match self.detectors.contains(&DetectorKind::Lid) {
            true => Some(self.lid_reference(model)?),
            false => None,
        };
        let report = measure_runtime(model, &images, self.config.detector.sigma, reference.as_ref(), 5)?;
        for row in report.rows.into_iter().filter(|r| self.detectors.contains(&r.detector)) {
            println!("{}: median {:.3} ms per sample over {}", row.detector, 1e3 * row.median_seconds, row.samples);
            let file = RuntimeFile { stamp: self.stamp(&self.fingerprints.features, model), row };
            artifact::write_json(&self.layout.runtime(file.row.detector), &file)?;
        }
        Ok(())
    }

    pub fn report(&self) -> Result<()> {
        let model = self.model()?;
        let mut rows = Vec::new();
        for &cause in &self.causes {
            for &d in &self.detectors {
                let path = self.layout.eval(d, cause);
                let file: EvalFile = artifact::read_json(&path)?;
                expect_fingerprint("evaluation", &path, &file.stamp.fingerprint, &self.fingerprints.features)?;
                file.stamp.expect_model(&path.display().to_string(), &model.checksum())?;
                rows.push(file.row);
            }
        }
        rows.sort_by_key(|r| (r.cause, r.detector));
        let report = EvalReport {
            fingerprint: self.fingerprints.features.clone(),
            model_checksum: model.checksum(),
            rows,
        };
        artifact::write_bytes(&self.layout.report_csv(), report.to_csv().as_bytes())?;
        let table = report.to_table();
        artifact::write_bytes(&self.layout.report_txt(), table.as_bytes())?;
        print!("{table}");

        let mut runtime = RuntimeReport { rows: Vec::new() };
        for &d in &self.detectors {
            if let Ok(file) = artifact::read_json::<RuntimeFile>(&self.layout.runtime(d)) {
                if file.stamp.fingerprint == self.fingerprints.features {
                    runtime.rows.push(file.row);
                }
            }
        }
        if !runtime.rows.is_empty() {
            artifact::write_bytes(&self.layout.runtime_csv(), runtime.to_csv().as_bytes())?;
        }
        Ok(())
    }
}
