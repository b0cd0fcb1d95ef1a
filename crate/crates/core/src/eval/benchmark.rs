use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use super::auc::auc_roc;
use super::report::{EvalReport, EvalRow, RuntimeReport, RuntimeRow};
use super::resources::{gran_resources, lid_resources, ResourceCount};
use crate::artifact::Stamp;
use crate::data::{DetectionSetup, Partition};
use crate::gran::{
    extract_gran_batch, extract_gran_features, fit_detector, gran_feature_names, DetectorKind, FeatureCache,
    FeatureRow, HeadFile, STORE_VERSION,
};
use crate::lid::{extract_lid_features, lid_feature_names, LidExtractor, LidReference};
use crate::nn::Model;
use crate::{Error, Result, Tensor};

/// Settings that shape the benchmark's numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub dataset: String,
    /// GraN smoothing standard deviation.
    pub sigma: f64,
    pub detectors: Vec<DetectorKind>,
}

/// GraN features for every sample of a set-up.
pub fn gran_feature_cache(model: &Model, setup: &DetectionSetup, sigma: f64, fingerprint: &str) -> Result<FeatureCache> {
    let batch: Vec<(u64, &Tensor)> = setup.samples.iter().map(|s| (s.id, &s.pixels)).collect();
    let features = extract_gran_batch(model, &batch, sigma)?;
    Ok(FeatureCache {
        version: STORE_VERSION,
        stamp: stamp(model, fingerprint),
        detector: DetectorKind::Gran,
        cause: setup.cause,
        sigma: Some(sigma),
        k: None,
        feature_names: gran_feature_names(model),
        rows: setup
            .samples
            .iter()
            .zip(features)
            .map(|(s, f)| FeatureRow { id: s.id, label: s.label, partition: s.partition, values: f.values })
            .collect(),
    })
}

/// LID features for every sample of a set-up, with reference activations
/// computed once.
pub fn lid_feature_cache(
    model: &Model,
    setup: &DetectionSetup,
    reference: &LidReference,
    fingerprint: &str,
) -> Result<FeatureCache> {
    reference.stamp.expect_model("LID reference", &model.checksum())?;
    let extractor = LidExtractor::new(model, reference)?;
    let rows = setup
        .samples
        .iter()
        .map(|s| {
            Ok(FeatureRow { id: s.id, label: s.label, partition: s.partition, values: extractor.extract(&s.pixels)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureCache {
        version: STORE_VERSION,
        stamp: stamp(model, fingerprint),
        detector: DetectorKind::Lid,
        cause: setup.cause,
        sigma: None,
        k: Some(reference.k),
        feature_names: lid_feature_names(model),
        rows,
    })
}

fn stamp(model: &Model, fingerprint: &str) -> Stamp {
    Stamp { fingerprint: fingerprint.to_string(), model_checksum: model.checksum() }
}

/// Fits a head on the training partition of a feature cache.
pub fn fit_head(cache: &FeatureCache) -> Result<HeadFile> {
    let (x, y) = cache.split(Partition::Train);
    Ok(HeadFile {
        version: STORE_VERSION,
        stamp: cache.stamp.clone(),
        detector: cache.detector,
        cause: cache.cause,
        feature_names: cache.feature_names.clone(),
        head: fit_detector(&x, &y)?,
    })
}

/// Scores the test partition and returns the AUC in `[0, 1]` with the
/// partition sizes.
pub fn evaluate_head(cache: &FeatureCache, head: &HeadFile) -> Result<(f64, usize, usize)> {
    if head.cause != cache.cause || head.detector != cache.detector {
        return Err(Error::invalid(format!(
            "head for {}/{} cannot score {}/{} features",
            head.detector, head.cause, cache.detector, cache.cause
        )));
    }
    let (x, y) = cache.split(Partition::Test);
    let scores = x
        .iter()
        .map(|f| head.score(f, &cache.stamp.model_checksum))
        .collect::<Result<Vec<_>>>()?;
    let train = cache.rows.len() - x.len();
    Ok((auc_roc(&scores, &y)?, train, x.len()))
}

/// Storage cost of a detector for `model`.
pub fn detector_resources(kind: DetectorKind, model: &Model, feature_len: usize, reference_count: usize) -> ResourceCount {
    match kind {
        DetectorKind::Gran => gran_resources(feature_len),
        DetectorKind::Lid => lid_resources(model.architecture().input_len(), reference_count, feature_len),
    }
}

/// Builds report rows from feature caches: fit on train, score test.
pub fn report_from_caches(
    model: &Model,
    dataset: &str,
    caches: &[FeatureCache],
    reference_count: usize,
    fingerprint: &str,
) -> Result<EvalReport> {
    let checksum = model.checksum();
    let mut rows = Vec::new();
    for cache in caches {
        cache.stamp.expect_model("feature cache", &checksum)?;
        let head = fit_head(cache)?;
        let (auc, train, test) = evaluate_head(cache, &head)?;
        let resources = detector_resources(cache.detector, model, cache.feature_names.len(), reference_count);
        rows.push(EvalRow {
            dataset: dataset.to_string(),
            cause: cache.cause,
            detector: cache.detector,
            auc,
            train_samples: train,
            test_samples: test,
            features: cache.feature_names.len(),
            learned: resources.learned,
            stored: resources.stored,
        });
    }
    rows.sort_by_key(|r| (r.cause, r.detector));
    Ok(EvalReport { fingerprint: fingerprint.to_string(), model_checksum: checksum, rows })
}

/// Extracts features for every (set-up, detector) pair, then fits and
/// scores each. Returns the report and the caches it was computed from.
pub fn run_benchmark(
    model: &Model,
    setups: &[DetectionSetup],
    reference: Option<&LidReference>,
    config: &BenchmarkConfig,
    fingerprint: &str,
) -> Result<(EvalReport, Vec<FeatureCache>)> {
    let mut caches = Vec::new();
    for setup in setups {
        for &kind in &config.detectors {
            let cache = match kind {
                DetectorKind::Gran => gran_feature_cache(model, setup, config.sigma, fingerprint)?,
                DetectorKind::Lid => {
                    let r = reference.ok_or_else(|| Error::invalid("LID detector requested without references"))?;
                    lid_feature_cache(model, setup, r, fingerprint)?
                }
            };
            info!("{kind}/{}: extracted {} feature vectors", setup.cause, cache.rows.len());
            caches.push(cache);
        }
    }
    let reference_count = reference.map_or(0, |r| r.images.len());
    let report = report_from_caches(model, &config.dataset, &caches, reference_count, fingerprint)?;
    Ok((report, caches))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn time_each(images: &[&Tensor], warmup: usize, mut f: impl FnMut(&Tensor) -> Result<()>) -> Result<Vec<f64>> {
    for x in images.iter().take(warmup) {
        f(x)?;
    }
    images
        .iter()
        .map(|x| {
            let t = Instant::now();
            f(x)?;
            Ok(t.elapsed().as_secs_f64())
        })
        .collect()
}

/// Median per-sample feature-extraction wall time of each detector on the
/// same images, after `warmup` untimed calls. LID recomputes its reference
/// activations for every sample, as it would when only images are stored.
pub fn measure_runtime(
    model: &Model,
    images: &[&Tensor],
    sigma: f64,
    reference: Option<&LidReference>,
    warmup: usize,
) -> Result<RuntimeReport> {
    if images.is_empty() {
        return Err(Error::invalid("runtime measurement needs at least one image"));
    }
    let mut rows = Vec::new();
    let gran = time_each(images, warmup, |x| extract_gran_features(model, x, sigma, 0).map(drop))?;
    rows.push(RuntimeRow { detector: DetectorKind::Gran, samples: gran.len(), median_seconds: median(gran) });
    if let Some(r) = reference {
        let lid = time_each(images, warmup, |x| extract_lid_features(model, x, r).map(drop))?;
        rows.push(RuntimeRow { detector: DetectorKind::Lid, samples: lid.len(), median_seconds: median(lid) });
    }
    Ok(RuntimeReport { rows })
}
