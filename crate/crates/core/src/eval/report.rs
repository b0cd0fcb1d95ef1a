use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::data::Cause;
use crate::gran::DetectorKind;

/// One (set-up, detector) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub dataset: String,
    pub cause: Cause,
    pub detector: DetectorKind,
    /// AUC-ROC in `[0, 1]`.
    pub auc: f64,
    pub train_samples: usize,
    pub test_samples: usize,
    pub features: usize,
    pub learned: usize,
    pub stored: usize,
}

/// AUC table plus resource accounting. Contains no timings, so identical
/// inputs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fingerprint: String,
    pub model_checksum: String,
    pub rows: Vec<EvalRow>,
}

/// AUC as a percentage with two decimals.
pub fn percent(auc: f64) -> String {
    format!("{:.2}", 100.0 * auc)
}

impl EvalReport {
    pub fn get(&self, cause: Cause, detector: DetectorKind) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.cause == cause && r.detector == detector)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# fingerprint={} model={}\n", self.fingerprint, self.model_checksum);
        s.push_str("dataset,cause,detector,auc_percent,train_samples,test_samples,features,learned_params,stored_values\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.dataset,
                r.cause,
                r.detector,
                percent(r.auc),
                r.train_samples,
                r.test_samples,
                r.features,
                r.learned,
                r.stored
            );
        }
        s
    }

    /// Causes as rows, detectors as columns, then a resource summary.
    pub fn to_table(&self) -> String {
        let detectors: BTreeSet<DetectorKind> = self.rows.iter().map(|r| r.detector).collect();
        let causes: BTreeSet<Cause> = self.rows.iter().map(|r| r.cause).collect();
        let datasets: BTreeSet<&str> = self.rows.iter().map(|r| r.dataset.as_str()).collect();
        let mut s = String::new();
        let _ = writeln!(s, "AUC-ROC [%] on {}", datasets.into_iter().collect::<Vec<_>>().join(", "));
        let _ = writeln!(s, "fingerprint {}  model {}", self.fingerprint, self.model_checksum);
        s.push('\n');
        let _ = write!(s, "{:<8}", "Cause");
        for d in &detectors {
            let _ = write!(s, "{:>9}", d.title());
        }
        let _ = writeln!(s, "{:>8}{:>7}", "train", "test");
        for c in &causes {
            let _ = write!(s, "{:<8}", c.title());
            let mut sizes = None;
            for d in &detectors {
                match self.get(*c, *d) {
                    Some(r) => {
                        let _ = write!(s, "{:>9}", percent(r.auc));
                        sizes.get_or_insert((r.train_samples, r.test_samples));
                    }
                    None => {
                        let _ = write!(s, "{:>9}", "-");
                    }
                }
            }
            let (tr, te) = sizes.unwrap_or_default();
            let _ = writeln!(s, "{tr:>8}{te:>7}");
        }
        s.push('\n');
        let _ = writeln!(s, "{:<8}{:>9}{:>9}{:>9}{:>9}", "Detector", "features", "learned", "stored", "total");
        for d in &detectors {
            if let Some(r) = self.rows.iter().find(|r| r.detector == *d) {
                let _ = writeln!(
                    s,
                    "{:<8}{:>9}{:>9}{:>9}{:>9}",
                    d.title(),
                    r.features,
                    r.learned,
                    r.stored,
                    r.learned + r.stored
                );
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub detector: DetectorKind,
    pub samples: usize,
    pub median_seconds: f64,
}

/// Per-sample feature-extraction timings; kept apart from [`EvalReport`]
/// because wall times vary between runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeReport {
    pub rows: Vec<RuntimeRow>,
}

impl RuntimeReport {
    pub fn median(&self, detector: DetectorKind) -> Option<f64> {
        self.rows.iter().find(|r| r.detector == detector).map(|r| r.median_seconds)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("detector,samples,median_ms\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:.4}", r.detector, r.samples, 1e3 * r.median_seconds);
        }
        s
    }
}
