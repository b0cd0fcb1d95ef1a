//! Evaluation: exact AUC-ROC, detector resource accounting, and the
//! benchmark that fits and scores every detector on every set-up.

mod auc;
mod benchmark;
mod report;
mod resources;

pub use auc::{auc_counts, auc_roc, AucCounts};
pub use benchmark::{
    detector_resources, evaluate_head, fit_head, gran_feature_cache, lid_feature_cache, measure_runtime,
    report_from_caches, run_benchmark, BenchmarkConfig,
};
pub use report::{percent, EvalReport, EvalRow, RuntimeReport, RuntimeRow};
pub use resources::{gran_resources, lid_resources, ResourceCount};
