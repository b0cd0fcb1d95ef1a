//! Gradient-norm detector: Gaussian smoothing, per-parameter-tensor gradient
//! L1 norms, and a logistic-regression head.
//!
//! For an input `x` the classifier's prediction `y` is taken on `x` itself;
//! the loss `L(theta, F(x~), y)` is evaluated on the smoothed image `x~` and
//! the L1 norm of its gradient with respect to each parameter tensor forms
//! the feature vector. Misclassified inputs tend to produce larger norms.

mod features;
mod head;
mod smooth;
mod store;

pub use features::{extract_gran_batch, extract_gran_features, gran_feature_names, GranFeatures};
pub use head::{fit_detector, DetectorHead, GRAD_TOLERANCE, L2_PENALTY, MAX_ITERATIONS, STD_FLOOR};
pub use smooth::{gaussian_kernel, gaussian_smooth, MIN_SIGMA};
pub use store::{feature_cache_path, head_path, DetectorKind, FeatureCache, FeatureRow, HeadFile, STORE_VERSION};

/// Smoothing standard deviation used unless configured otherwise.
pub const DEFAULT_SIGMA: f64 = 0.4;
