use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const L2_PENALTY: f64 = 1e-4;
pub const GRAD_TOLERANCE: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 10_000;
/// Floor on the feature standard deviation used for z-scoring.
pub const STD_FLOOR: f64 = 1e-12;

/// Logistic regression on z-scored features: `p = sigmoid(w . z + b)` with
/// `z = (f - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorHead {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Gradient-descent iterations used by the fit.
    pub iterations: usize,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl DetectorHead {
    /// All-zero head over `n` features; scores 0.5 everywhere.
    pub fn zeros(n: usize) -> Self {
        DetectorHead {
            weights: vec![0.0; n],
            bias: 0.0,
            mean: vec![0.0; n],
            std: vec![1.0; n],
            iterations: 0,
        }
    }

    pub fn feature_len(&self) -> usize {
        self.weights.len()
    }

    /// Learned parameters: one weight per feature plus the bias.
    pub fn param_count(&self) -> usize {
        self.weights.len() + 1
    }

    fn standardize(&self, f: &[f64]) -> Vec<f64> {
        f.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    /// `w . standardize(f) + b`.
    pub fn decision(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.weights.len() {
            return Err(Error::ShapeMismatch {
                op: "detector score",
                lhs: vec![f.len()],
                rhs: vec![self.weights.len()],
            });
        }
        Ok(self.standardize(f).iter().zip(&self.weights).map(|(z, w)| z * w).sum::<f64>() + self.bias)
    }

    /// Probability that the input is misclassified.
    pub fn score(&self, f: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.decision(f)?))
    }
}

/// Fits a [`DetectorHead`] by full-batch gradient descent on the mean
/// cross-entropy plus `L2_PENALTY / 2 * |w|^2`, starting from zero, until the
/// gradient norm drops below `GRAD_TOLERANCE` or `MAX_ITERATIONS` is reached.
///
/// The step is `1 / L` for the Lipschitz bound `L = (n + 1) / 4 + lambda` of
/// the standardised problem, so the fit is monotone and deterministic.
pub fn fit_detector(features: &[Vec<f64>], labels: &[u8]) -> Result<DetectorHead> {
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::invalid("detector fit needs one label per feature vector"));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::invalid("detector labels must be 0 or 1"));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::invalid("detector fit needs both labels present"));
    }
    let n = features[0].len();
    if features.iter().any(|f| f.len() != n) {
        return Err(Error::invalid("feature vectors differ in length"));
    }
    let rows = features.len() as f64;
    let mut mean = vec![0.0; n];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows);
    let mut std = vec![0.0; n];
    for f in features {
        for ((s, v), m) in std.iter_mut().zip(f).zip(&mean) {
            *s += (v - m) * (v - m) / rows;
        }
    }
    for s in &mut std {
        *s = s.sqrt().max(STD_FLOOR);
    }
    let mut head = DetectorHead { weights: vec![0.0; n], bias: 0.0, mean, std, iterations: 0 };
    let z: Vec<Vec<f64>> = features.iter().map(|f| head.standardize(f)).collect();
    if z.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "detector standardisation" });
    }

    let step = 1.0 / ((n as f64 + 1.0) / 4.0 + L2_PENALTY);
    let mut gw = vec![0.0; n];
    for it in 0..MAX_ITERATIONS {
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (zi, &y) in z.iter().zip(labels) {
            let t = zi.iter().zip(&head.weights).map(|(a, b)| a * b).sum::<f64>() + head.bias;
            let r = (sigmoid(t) - y as f64) / rows;
            gb += r;
            for (g, v) in gw.iter_mut().zip(zi) {
                *g += r * v;
            }
        }
        for (g, w) in gw.iter_mut().zip(&head.weights) {
            *g += L2_PENALTY * w;
        }
        let norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        head.iterations = it;
        if norm < GRAD_TOLERANCE {
            break;
        }
        for (w, g) in head.weights.iter_mut().zip(&gw) {
            *w -= step * g;
        }
        head.bias -= step * gb;
        head.iterations = it + 1;
    }
    if head.weights.iter().any(|w| !w.is_finite()) || !head.bias.is_finite() {
        return Err(Error::NonFinite { op: "detector fit" });
    }
    Ok(head)
}
