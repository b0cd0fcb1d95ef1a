use super::AttackConfig;
use crate::nn::Model;
use crate::{Real, Result, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct JsmaOutcome {
    pub adversarial: Tensor,
    /// Pixels changed, in the order they were selected.
    pub modified: Vec<usize>,
    pub reached_target: bool,
}

/// Targeted Jacobian saliency map attack that only increases pixels.
///
/// Each iteration computes `alpha = dZ_t/dx` and `beta = d(sum_{j != t} Z_j)/dx`
/// and picks the pixel pair (or single pixel) with `alpha > 0`, `beta < 0`
/// maximising `alpha * |beta|`. Chosen pixels move by `theta` (clipped to
/// `[0, 1]`) and leave the search domain. Stops once the target class is
/// predicted, no admissible pixel remains, or `ceil(gamma * n)` pixels have
/// been modified.
pub fn jsma(model: &Model, x: &Tensor, target: usize, config: &AttackConfig) -> Result<JsmaOutcome> {
    let classes = model.classes();
    let n = x.numel();
    let budget = (config.jsma_gamma * n as f64).ceil() as usize;
    let theta = config.jsma_theta as Real;
    let mut t_row = vec![0.0; classes];
    t_row[target] = 1.0;
    let others: Vec<Real> = t_row.iter().map(|v| 1.0 - v).collect();
    let rows = [t_row, others];

    let mut adv = x.clone();
    let mut domain: Vec<bool> = adv.data().iter().map(|&v| if theta > 0.0 { v < 1.0 } else { v > 0.0 }).collect();
    let mut modified = Vec::new();
    loop {
        let (logits, grads) = model.logit_gradients(&adv, &rows)?;
        if crate::tensor::argmax(&logits) == target {
            return Ok(JsmaOutcome { adversarial: adv, modified, reached_target: true });
        }
        let remaining = budget.saturating_sub(modified.len());
        if remaining == 0 {
            break;
        }
        let (alpha, beta) = (grads[0].data(), grads[1].data());
        let chosen = if config.jsma_pairs && remaining >= 2 {
            best_pair(alpha, beta, &domain)
        } else {
            best_single(alpha, beta, &domain)
        };
        if chosen.is_empty() {
            break;
        }
        for p in chosen {
            let v = &mut adv.data_mut()[p];
            *v = (*v + theta).clamp(0.0, 1.0);
            domain[p] = false;
            modified.push(p);
        }
    }
    Ok(JsmaOutcome { adversarial: adv, modified, reached_target: false })
}

fn best_single(alpha: &[Real], beta: &[Real], domain: &[bool]) -> Vec<usize> {
    let mut best: Option<(usize, Real)> = None;
    for p in (0..alpha.len()).filter(|&p| domain[p]) {
        if alpha[p] > 0.0 && beta[p] < 0.0 {
            let s = alpha[p] * -beta[p];
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((p, s));
            }
        }
    }
    best.map(|(p, _)| vec![p]).unwrap_or_default()
}

fn best_pair(alpha: &[Real], beta: &[Real], domain: &[bool]) -> Vec<usize> {
    let live: Vec<usize> = (0..alpha.len()).filter(|&p| domain[p]).collect();
    let mut best: Option<(usize, usize, Real)> = None;
    for (i, &p) in live.iter().enumerate() {
        let (ap, bp) = (alpha[p], beta[p]);
        for &q in &live[i + 1..] {
            let a = ap + alpha[q];
            let b = bp + beta[q];
            if a > 0.0 && b < 0.0 {
                let s = a * -b;
                if best.is_none_or(|(_, _, v)| s > v) {
                    best = Some((p, q, s));
                }
            }
        }
    }
    best.map(|(p, q, _)| vec![p, q]).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{test_models::linear, AttackKind};

    fn cfg(gamma: f64, pairs: bool) -> AttackConfig {
        let mut c = AttackConfig::new(AttackKind::Jsma);
        c.jsma_gamma = gamma;
        c.jsma_pairs = pairs;
        c
    }

    #[test]
    fn zero_budget_leaves_input_unchanged() {
        let m = linear(2, 2, &[-1.0, 10.0, -1.0, 1.0]);
        let x = Tensor::zeros(&[1, 1, 2]);
        let out = jsma(&m, &x, 1, &cfg(0.0, true)).unwrap();
        assert_eq!(out.adversarial, x);
        assert!(out.modified.is_empty());
        assert!(!out.reached_target);
    }

    #[test]
    fn strongest_target_pixel_is_modified_first() {
        // target class 1 weights: pixel 0 -> 10, pixel 1 -> 1; class 0 weights -1.
        // At x = 0 the logits tie and class 0 is predicted.
        let m = linear(2, 2, &[-1.0, 10.0, -1.0, 1.0]);
        let x = Tensor::new(vec![1, 1, 2], vec![0.0, 0.0]).unwrap();
        let out = jsma(&m, &x, 1, &cfg(0.5, false)).unwrap();
        assert_eq!(out.modified, vec![0]);
        assert!(out.reached_target);
        assert_eq!(out.adversarial.data(), &[1.0, 0.0]);
    }

    #[test]
    fn modifications_respect_budget() {
        // every pixel is admissible but the class 0 bias keeps the target out of reach.
        let mut w = Vec::new();
        for _ in 0..10 {
            w.extend_from_slice(&[-0.1, 0.1]);
        }
        let mut m = linear(10, 2, &w);
        m.params_mut()[1].value.data_mut()[0] = 100.0;
        let x = Tensor::zeros(&[1, 1, 10]);
        for pairs in [true, false] {
            let out = jsma(&m, &x, 1, &cfg(0.3, pairs)).unwrap();
            assert_eq!(out.modified.len(), 3);
            assert!(!out.reached_target);
        }
    }
}
