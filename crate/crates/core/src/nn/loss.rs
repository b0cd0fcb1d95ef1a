use crate::autodiff::PROB_FLOOR;
use crate::{Error, Result};

/// `-ln(max(probs[y], 1e-12))`.
///
/// The differentiable counterpart is the fused
/// [`Tape::softmax_cross_entropy`](crate::autodiff::Tape::softmax_cross_entropy),
/// whose adjoint at the logits is `p - onehot(y)`.
pub fn cross_entropy(probs: &[f64], y: usize) -> Result<f64> {
    let p = probs
        .get(y)
        .ok_or_else(|| Error::invalid(format!("class {y} out of range for {} classes", probs.len())))?;
    Ok(-p.max(PROB_FLOOR as f64).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certain_prediction_has_zero_loss() {
        assert_eq!(cross_entropy(&[0.0, 1.0], 1).unwrap(), 0.0);
    }

    #[test]
    fn floor_keeps_loss_finite() {
        let l = cross_entropy(&[1.0, 0.0], 1).unwrap();
        assert!((l - 1e12f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn uniform_two_class_loss_is_ln_two() {
        assert!((cross_entropy(&[0.5, 0.5], 0).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_label_is_an_error() {
        assert!(cross_entropy(&[0.5, 0.5], 2).is_err());
    }
}
