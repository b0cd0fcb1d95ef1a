use crate::{Error, Result};

/// Pair counts behind the AUC: `numerator = 2 * wins + ties` over
/// `denominator = 2 * positives * negatives`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AucCounts {
    pub numerator: u128,
    pub denominator: u128,
}

impl AucCounts {
    /// The ratio as one correctly rounded division. Swapping the labels
    /// turns `n / d` into `(d - n) / d`, and the two rounded quotients still
    /// sum to exactly 1.
    pub fn value(self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

/// Counts positive/negative pairs by sorting scores and walking tie groups.
pub fn auc_counts(scores: &[f64], labels: &[u8]) -> Result<AucCounts> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("auc: scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite { op: "auc" });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut negatives_below, mut wins, mut ties, mut positives) = (0u128, 0u128, 0u128, 0u128);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut q) = (0u128, 0u128);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            match labels[order[j]] {
                1 => p += 1,
                0 => q += 1,
                other => return Err(Error::invalid(format!("auc: label {other} is not 0 or 1"))),
            }
            j += 1;
        }
        wins += p * negatives_below;
        ties += p * q;
        negatives_below += q;
        positives += p;
        i = j;
    }
    if positives == 0 || negatives_below == 0 {
        return Err(Error::invalid("auc needs both labels present"));
    }
    Ok(AucCounts { numerator: 2 * wins + ties, denominator: 2 * positives * negatives_below })
}

/// Area under the ROC curve: `P(score_pos > score_neg) + P(tie) / 2`.
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    Ok(auc_counts(scores, labels)?.value())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Compares every positive with every negative.
    pub(crate) fn brute_force(scores: &[f64], labels: &[u8]) -> f64 {
        let (mut wins, mut losses, mut ties) = (0u64, 0u64, 0u64);
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    if si > sj {
                        wins += 1;
                    } else if si < sj {
                        losses += 1;
                    } else {
                        ties += 1;
                    }
                }
            }
        }
        let pairs = wins + losses + ties;
        (2 * wins + ties) as f64 / (2 * pairs) as f64
    }

    #[test]
    fn perfect_separation_is_one() {
        assert_eq!(auc_roc(&[0.9, 0.8, 0.1, 0.2], &[1, 1, 0, 0]).unwrap(), 1.0);
    }

    #[test]
    fn all_ties_is_one_half() {
        assert_eq!(auc_roc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_or_bad_label_is_an_error() {
        assert!(auc_roc(&[0.1, 0.2], &[1, 1]).is_err());
        assert!(auc_roc(&[0.1, 0.2], &[0, 2]).is_err());
        assert!(auc_roc(&[0.1], &[0, 1]).is_err());
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (2usize..=200, 1u32..=50).prop_flat_map(|(n, levels)| {
            (
                proptest::collection::vec((0..levels).prop_map(|v| v as f64 / 7.0), n),
                proptest::collection::vec(0u8..=1, n),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn matches_brute_force_and_label_swap((scores, labels) in instance()) {
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let auc = auc_roc(&scores, &labels).unwrap();
            prop_assert_eq!(auc, brute_force(&scores, &labels));
            let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
            prop_assert_eq!(auc + auc_roc(&scores, &flipped).unwrap(), 1.0);
        }
    }

    proptest! {
        #[test]
        fn invariant_under_increasing_transforms((scores, labels) in instance(), a in 0.1..10.0f64, b in -5.0..5.0f64) {
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let auc = auc_roc(&scores, &labels).unwrap();
            let affine: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
            let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
            prop_assert_eq!(auc, auc_roc(&affine, &labels).unwrap());
            prop_assert_eq!(auc, auc_roc(&exp, &labels).unwrap());
        }
    }
}
