use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{AttackConfig, AttackKind};
use crate::{Error, Result, Tensor};

/// Cause of misclassification a set-up targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Fgsm,
    BimA,
    BimB,
    Jsma,
    Cw,
    Wrong,
    Noisy,
}

impl Cause {
    pub const ALL: [Cause; 7] = [
        Cause::Fgsm,
        Cause::BimA,
        Cause::BimB,
        Cause::Jsma,
        Cause::Cw,
        Cause::Wrong,
        Cause::Noisy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Cause::Fgsm => "fgsm",
            Cause::BimA => "bim_a",
            Cause::BimB => "bim_b",
            Cause::Jsma => "jsma",
            Cause::Cw => "cw",
            Cause::Wrong => "wrong",
            Cause::Noisy => "noisy",
        }
    }

    /// Column title used in reports.
    pub fn title(self) -> &'static str {
        match self {
            Cause::Fgsm => "FGSM",
            Cause::BimA => "BIM-a",
            Cause::BimB => "BIM-b",
            Cause::Jsma => "JSMA",
            Cause::Cw => "CW",
            Cause::Wrong => "Wrong",
            Cause::Noisy => "Noisy",
        }
    }

    pub fn attack(self) -> Option<AttackKind> {
        match self {
            Cause::Fgsm => Some(AttackKind::Fgsm),
            Cause::BimA => Some(AttackKind::BimA),
            Cause::BimB => Some(AttackKind::BimB),
            Cause::Jsma => Some(AttackKind::Jsma),
            Cause::Cw => Some(AttackKind::Cw),
            Cause::Wrong | Cause::Noisy => None,
        }
    }
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Cause {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Cause::ALL
            .into_iter()
            .find(|c| c.name() == norm)
            .ok_or_else(|| Error::invalid(format!("unknown set-up {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Test,
}

/// One detector sample: label 1 means the classifier misclassifies it.
#[derive(Debug, Clone, PartialEq)]
pub struct SetupSample {
    pub id: u64,
    /// Id of the pre-test image the sample was derived from.
    pub source_id: u64,
    pub pixels: Tensor,
    pub label: u8,
    pub partition: Partition,
}

/// Provenance recorded alongside a set-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupMeta {
    pub seed: u64,
    pub model_checksum: String,
    /// Gaussian noise level of the noisy set-up.
    #[serde(default)]
    pub sigma_star: Option<f64>,
    /// Misclassification rate at `sigma_star` over the whole noisy pool.
    #[serde(default)]
    pub noise_rate: Option<f64>,
    /// Whether noisy pixels were clipped to `[0, 1]`.
    #[serde(default)]
    pub noise_clipped: Option<bool>,
    #[serde(default)]
    pub attack: Option<AttackConfig>,
    /// Images the construction considered (attacked, noised or evaluated).
    pub attempted: usize,
    /// Label-1 candidates before balancing.
    pub positives: usize,
    /// Label-0 candidates before balancing.
    pub negatives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSetup {
    pub cause: Cause,
    pub samples: Vec<SetupSample>,
    pub meta: SetupMeta,
}

/// Share of each class assigned to the training partition.
pub const TRAIN_FRACTION: f64 = 0.8;

impl DetectionSetup {
    /// Balances by seeded down-sampling of the majority side, then splits each
    /// class 80/20 so both partitions hold equal counts of both labels.
    ///
    /// `positives` and `negatives` are `(source_id, pixels)` pairs.
    pub fn balanced(
        cause: Cause,
        mut positives: Vec<(u64, Tensor)>,
        mut negatives: Vec<(u64, Tensor)>,
        meta: SetupMeta,
    ) -> Result<Self> {
        if positives.is_empty() {
            return Err(Error::EmptySetup(format!("{cause}: no misclassified samples")));
        }
        if negatives.is_empty() {
            return Err(Error::EmptySetup(format!("{cause}: no correctly classified samples")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(meta.seed);
        positives.shuffle(&mut rng);
        negatives.shuffle(&mut rng);
        let keep = positives.len().min(negatives.len());
        let train_per_class = (keep as f64 * TRAIN_FRACTION).round() as usize;
        if train_per_class == keep {
            return Err(Error::EmptySetup(format!(
                "{cause}: {keep} sample(s) per class leave the test partition empty"
            )));
        }
        positives.truncate(keep);
        negatives.truncate(keep);

        let mut samples = Vec::with_capacity(2 * keep);
        for partition in [Partition::Train, Partition::Test] {
            let range = match partition {
                Partition::Train => 0..train_per_class,
                Partition::Test => train_per_class..keep,
            };
            for (label, side) in [(0u8, &negatives), (1u8, &positives)] {
                for (source_id, pixels) in &side[range.clone()] {
                    samples.push(SetupSample {
                        id: samples.len() as u64,
                        source_id: *source_id,
                        pixels: pixels.clone(),
                        label,
                        partition,
                    });
                }
            }
        }
        let setup = DetectionSetup { cause, samples, meta };
        setup.validate()?;
        Ok(setup)
    }

    pub fn partition(&self, p: Partition) -> impl Iterator<Item = &SetupSample> {
        self.samples.iter().filter(move |s| s.partition == p)
    }

    pub fn train(&self) -> impl Iterator<Item = &SetupSample> {
        self.partition(Partition::Train)
    }

    pub fn test(&self) -> impl Iterator<Item = &SetupSample> {
        self.partition(Partition::Test)
    }

    /// Checks balance, the 80/20 ratio (within one sample) and id uniqueness.
    pub fn validate(&self) -> Result<()> {
        let count = |p: Partition, l: u8| self.partition(p).filter(|s| s.label == l).count();
        for p in [Partition::Train, Partition::Test] {
            if count(p, 0) != count(p, 1) {
                return Err(Error::invalid(format!("{}: {p:?} partition is unbalanced", self.cause)));
            }
        }
        let train = self.train().count() as f64;
        let total = self.samples.len() as f64;
        if (train - TRAIN_FRACTION * total).abs() > 1.0 {
            return Err(Error::invalid(format!(
                "{}: train partition holds {train} of {total} samples",
                self.cause
            )));
        }
        let mut ids: Vec<u64> = self.samples.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("{}: duplicate sample id", self.cause)));
        }
        if count(Partition::Test, 0) == 0 {
            return Err(Error::EmptySetup(format!("{}: empty test partition", self.cause)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta(seed: u64) -> SetupMeta {
        SetupMeta {
            seed,
            model_checksum: "m".into(),
            sigma_star: None,
            noise_rate: None,
            noise_clipped: None,
            attack: None,
            attempted: 0,
            positives: 0,
            negatives: 0,
        }
    }

    fn items(n: usize, base: u64) -> Vec<(u64, Tensor)> {
        (0..n).map(|i| (base + i as u64, Tensor::scalar(i as crate::Real))).collect()
    }

    #[test]
    fn missing_side_is_an_empty_setup_error() {
        assert!(matches!(
            DetectionSetup::balanced(Cause::Wrong, vec![], items(5, 0), meta(0)),
            Err(Error::EmptySetup(_))
        ));
        assert!(matches!(
            DetectionSetup::balanced(Cause::Fgsm, items(5, 0), vec![], meta(0)),
            Err(Error::EmptySetup(_))
        ));
    }

    #[test]
    fn equal_sides_are_kept_whole() {
        let s = DetectionSetup::balanced(Cause::Fgsm, items(50, 0), items(50, 100), meta(1)).unwrap();
        assert_eq!(s.samples.len(), 100);
        assert_eq!(s.train().count(), 80);
    }

    #[test]
    fn ninety_percent_accuracy_gives_thousand_per_side() {
        let s = DetectionSetup::balanced(Cause::Wrong, items(1000, 0), items(9000, 5000), meta(2)).unwrap();
        assert_eq!(s.samples.iter().filter(|x| x.label == 1).count(), 1000);
        assert_eq!(s.samples.iter().filter(|x| x.label == 0).count(), 1000);
    }

    #[test]
    fn cause_names_round_trip() {
        for c in Cause::ALL {
            assert_eq!(c.name().parse::<Cause>().unwrap(), c);
        }
        assert_eq!("BIM-a".parse::<Cause>().unwrap(), Cause::BimA);
    }

    proptest! {
        #[test]
        fn balance_ratio_and_disjointness_hold(p in 3usize..300, n in 3usize..300, seed in any::<u64>()) {
            let s = DetectionSetup::balanced(Cause::Noisy, items(p, 0), items(n, 10_000), meta(seed)).unwrap();
            let m = p.min(n);
            prop_assert_eq!(s.samples.len(), 2 * m);
            for part in [Partition::Train, Partition::Test] {
                let ones = s.partition(part).filter(|x| x.label == 1).count();
                let zeros = s.partition(part).filter(|x| x.label == 0).count();
                prop_assert_eq!(ones, zeros);
            }
            let train = s.train().count() as f64;
            prop_assert!((train - 0.8 * s.samples.len() as f64).abs() <= 1.0);
            let train_ids: std::collections::HashSet<u64> = s.train().map(|x| x.id).collect();
            prop_assert!(s.test().all(|x| !train_ids.contains(&x.id)));
        }
    }
}
