use serde::{Deserialize, Serialize};

/// Detector storage cost: learned head parameters plus auxiliary values kept
/// around at detection time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceCount {
    pub learned: usize,
    pub stored: usize,
}

impl ResourceCount {
    pub fn total(self) -> usize {
        self.learned + self.stored
    }
}

/// GraN keeps nothing beyond its `n + 1` head parameters.
pub fn gran_resources(feature_len: usize) -> ResourceCount {
    ResourceCount { learned: feature_len + 1, stored: 0 }
}

/// LID stores its reference images (`references * input_len` values) in
/// addition to its `feature_len + 1` head parameters.
pub fn lid_resources(input_len: usize, references: usize, feature_len: usize) -> ResourceCount {
    ResourceCount { learned: feature_len + 1, stored: references * input_len }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gran_with_34_features() {
        assert_eq!(gran_resources(34), ResourceCount { learned: 35, stored: 0 });
    }

    #[test]
    fn lid_on_32x32x3_inputs() {
        let r = lid_resources(32 * 32 * 3, 100, 65);
        assert_eq!((r.stored, r.learned, r.total()), (307_200, 66, 307_266));
    }
}
