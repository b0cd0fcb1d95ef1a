use crate::{Error, Result};

/// Cap applied when all neighbour distances coincide.
pub const LID_MAX: f64 = 1e6;

/// `-(1/k * sum_i ln(r_i / r_k))^-1` for ascending distances `r_1..r_k`,
/// capped at [`LID_MAX`]. Callers guarantee `r_1 > 0`.
pub fn lid_mle(nearest: &[f64]) -> f64 {
    let rk = nearest[nearest.len() - 1];
    let mean_log = nearest.iter().map(|r| (r / rk).ln()).sum::<f64>() / nearest.len() as f64;
    if mean_log >= -1.0 / LID_MAX {
        LID_MAX
    } else {
        (-1.0 / mean_log).min(LID_MAX)
    }
}

/// LID of `query` among `references` using the `k` nearest in Euclidean
/// distance. References at distance zero are copies of the query and are
/// left out of the estimate; if all `k` nearest are copies (`r_k = 0`) the
/// estimate is undefined and `layer` labels the error.
pub fn lid_estimate(query: &[f64], references: &[Vec<f64>], k: usize, layer: usize) -> Result<f64> {
    if k == 0 || k > references.len() {
        return Err(Error::invalid(format!("k = {k} needs 1..={} references", references.len())));
    }
    let mut d: Vec<f64> = references
        .iter()
        .map(|r| {
            if r.len() != query.len() {
                return Err(Error::ShapeMismatch { op: "lid distance", lhs: vec![query.len()], rhs: vec![r.len()] });
            }
            Ok(r.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        })
        .collect::<Result<_>>()?;
    d.sort_by(f64::total_cmp);
    d.truncate(k);
    if d[k - 1] == 0.0 {
        return Err(Error::DuplicateActivation { layer });
    }
    let first = d.partition_point(|&r| r == 0.0);
    Ok(lid_mle(&d[first..]))
}
