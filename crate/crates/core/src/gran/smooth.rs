use crate::{Real, Tensor};

/// Below this standard deviation smoothing is the identity.
pub const MIN_SIGMA: f64 = 1e-6;

/// Normalised 1D Gaussian taps for offsets `-r..=r`, `r = ceil(3 s)`.
pub fn gaussian_kernel(s: f64) -> Vec<f64> {
    let r = (3.0 * s).ceil() as i64;
    let taps: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * s * s)).exp()).collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Mirror index `i` into `0..n`, repeating the edge sample (`-1 -> 0`).
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// Separable Gaussian blur of a `[C, H, W]` image, channel by channel, with
/// mirrored borders. `s` is in pixels.
pub fn gaussian_smooth(x: &Tensor, s: f64) -> Tensor {
    if s < MIN_SIGMA {
        return x.clone();
    }
    let shape = x.shape();
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let kernel = gaussian_kernel(s);
    let r = (kernel.len() / 2) as i64;
    let mut out = x.clone();
    let mut row = vec![0.0f64; h * w];
    for plane in out.data_mut().chunks_mut(h * w) {
        for y in 0..h {
            for xx in 0..w {
                row[y * w + xx] = kernel
                    .iter()
                    .enumerate()
                    .map(|(t, k)| k * plane[y * w + reflect(xx as i64 + t as i64 - r, w)] as f64)
                    .sum();
            }
        }
        for y in 0..h {
            for xx in 0..w {
                plane[y * w + xx] = kernel
                    .iter()
                    .enumerate()
                    .map(|(t, k)| k * row[reflect(y as i64 + t as i64 - r, h) * w + xx])
                    .sum::<f64>() as Real;
            }
        }
    }
    out
}
