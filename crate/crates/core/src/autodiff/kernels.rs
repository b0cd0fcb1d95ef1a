//! Forward kernels and their adjoints. All buffers are row-major.

use super::gemm::{gemm, MatRef};
use crate::Real;

/// Geometry of a batched 2-D convolution (NCHW input, OIHW weight).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub(crate) fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    pub(crate) fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    fn input_len(&self) -> usize {
        self.in_channels * self.height * self.width
    }
}

/// Output spatial size of a sliding window, or `None` when the window does not fit.
pub(crate) fn window_out(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

fn im2col(g: &ConvGeometry, image: &[Real], cols: &mut [Real]) {
    let p = g.positions();
    for c in 0..g.in_channels {
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let row = (c * g.kernel_h + ky) * g.kernel_w + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        dst[oy * g.out_w + ox] = if iy >= 0
                            && ix >= 0
                            && (iy as usize) < g.height
                            && (ix as usize) < g.width
                        {
                            image[(c * g.height + iy as usize) * g.width + ix as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

fn col2im_add(g: &ConvGeometry, cols: &[Real], image: &mut [Real]) {
    let p = g.positions();
    for c in 0..g.in_channels {
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let row = (c * g.kernel_h + ky) * g.kernel_w + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy as usize >= g.height {
                        continue;
                    }
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix < 0 || ix as usize >= g.width {
                            continue;
                        }
                        image[(c * g.height + iy as usize) * g.width + ix as usize] +=
                            src[oy * g.out_w + ox];
                    }
                }
            }
        }
    }
}

/// Cross-correlation forward. Returns the output and the unfolded patches
/// (kept for the backward pass).
pub(crate) fn conv2d_forward(g: &ConvGeometry, input: &[Real], weight: &[Real]) -> (Vec<Real>, Vec<Real>) {
    let (ck, p) = (g.patch_len(), g.positions());
    let mut cols = vec![0.0; g.batch * ck * p];
    let mut out = vec![0.0; g.batch * g.out_channels * p];
    let w = MatRef::new(weight, g.out_channels, ck);
    for n in 0..g.batch {
        let col = &mut cols[n * ck * p..(n + 1) * ck * p];
        im2col(g, &input[n * g.input_len()..(n + 1) * g.input_len()], col);
        gemm(
            w,
            MatRef::new(col, ck, p),
            &mut out[n * g.out_channels * p..(n + 1) * g.out_channels * p],
            false,
        );
    }
    (out, cols)
}

pub(crate) fn conv2d_backward_weight(g: &ConvGeometry, cols: &[Real], grad_out: &[Real], grad_w: &mut [Real]) {
    let (ck, p, o) = (g.patch_len(), g.positions(), g.out_channels);
    for n in 0..g.batch {
        gemm(
            MatRef::new(&grad_out[n * o * p..(n + 1) * o * p], o, p),
            MatRef::new(&cols[n * ck * p..(n + 1) * ck * p], ck, p).t(),
            grad_w,
            true,
        );
    }
}

pub(crate) fn conv2d_backward_input(g: &ConvGeometry, weight: &[Real], grad_out: &[Real], grad_in: &mut [Real]) {
    let (ck, p, o) = (g.patch_len(), g.positions(), g.out_channels);
    let mut dcols = vec![0.0; ck * p];
    for n in 0..g.batch {
        gemm(
            MatRef::new(weight, o, ck).t(),
            MatRef::new(&grad_out[n * o * p..(n + 1) * o * p], o, p),
            &mut dcols,
            false,
        );
        col2im_add(g, &dcols, &mut grad_in[n * g.input_len()..(n + 1) * g.input_len()]);
    }
}

/// Max-pool over NCHW input. Returns pooled values and, per output, the flat
/// input index that won (first maximum in scan order).
#[allow(clippy::too_many_arguments)]
pub(crate) fn max_pool2d_forward(
    input: &[Real],
    planes: usize,
    height: usize,
    width: usize,
    size: usize,
    stride: usize,
    out_h: usize,
    out_w: usize,
) -> (Vec<Real>, Vec<usize>) {
    let mut out = Vec::with_capacity(planes * out_h * out_w);
    let mut winners = Vec::with_capacity(planes * out_h * out_w);
    for plane in 0..planes {
        let base = plane * height * width;
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut best = base + (oy * stride) * width + ox * stride;
                for ky in 0..size {
                    for kx in 0..size {
                        let idx = base + (oy * stride + ky) * width + ox * stride + kx;
                        if input[idx] > input[best] {
                            best = idx;
                        }
                    }
                }
                out.push(input[best]);
                winners.push(best);
            }
        }
    }
    (out, winners)
}

/// Row-wise numerically stable softmax of a `rows x cols` matrix.
pub(crate) fn softmax_rows(input: &[Real], cols: usize) -> Vec<Real> {
    let mut out = vec![0.0; input.len()];
    for (row, dst) in input.chunks(cols).zip(out.chunks_mut(cols)) {
        let max = row.iter().copied().fold(Real::NEG_INFINITY, Real::max);
        let mut total = 0.0;
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - max).exp();
            total += *d;
        }
        dst.iter_mut().for_each(|d| *d /= total);
    }
    out
}

/// Probability floor applied before the logarithm in cross-entropy.
pub const PROB_FLOOR: Real = 1e-12;

pub(crate) fn cross_entropy_value(probs: &[Real], labels: &[usize], classes: usize) -> Real {
    let total: Real = labels
        .iter()
        .enumerate()
        .map(|(row, &y)| -probs[row * classes + y].max(PROB_FLOOR).ln())
        .sum();
    total / labels.len() as Real
}
