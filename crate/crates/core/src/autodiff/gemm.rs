//! Thin safe wrapper over `matrixmultiply` with strided (transposable) views.

use crate::Real;

#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    data: &'a [Real],
    rows: usize,
    cols: usize,
    row_stride: isize,
    col_stride: isize,
}

impl<'a> MatRef<'a> {
    pub(crate) fn new(data: &'a [Real], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols, "matrix view exceeds buffer");
        MatRef {
            data,
            rows,
            cols,
            row_stride: cols as isize,
            col_stride: 1,
        }
    }

    pub(crate) fn t(self) -> Self {
        MatRef {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }
}

/// `c = a * b`, or `c += a * b` when `accumulate` is set. `c` is row-major.
pub(crate) fn gemm(a: MatRef<'_>, b: MatRef<'_>, c: &mut [Real], accumulate: bool) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert!(c.len() >= m * n, "gemm output buffer too small");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    let beta: Real = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the views were bounds-checked at construction (row-major, dense)
    // and transposition only swaps strides, so every index touched by the
    // kernel lies inside the borrowed slices. `c` is exclusively borrowed.
    unsafe {
        kernel(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.row_stride,
            a.col_stride,
            b.data.as_ptr(),
            b.row_stride,
            b.col_stride,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(not(feature = "f32"))]
use matrixmultiply::dgemm as kernel;
#[cfg(feature = "f32")]
use matrixmultiply::sgemm as kernel;

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[Real], b: &[Real], m: usize, k: usize, n: usize) -> Vec<Real> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matches_naive_product_including_transposed_views() {
        let a: Vec<Real> = (0..6).map(|v| v as Real - 2.5).collect(); // 2x3
        let b: Vec<Real> = (0..12).map(|v| (v as Real) * 0.5).collect(); // 3x4
        let mut c = vec![0.0; 8];
        gemm(MatRef::new(&a, 2, 3), MatRef::new(&b, 3, 4), &mut c, false);
        assert_eq!(c, naive(&a, &b, 2, 3, 4));

        // a^T stored as 3x2, viewed transposed back to 2x3.
        let at: Vec<Real> = vec![a[0], a[3], a[1], a[4], a[2], a[5]];
        let mut c2 = vec![1.0; 8];
        gemm(MatRef::new(&at, 3, 2).t(), MatRef::new(&b, 3, 4), &mut c2, true);
        let expected: Vec<Real> = naive(&a, &b, 2, 3, 4).iter().map(|v| v + 1.0).collect();
        assert_eq!(c2, expected);
    }
}
