//! Dense row-major matrices and the multiply kernel.
//!
//! Storage is generic over [`Real`] so the same code runs in `f32` (the
//! persisted precision) and `f64` (used by gradient checking, where
//! finite-difference noise from 32-bit storage would swamp the tolerance).
//! Reductions accumulate in 64-bit regardless of the storage type: the
//! multiply kernel folds fixed-length blocks into `f64` master accumulators,
//! and elementwise transcendentals evaluate in `f64` before storing.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// Scalar storage for matrix values: `f32` or `f64`.
pub trait Real:
    Copy
    + Default
    + PartialEq
    + PartialOrd
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + Send
    + Sync
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn is_finite_val(self) -> bool;
}

impl Real for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn is_finite_val(self) -> bool {
        self.is_finite()
    }
}

impl Real for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline(always)]
    fn is_finite_val(self) -> bool {
        self.is_finite()
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// The persisted matrix type: 32-bit storage.
pub type Matrix = Mat<f32>;

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::ZERO; rows * cols],
        }
    }

    /// Build from row-major data; length must equal `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> crate::Result<Self> {
        if data.len() != rows * cols {
            return Err(crate::Error::Shape(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> crate::Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(crate::Error::Shape(format!(
                    "ragged rows: expected {c} columns, got {}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Mat { rows: r, cols: c, data })
    }

    #[inline(always)]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline(always)]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline(always)]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline(always)]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline(always)]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline(always)]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn transposed(&self) -> Self {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite_val())
    }

    pub fn fill(&mut self, v: T) {
        self.data.fill(v);
    }

    pub fn convert<U: Real>(&self) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    /// Reuse this buffer for a new shape, zero-filled. Keeps capacity.
    pub fn reset(&mut self, rows: usize, cols: usize) {
        self.rows = rows;
        self.cols = cols;
        self.data.clear();
        self.data.resize(rows * cols, T::ZERO);
    }
}

// Column tile held in registers across the reduction loop, and the block
// length over which partial sums stay in storage precision before being
// folded into the f64 masters.
const COL_TILE: usize = 32;
const ACC_BLOCK: usize = 64;

/// `out = a * b` where `a` is `m x k` and `b` is `k x n`, both row-major.
///
/// Each output element is a dot product over `k`; partial sums over
/// `ACC_BLOCK`-length slices of `k` run in storage precision (vectorizable),
/// with block results accumulated into `f64`. For `T = f64` this is plain
/// 64-bit accumulation throughout.
pub fn matmul_into<T: Real>(a: &Mat<T>, b: &Mat<T>, out: &mut Mat<T>) {
    assert_eq!(a.cols, b.rows, "matmul inner dims");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    out.reset(m, n);
    for i in 0..m {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        let mut j = 0;
        while j + COL_TILE <= n {
            let mut master = [0.0f64; COL_TILE];
            let mut k0 = 0;
            while k0 < k {
                let kend = (k0 + ACC_BLOCK).min(k);
                let mut acc = [T::ZERO; COL_TILE];
                for kk in k0..kend {
                    let av = arow[kk];
                    let brow = &b.data[kk * n + j..kk * n + j + COL_TILE];
                    for t in 0..COL_TILE {
                        acc[t] += av * brow[t];
                    }
                }
                for t in 0..COL_TILE {
                    master[t] += acc[t].to_f64();
                }
                k0 = kend;
            }
            for t in 0..COL_TILE {
                orow[j + t] = T::from_f64(master[t]);
            }
            j += COL_TILE;
        }
        while j < n {
            let mut master = 0.0f64;
            let mut k0 = 0;
            while k0 < k {
                let kend = (k0 + ACC_BLOCK).min(k);
                let mut acc = T::ZERO;
                for kk in k0..kend {
                    acc += arow[kk] * b.data[kk * n + j];
                }
                master += acc.to_f64();
                k0 = kend;
            }
            orow[j] = T::from_f64(master);
            j += 1;
        }
    }
}

/// Multiply with optional operand transposes (`ta`, `tb`). Transposed
/// operands are materialized once; the copy is negligible next to the
/// multiply itself at these sizes.
pub fn matmul_t<T: Real>(a: &Mat<T>, b: &Mat<T>, ta: bool, tb: bool) -> Mat<T> {
    let at;
    let bt;
    let aa = if ta {
        at = a.transposed();
        &at
    } else {
        a
    };
    let bb = if tb {
        bt = b.transposed();
        &bt
    } else {
        b
    };
    let mut out = Mat::zeros(0, 0);
    matmul_into(aa, bb, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
        let mut out = Mat::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn matmul_matches_naive_over_odd_shapes() {
        let mut rng = 123456789u64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng >> 33) as f64 / (1u64 << 31) as f64) - 0.5
        };
        for &(m, k, n) in &[(1, 1, 1), (3, 5, 7), (41, 256, 33), (2, 64, 65), (7, 129, 32)] {
            let a = Mat::from_vec(m, k, (0..m * k).map(|_| next()).collect()).unwrap();
            let b = Mat::from_vec(k, n, (0..k * n).map(|_| next()).collect()).unwrap();
            let got = matmul_t(&a, &b, false, false);
            let want = naive_matmul(&a, &b);
            for (g, w) in got.data().iter().zip(want.data()) {
                assert!((g - w).abs() <= 1e-12 * (1.0 + w.abs()), "{g} vs {w}");
            }
        }
    }

    #[test]
    fn transpose_flags_agree_with_explicit_transposition() {
        let a = Mat::from_vec(2, 3, vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Mat::from_vec(2, 4, vec![1.0f64, 0.5, -1.0, 2.0, 0.0, 1.0, 3.0, -2.0]).unwrap();
        let via_flag = matmul_t(&a, &b, true, false); // (3x2)*(2x4)
        let via_copy = matmul_t(&a.transposed(), &b, false, false);
        assert_eq!(via_flag, via_copy);

        let c = Mat::from_vec(5, 3, (0..15).map(|v| v as f64).collect()).unwrap();
        let via_flag = matmul_t(&a, &c, false, true); // (2x3)*(3x5)
        let via_copy = matmul_t(&a, &c.transposed(), false, false);
        assert_eq!(via_flag, via_copy);
    }

    #[test]
    fn f32_storage_accumulates_in_f64() {
        // Summing 1e-4 over 100k terms in pure f32 drifts visibly; blocked
        // f64 accumulation keeps the result at f32 rounding of the true sum.
        let k = 100_000;
        let a = Mat::from_vec(1, k, vec![1e-4f32; k]).unwrap();
        let b = Mat::from_vec(k, 1, vec![1.0f32; k]).unwrap();
        let out = matmul_t(&a, &b, false, false);
        let got = out.get(0, 0);
        assert!((got - 10.0).abs() < 1e-3, "got {got}");
    }
}
