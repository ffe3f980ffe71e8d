//! Minimal row-major matrix used by the decoder's forward and backward
//! passes. Shapes here are tiny (tens of rows, model width ≤ 128), so
//! plain loops beat any BLAS detour.

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn add_assign_at(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] += v;
    }

    /// `self · rhs`, `(n, k) · (k, m) -> (n, m)`.
    pub fn matmul(&self, rhs: &Mat<S>) -> Mat<S> {
        assert_eq!(self.cols, rhs.rows, "matmul inner dimension mismatch");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for inner in 0..self.cols {
                let a = self.get(r, inner);
                if a == S::zero() {
                    continue;
                }
                let rhs_row = rhs.row(inner);
                let out_row = out.row_mut(r);
                for c in 0..rhs.cols {
                    out_row[c] += a * rhs_row[c];
                }
            }
        }
        out
    }

    /// `selfᵀ · rhs`, `(n, k)ᵀ · (n, m) -> (k, m)` — the weight-gradient
    /// product `xᵀ · dy`.
    pub fn matmul_t_self(&self, rhs: &Mat<S>) -> Mat<S> {
        assert_eq!(self.rows, rhs.rows, "matmul_t_self row mismatch");
        let mut out = Mat::zeros(self.cols, rhs.cols);
        for n in 0..self.rows {
            let lhs_row = self.row(n);
            let rhs_row = rhs.row(n);
            for k in 0..self.cols {
                let a = lhs_row[k];
                if a == S::zero() {
                    continue;
                }
                let out_row = out.row_mut(k);
                for c in 0..rhs.cols {
                    out_row[c] += a * rhs_row[c];
                }
            }
        }
        out
    }

    /// `self · rhsᵀ`, `(n, k) · (m, k)ᵀ -> (n, m)` — the input-gradient
    /// product `dy · wᵀ`.
    pub fn matmul_t_rhs(&self, rhs: &Mat<S>) -> Mat<S> {
        assert_eq!(self.cols, rhs.cols, "matmul_t_rhs column mismatch");
        let mut out = Mat::zeros(self.rows, rhs.rows);
        for r in 0..self.rows {
            let lhs_row = self.row(r);
            for m in 0..rhs.rows {
                let rhs_row = rhs.row(m);
                let mut acc = S::zero();
                for k in 0..self.cols {
                    acc += lhs_row[k] * rhs_row[k];
                }
                out.set(r, m, acc);
            }
        }
        out
    }

    /// Add `b` to every row.
    pub fn add_row_bias(&mut self, b: &[S]) {
        assert_eq!(b.len(), self.cols, "bias length mismatch");
        for r in 0..self.rows {
            for (v, &bias) in self.row_mut(r).iter_mut().zip(b) {
                *v += bias;
            }
        }
    }

    /// Column sums — the bias gradient.
    pub fn col_sum(&self) -> Vec<S> {
        let mut out = vec![S::zero(); self.cols];
        for r in 0..self.rows {
            for (acc, &v) in out.iter_mut().zip(self.row(r)) {
                *acc += v;
            }
        }
        out
    }

    pub fn add_assign(&mut self, rhs: &Mat<S>) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}
