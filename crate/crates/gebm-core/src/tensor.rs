//! Dense row-major `f64` matrices.
//!
//! Everything in this crate is a matrix: scalars are `1×1`, row vectors are
//! `1×n`, and a batch of `n` points in `R^d` is `n×d` with one point per row.
//! The type is deliberately small — just enough structure for the tape and
//! the model code — and all loops are plain and sequential so results are
//! bit-reproducible.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// A dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "Tensor::from_vec: {rows}x{cols} needs {} values, got {}",
            rows * cols,
            data.len()
        );
        Tensor { rows, cols, data }
    }

    /// An all-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// A `1×1` matrix holding one value.
    pub fn scalar(v: f64) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    /// A `1×n` row vector.
    pub fn row(values: &[f64]) -> Self {
        Tensor {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    /// An `n×1` column vector.
    pub fn col(values: &[f64]) -> Self {
        Tensor {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    /// The `n×n` identity.
    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    /// Row `r` as a slice.
    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Row `r` as a mutable slice.
    pub fn row_slice_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single value of a `1×1` matrix.
    pub fn scalar_value(&self) -> f64 {
        assert_eq!(self.shape(), (1, 1), "scalar_value on non-scalar tensor");
        self.data[0]
    }

    /// Extracts column `c` as a `Vec`.
    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Stacks a subset of rows (in the given order) into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Tensor {
        let mut out = Tensor::zeros(idx.len(), self.cols);
        for (k, &r) in idx.iter().enumerate() {
            out.data[k * self.cols..(k + 1) * self.cols].copy_from_slice(self.row_slice(r));
        }
        out
    }

    /// Keeps a subset of columns (in the given order).
    pub fn select_cols(&self, idx: &[usize]) -> Tensor {
        let mut out = Tensor::zeros(self.rows, idx.len());
        for r in 0..self.rows {
            let src = self.row_slice(r);
            for (k, &c) in idx.iter().enumerate() {
                out.data[r * idx.len() + k] = src[c];
            }
        }
        out
    }

    /// `self · otherᵀ` where `self` is `n×k` and `other` is `m×k`.
    ///
    /// This is the layout used by linear layers: activations `n×k` times a
    /// weight matrix stored as `(out, in)`.
    pub fn matmul_nt(&self, other: &Tensor) -> Tensor {
        assert_eq!(
            self.cols, other.cols,
            "matmul_nt: inner dims {} vs {}",
            self.cols, other.cols
        );
        let (n, k, m) = (self.rows, self.cols, other.rows);
        let mut out = Tensor::zeros(n, m);
        for i in 0..n {
            let a = self.row_slice(i);
            for j in 0..m {
                let b = other.row_slice(j);
                let mut s = 0.0;
                for t in 0..k {
                    s += a[t] * b[t];
                }
                out.data[i * m + j] = s;
            }
        }
        out
    }

    /// Plain matrix product `self · other` (`n×k` times `k×m`).
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(
            self.cols, other.rows,
            "matmul: inner dims {} vs {}",
            self.cols, other.rows
        );
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = Tensor::zeros(n, m);
        for i in 0..n {
            for t in 0..k {
                let a = self.data[i * k + t];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[t * m..(t + 1) * m];
                let orow = &mut out.data[i * m..(i + 1) * m];
                for j in 0..m {
                    orow[j] += a * brow[j];
                }
            }
        }
        out
    }

    /// `selfᵀ · other` (`self` is `n×k`, `other` is `n×m`; result `k×m`).
    pub fn matmul_tn(&self, other: &Tensor) -> Tensor {
        assert_eq!(
            self.rows, other.rows,
            "matmul_tn: outer dims {} vs {}",
            self.rows, other.rows
        );
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = Tensor::zeros(k, m);
        for i in 0..n {
            for t in 0..k {
                let a = self.data[i * k + t];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[i * m..(i + 1) * m];
                let orow = &mut out.data[t * m..(t + 1) * m];
                for j in 0..m {
                    orow[j] += a * brow[j];
                }
            }
        }
        out
    }

    /// Elementwise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// `self += alpha * other`, elementwise. Panics on shape mismatch.
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) {
        assert_eq!(self.shape(), other.shape(), "axpy shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += alpha * b;
        }
    }

    /// In-place scaling.
    pub fn scale(&mut self, alpha: f64) {
        for a in self.data.iter_mut() {
            *a *= alpha;
        }
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        math::l2_norm(&self.data)
    }

    /// Mean of each column as a `Vec` of length `cols`.
    pub fn col_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = self.row_slice(r);
            for (c, &v) in row.iter().enumerate() {
                m[c] += v;
            }
        }
        let n = self.rows.max(1) as f64;
        for v in m.iter_mut() {
            *v /= n;
        }
        m
    }

    /// Sample covariance of the rows (denominator `n-1`), as a `d×d` matrix.
    pub fn row_covariance(&self) -> Tensor {
        let d = self.cols;
        let mu = self.col_means();
        let mut cov = Tensor::zeros(d, d);
        if self.rows < 2 {
            return cov;
        }
        for r in 0..self.rows {
            let row = self.row_slice(r);
            for i in 0..d {
                let di = row[i] - mu[i];
                for j in 0..d {
                    cov.data[i * d + j] += di * (row[j] - mu[j]);
                }
            }
        }
        cov.scale(1.0 / (self.rows - 1) as f64);
        cov
    }
}
