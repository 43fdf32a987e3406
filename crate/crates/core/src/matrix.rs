//! Dense row-major matrices and the handful of kernels the solvers need.
//!
//! Reductions always run in index order so that results are bit-identical
//! no matter how callers split work across threads.

use std::fmt;

use crate::error::{Error, Result};

/// Default relative tolerance for [`DenseMatrix::spectral_norm`].
pub const POWER_TOL: f64 = 1e-9;
/// Default iteration cap for [`DenseMatrix::spectral_norm`].
pub const POWER_MAX_ITER: usize = 100;

#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major data, rejecting bad lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(value.is_finite());
        DenseMatrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Panics if `f` produces a non-finite value.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let x = f(i, j);
                assert!(x.is_finite(), "non-finite value at ({i}, {j})");
                data.push(x);
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    op: "from_rows",
                    left: (i, row.len()),
                    right: (0, n_cols),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(n_rows, n_cols, data)
    }

    /// Builds an `rows x columns.len()` matrix from column vectors.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let mut data = vec![0.0; rows * cols];
        for (j, col) in columns.iter().enumerate() {
            if col.len() != rows {
                return Err(Error::LengthMismatch {
                    what: "column",
                    expected: rows,
                    got: col.len(),
                });
            }
            for (i, &x) in col.iter().enumerate() {
                data[i * cols + j] = x;
            }
        }
        Self::new(rows, cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Panics on a non-finite value.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(value.is_finite(), "non-finite value at ({i}, {j})");
        self.data[i * self.cols + j] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        assert_eq!(values.len(), self.rows);
        for (i, &x) in values.iter().enumerate() {
            self.set(i, j, x);
        }
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            for l in 0..k {
                let a = self.data[i * k + l];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[l * n..(l + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        DenseMatrix::new(m, n, out)
    }

    /// `self - other`, entrywise.
    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    fn zip_with(
        &self,
        other: &DenseMatrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<DenseMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        DenseMatrix::new(self.rows, self.cols, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<DenseMatrix> {
        DenseMatrix::new(
            self.rows,
            self.cols,
            self.data.iter().map(|&x| f(x)).collect(),
        )
    }

    pub fn scale(&self, factor: f64) -> Result<DenseMatrix> {
        self.map(|x| x * factor)
    }

    /// Elementwise `max(x, 0)`. Negative zero maps to positive zero.
    pub fn project_nonneg(&self) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| project_scalar(x)).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        sum_squares(&self.data).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// First entry that is negative, if any.
    pub fn find_negative(&self) -> Option<(usize, usize, f64)> {
        self.data
            .iter()
            .position(|&x| x < 0.0)
            .map(|p| (p / self.cols, p % self.cols, self.data[p]))
    }

    /// Largest eigenvalue of a symmetric positive semidefinite matrix by
    /// power iteration from the normalized all-ones vector.
    ///
    /// Stops once successive Rayleigh estimates agree to `tol` relative, or
    /// after `max_iter` multiplications. Returns 0 for the zero matrix.
    pub fn spectral_norm(&self, tol: f64, max_iter: usize) -> Result<f64> {
        if self.rows != self.cols {
            return Err(Error::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(power_iteration(&self.data, self.rows, tol, max_iter))
    }

    /// Rescales every column to unit Euclidean norm and returns the original
    /// norms. Multiplying row `k` of the paired coefficient matrix by
    /// `scales[k]` keeps the product unchanged.
    pub fn normalize_columns(&self) -> Result<(DenseMatrix, Vec<f64>)> {
        let scales: Vec<f64> = (0..self.cols)
            .map(|j| {
                let mut acc = 0.0;
                for i in 0..self.rows {
                    let x = self.get(i, j);
                    acc += x * x;
                }
                acc.sqrt()
            })
            .collect();
        let zero: Vec<usize> = scales
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 0.0)
            .map(|(j, _)| j)
            .collect();
        if !zero.is_empty() {
            return Err(Error::ZeroColumns(zero));
        }
        let mut out = self.clone();
        for row in out.data.chunks_mut(self.cols) {
            for (x, s) in row.iter_mut().zip(&scales) {
                *x /= s;
            }
        }
        Ok((out, scales))
    }

    /// Multiplies row `k` by `factors[k]`.
    pub fn scale_rows(&self, factors: &[f64]) -> Result<DenseMatrix> {
        if factors.len() != self.rows {
            return Err(Error::LengthMismatch {
                what: "row factors",
                expected: self.rows,
                got: factors.len(),
            });
        }
        let mut out = self.clone();
        for (i, &f) in factors.iter().enumerate() {
            for x in &mut out.data[i * self.cols..(i + 1) * self.cols] {
                *x *= f;
            }
        }
        Ok(out)
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(i)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

#[inline]
pub(crate) fn project_scalar(x: f64) -> f64 {
    // `x > 0.0` is false for -0.0, so signed zeros normalize to +0.0.
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub(crate) fn sum_squares(a: &[f64]) -> f64 {
    let mut acc = 0.0;
    for x in a {
        acc += x * x;
    }
    acc
}

/// `out = A x` for a row-major `n x n` matrix.
#[inline]
pub(crate) fn symv(a: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
    for i in 0..n {
        out[i] = dot(&a[i * n..(i + 1) * n], x);
    }
}

pub(crate) fn power_iteration(a: &[f64], n: usize, tol: f64, max_iter: usize) -> f64 {
    if n == 0 || a.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut av = vec![0.0; n];
    let mut estimate: f64 = 0.0;
    for _ in 0..max_iter.max(1) {
        symv(a, n, &v, &mut av);
        let rayleigh = dot(&v, &av);
        let norm = sum_squares(&av).sqrt();
        if norm == 0.0 {
            // start vector in the null space
            return estimate.max(rayleigh);
        }
        for (vi, &x) in v.iter_mut().zip(&av) {
            *vi = x / norm;
        }
        let done = (rayleigh - estimate).abs() <= tol * rayleigh.abs();
        estimate = rayleigh;
        if done {
            break;
        }
    }
    // One more Rayleigh quotient on the final vector.
    symv(a, n, &v, &mut av);
    estimate.max(dot(&v, &av))
}
