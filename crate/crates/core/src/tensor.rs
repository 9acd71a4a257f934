//! Dense row-major matrices and the handful of kernels the model needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major `rows × cols` matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("from_vec", (rows, cols), (data.len(), 1)));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. Panics on ragged input; meant
    /// for literals in tests and examples.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
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

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on 0; a 0-column matrix has no meaningful rows
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::dim("matmul", self.shape(), other.shape()));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        gemm(
            self,
            false,
            other,
            false,
            &mut out,
        );
        Ok(out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::dim("t_matmul", self.shape(), other.shape()));
        }
        let mut out = Self::zeros(self.cols, other.cols);
        gemm(self, true, other, false, &mut out);
        Ok(out)
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::dim("matmul_t", self.shape(), other.shape()));
        }
        let mut out = Self::zeros(self.rows, other.rows);
        gemm(self, false, other, true, &mut out);
        Ok(out)
    }

    fn check_same(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dim(op, self.shape(), other.shape()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.lincomb(1.0, other, -1.0)
    }

    /// `a·self + b·other`.
    pub fn lincomb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.check_same(other, "lincomb")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// In-place `self += scale · other`.
    pub fn axpy(&mut self, scale: f64, other: &Self) -> Result<()> {
        self.check_same(other, "axpy")?;
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += scale * y;
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Adds a `1 × cols` bias row to every row.
    pub fn add_row(&self, bias: &Self) -> Result<Self> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(Error::dim("add_row", self.shape(), bias.shape()));
        }
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.cols.max(1)) {
            for (x, b) in row.iter_mut().zip(&bias.data) {
                *x += b;
            }
        }
        Ok(out)
    }

    /// Column sums as a `1 × cols` matrix.
    pub fn col_sums(&self) -> Self {
        let mut out = Self::zeros(1, self.cols);
        for row in self.row_iter() {
            for (acc, v) in out.data.iter_mut().zip(row) {
                *acc += v;
            }
        }
        out
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Selects rows by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Scalar value of a `1 × 1` matrix.
    pub fn scalar(&self) -> f64 {
        debug_assert_eq!(self.shape(), (1, 1));
        self.data[0]
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl From<DenseMatrix> for std::borrow::Cow<'_, DenseMatrix> {
    fn from(m: DenseMatrix) -> Self {
        std::borrow::Cow::Owned(m)
    }
}

impl<'a> From<&'a DenseMatrix> for std::borrow::Cow<'a, DenseMatrix> {
    fn from(m: &'a DenseMatrix) -> Self {
        std::borrow::Cow::Borrowed(m)
    }
}

/// `out = op(a) · op(b)`; shapes are validated by the callers.
fn gemm(a: &DenseMatrix, ta: bool, b: &DenseMatrix, tb: bool, out: &mut DenseMatrix) {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let n = if tb { b.rows } else { b.cols };
    debug_assert_eq!(out.shape(), (m, n));
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.data.fill(0.0);
        return;
    }
    let (rsa, csa) = if ta { (1, a.cols) } else { (a.cols, 1) };
    let (rsb, csb) = if tb { (1, b.cols) } else { (b.cols, 1) };
    // SAFETY: strides describe views inside `a.data`, `b.data` and `out.data`,
    // whose lengths are rows*cols with the dimensions checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa as isize,
            csa as isize,
            b.data.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Elementwise `max(0, x)`; the subgradient at 0 is taken as 0.
pub fn relu(m: &DenseMatrix) -> DenseMatrix {
    m.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Numerically stable softmax over each row.
pub fn row_softmax(m: &DenseMatrix) -> DenseMatrix {
    let mut out = m.clone();
    for i in 0..out.rows {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Index of the largest entry in each row, ties going to the lowest index.
pub fn row_argmax(m: &DenseMatrix) -> Vec<usize> {
    m.row_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
