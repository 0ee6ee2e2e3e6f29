//! Small dense row-major matrices and a pivoted linear solver.
//!
//! Sizes in this crate are tiny (at most a few dozen columns for regression
//! problems, `B x D` for the embedding table), so no BLAS is involved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data has {} elements, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        let cols = self.cols;
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    /// Row vector times matrix: `x (1 x rows) * self (rows x cols)`.
    pub fn vec_mul(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (r, &xr) in x.iter().enumerate() {
            if xr == T::zero() {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(self.row(r)) {
                *o += xr * m;
            }
        }
        out
    }

    /// Matrix times column vector: `self (rows x cols) * y (cols)`.
    pub fn mul_vec(&self, y: &[T]) -> Vec<T> {
        debug_assert_eq!(y.len(), self.cols);
        (0..self.rows).map(|r| crate::scalar::dot(self.row(r), y)).collect()
    }

    /// Adds `scale * a b^T` to the matrix.
    pub fn add_outer(&mut self, scale: T, a: &[T], b: &[T]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            let s = scale * ar;
            if s == T::zero() {
                continue;
            }
            for (m, &bc) in self.row_mut(r).iter_mut().zip(b) {
                *m += s * bc;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

/// Solves `a x = b` for square `a` by Gaussian elimination with partial pivoting.
pub fn solve<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::invalid(format!(
            "solve: matrix is {}x{}, rhs has {} entries",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    let scale = m.as_slice().iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let tiny = scale * T::epsilon() * T::from_usize_lossy(n.max(1)) * T::lit(16.0);

    for col in 0..n {
        let (pivot, pivot_abs) = (col..n)
            .map(|r| (r, m.get(r, col).abs()))
            .fold((col, T::neg_infinity()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pivot_abs > tiny) {
            return Err(Error::Singular(format!("pivot {col} of {n} vanished")));
        }
        if pivot != col {
            for c in 0..n {
                let tmp = m.get(col, c);
                m.set(col, c, m.get(pivot, c));
                m.set(pivot, c, tmp);
            }
            rhs.swap(col, pivot);
        }
        let p = m.get(col, col);
        for r in col + 1..n {
            let factor = m.get(r, col) / p;
            if factor == T::zero() {
                continue;
            }
            for c in col..n {
                let v = m.get(r, c) - factor * m.get(col, c);
                m.set(r, c, v);
            }
            let v = rhs[r] - factor * rhs[col];
            rhs[r] = v;
        }
    }

    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let mut acc = rhs[r];
        for c in r + 1..n {
            acc -= m.get(r, c) * x[c];
        }
        x[r] = acc / m.get(r, r);
    }
    Ok(x)
}

/// Weighted normal equations `(X^T W X + ridge I) beta = X^T W y`.
///
/// `design` holds one row per observation. The ridge term is added to every
/// coefficient; callers that need an unpenalised intercept centre first.
pub fn weighted_least_squares<T: Scalar>(
    design: &Matrix<T>,
    targets: &[T],
    weights: &[T],
    ridge: T,
) -> Result<Vec<T>> {
    let p = design.cols();
    let mut gram = Matrix::zeros(p, p);
    let mut rhs = vec![T::zero(); p];
    for (i, (&y, &w)) in targets.iter().zip(weights).enumerate() {
        let row = design.row(i);
        gram.add_outer(w, row, row);
        for (r, &x) in rhs.iter_mut().zip(row) {
            *r += w * x * y;
        }
    }
    for j in 0..p {
        let v = gram.get(j, j) + ridge;
        gram.set(j, j, v);
    }
    solve(&gram, &rhs)
}
