//! Dense row-major matrices and the small symmetric solves used by ALS and
//! the influence computations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Row-major dense matrix. Rows are latent vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(cols: usize, rows: &[Vec<f64>]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "row length mismatch");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact on an empty column count would panic
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(self.rows)
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Appends a row, returning its index.
    pub fn push_row(&mut self, row: &[f64]) -> usize {
        assert_eq!(row.len(), self.cols, "row length mismatch");
        self.data.extend_from_slice(row);
        self.rows += 1;
        self.rows - 1
    }

    pub fn truncate_rows(&mut self, rows: usize) {
        if rows < self.rows {
            self.rows = rows;
            self.data.truncate(rows * self.cols);
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `acc += w * v vᵀ` on a d×d row-major buffer.
#[inline]
pub fn add_outer(acc: &mut [f64], v: &[f64], w: f64) {
    let d = v.len();
    for a in 0..d {
        let va = w * v[a];
        let row = &mut acc[a * d..(a + 1) * d];
        for (b, vb) in v.iter().enumerate() {
            row[b] += va * vb;
        }
    }
}

/// Lower triangle only of `acc += w * v vᵀ`; pair with
/// [`mirror_lower`] before handing the buffer to a solver.
#[inline]
pub fn add_outer_lower(acc: &mut [f64], v: &[f64], w: f64) {
    let d = v.len();
    for a in 0..d {
        let va = w * v[a];
        let row = &mut acc[a * d..a * d + a + 1];
        for (b, vb) in v[..=a].iter().enumerate() {
            row[b] += va * vb;
        }
    }
}

/// Copies the lower triangle of a d×d row-major buffer onto the upper one.
pub fn mirror_lower(acc: &mut [f64], d: usize) {
    for a in 0..d {
        for b in a + 1..d {
            acc[a * d + b] = acc[b * d + a];
        }
    }
}

#[inline]
pub fn add_scaled(acc: &mut [f64], v: &[f64], w: f64) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += w * b;
    }
}

/// Adds `lambda` to the diagonal of a d×d row-major buffer.
#[inline]
pub fn add_ridge(acc: &mut [f64], d: usize, lambda: f64) {
    for a in 0..d {
        acc[a * d + a] += lambda;
    }
}

/// Cholesky factor of a symmetric positive-definite d×d system.
pub struct SpdFactor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl SpdFactor {
    /// Returns `None` if the matrix is not numerically positive definite.
    pub fn new(gram: &[f64], d: usize) -> Option<Self> {
        let m = DMatrix::from_row_slice(d, d, gram);
        m.cholesky().map(|chol| SpdFactor { chol })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(rhs);
        self.chol.solve(&b).as_slice().to_vec()
    }
}

/// Solves the symmetric positive-definite system `gram · x = rhs`.
///
/// Falls back to LU if Cholesky rejects the matrix, which only happens
/// when rounding has destroyed positive definiteness.
pub fn spd_solve(gram: &[f64], rhs: &[f64]) -> Vec<f64> {
    let d = rhs.len();
    match SpdFactor::new(gram, d) {
        Some(f) => f.solve(rhs),
        None => {
            let m = DMatrix::from_row_slice(d, d, gram);
            let b = DVector::from_column_slice(rhs);
            m.lu()
                .solve(&b)
                .map(|x| x.as_slice().to_vec())
                .unwrap_or_else(|| vec![f64::NAN; d])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        // [[4,1],[1,3]] x = [1,2]  =>  x = [1/11, 7/11]
        let x = spd_solve(&[4.0, 1.0, 1.0, 3.0], &[1.0, 2.0]);
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn outer_product_accumulates() {
        let mut acc = vec![0.0; 4];
        add_outer(&mut acc, &[1.0, 2.0], 0.5);
        assert_eq!(acc, vec![0.5, 1.0, 1.0, 2.0]);
        add_ridge(&mut acc, 2, 1.0);
        assert_eq!(acc, vec![1.5, 1.0, 1.0, 3.0]);

        let mut low = vec![0.0; 4];
        add_outer_lower(&mut low, &[1.0, 2.0], 0.5);
        assert_eq!(low, vec![0.5, 0.0, 1.0, 2.0]);
        mirror_lower(&mut low, 2);
        assert_eq!(low, vec![0.5, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn push_and_truncate_rows() {
        let mut m = Matrix::zeros(1, 2);
        assert_eq!(m.push_row(&[1.0, 2.0]), 1);
        assert_eq!(m.row(1), &[1.0, 2.0]);
        m.truncate_rows(1);
        assert_eq!(m.nrows(), 1);
        assert_eq!(m.as_slice(), &[0.0, 0.0]);
    }
}
