//! Small shared helpers on top of `ndarray`/`nalgebra`.

use ndarray::{Array2, ArrayView1, ArrayView2};

/// Euclidean norm of a row view.
pub fn row_norm(row: ArrayView1<'_, f64>) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Dot product of two row views.
#[cfg_attr(not(test), allow(dead_code))]
pub fn row_dot(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Largest absolute entry, 0.0 for an empty matrix.
pub fn max_abs(m: ArrayView2<'_, f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

pub fn all_finite(m: ArrayView2<'_, f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn identity(d: usize) -> Array2<f64> {
    Array2::eye(d)
}

/// `ndarray` view -> `nalgebra` matrix (row-major copy).
pub fn to_nalgebra(m: ArrayView2<'_, f64>) -> nalgebra::DMatrix<f64> {
    let (rows, cols) = m.dim();
    nalgebra::DMatrix::from_fn(rows, cols, |i, j| m[[i, j]])
}

/// `nalgebra` matrix -> owned `ndarray` array.
pub fn from_nalgebra(m: &nalgebra::DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}
