//! Dense real linear algebra: thin SVD, symmetric eigen-solve, rowspace
//! projection, Frobenius norms and best rank-k truncation.

mod eigen;
mod matrix;
mod svd;

pub use eigen::{sym_eigen, SymEigen};
pub use matrix::DenseMatrix;
pub(crate) use matrix::gram_of_rows;
pub use svd::{svd_thin, SvdFactors};

use thiserror::Error;

/// Orthonormality tolerance for SVD factors (max-abs entry of `UᵀU − I`).
pub const TAU_ORTH: f64 = 1e-10;
/// Relative reconstruction tolerance for SVD factors.
pub const TAU_RECON: f64 = 1e-10;
/// Squared singular values of `X` below this fraction of the largest are
/// dropped when forming `(XXᵀ)⁺`.
pub const PINV_CUTOFF: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is empty")]
    Empty,
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("buffer of length {len} cannot hold a {rows}x{cols} matrix")]
    BufferLength { rows: usize, cols: usize, len: usize },
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("no convergence after {sweeps} sweeps (residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },
}

/// Sum of squared entries.
pub fn frob_sq(a: &DenseMatrix) -> f64 {
    a.as_slice().iter().map(|v| v * v).sum()
}

/// Best rank-`k` approximation `U_k·diag(s_1..s_k)·V_kᵀ`; `k = 0` gives the
/// zero matrix of the same shape.
pub fn best_rank_k(a: &DenseMatrix, k: usize) -> Result<DenseMatrix, LinalgError> {
    if k == 0 || a.is_empty() {
        return Ok(DenseMatrix::zeros(a.rows(), a.cols()));
    }
    Ok(svd_thin(a)?.reconstruct_rank(k))
}

/// Orthonormal basis (as rows) of the rowspace of `x`, using the
/// pseudoinverse cutoff. Empty when `x` is zero.
pub fn rowspace_basis(x: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if x.is_empty() || x.as_slice().iter().all(|&v| v == 0.0) {
        return Ok(DenseMatrix::zeros(0, x.cols()));
    }
    let f = svd_thin(x)?;
    let top = f.s[0] * f.s[0];
    let keep = f.s.iter().take_while(|&&s| s * s >= top * PINV_CUTOFF).count();
    let mut basis = DenseMatrix::zeros(keep, x.cols());
    for j in 0..keep {
        for c in 0..x.cols() {
            basis.set(j, c, f.v.get(c, j));
        }
    }
    Ok(basis)
}

/// Projects every row of `a` onto the rowspace of `x`
/// (`a·xᵀ·(x·xᵀ)⁺·x`).
pub fn project_rowspace(a: &DenseMatrix, x: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if a.cols() != x.cols() {
        return Err(LinalgError::ShapeMismatch {
            op: "project_rowspace",
            left: a.shape(),
            right: x.shape(),
        });
    }
    let basis = rowspace_basis(x)?;
    Ok(project_onto_basis(a, &basis))
}

/// Projects rows of `a` onto the span of the orthonormal rows of `basis`.
pub(crate) fn project_onto_basis(a: &DenseMatrix, basis: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(a.rows(), a.cols());
    for i in 0..a.rows() {
        let row = a.row(i);
        let dst = out.row_mut(i);
        for b in basis.row_iter() {
            let coef: f64 = row.iter().zip(b).map(|(x, y)| x * y).sum();
            for (o, bv) in dst.iter_mut().zip(b) {
                *o += coef * bv;
            }
        }
    }
    out
}

/// `‖a − π_X(a)‖²_F`, via Pythagoras on an orthonormal basis.
pub fn projection_residual_sq(a: &DenseMatrix, x: &DenseMatrix) -> Result<f64, LinalgError> {
    let p = project_rowspace(a, x)?;
    Ok(frob_sq(&a.sub(&p)?))
}

/// Extremes of `‖a·x‖² − ‖q·x‖²` over unit vectors `x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapExtremes {
    pub max: f64,
    pub min: f64,
}

/// Largest and smallest eigenvalue of `aᵀa − qᵀq`.
pub fn directional_norm_gap(a: &DenseMatrix, q: &DenseMatrix) -> Result<GapExtremes, LinalgError> {
    if a.cols() != q.cols() {
        return Err(LinalgError::ShapeMismatch {
            op: "directional_norm_gap",
            left: a.shape(),
            right: q.shape(),
        });
    }
    gap_from_grams(&crate::par::gram(a, crate::par::Execution::default()), &q.gram())
}

/// Same as [`directional_norm_gap`] given precomputed Gram matrices.
pub fn gap_from_grams(ga: &DenseMatrix, gq: &DenseMatrix) -> Result<GapExtremes, LinalgError> {
    if ga.cols() == 0 {
        return Ok(GapExtremes { max: 0.0, min: 0.0 });
    }
    let e = sym_eigen(&ga.sub(gq)?)?;
    Ok(GapExtremes { max: e.values[0], min: *e.values.last().unwrap() })
}

/// Largest value of `‖a·x‖² − ‖q·x‖²` over unit `x`.
pub fn directional_norm_gap_max(a: &DenseMatrix, q: &DenseMatrix) -> Result<f64, LinalgError> {
    Ok(directional_norm_gap(a, q)?.max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frob_sq_examples() {
        assert_eq!(frob_sq(&DenseMatrix::zeros(3, 2)), 0.0);
        assert_eq!(frob_sq(&DenseMatrix::identity(4)), 4.0);
        assert_eq!(frob_sq(&DenseMatrix::from_rows(&[[3.0, 4.0]]).unwrap()), 25.0);
    }

    #[test]
    fn best_rank_k_truncates_diagonal() {
        let a = DenseMatrix::from_diag(&[3.0, 2.0, 1.0]);
        let a2 = best_rank_k(&a, 2).unwrap();
        let want = DenseMatrix::from_diag(&[3.0, 2.0, 0.0]);
        assert!(a2.sub(&want).unwrap().max_abs() < 1e-14);
        assert_eq!(best_rank_k(&a, 0).unwrap(), DenseMatrix::zeros(3, 3));
        let full = best_rank_k(&a, 5).unwrap();
        assert!(full.sub(&a).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn axis_projection() {
        let a = DenseMatrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let x = DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let p = project_rowspace(&a, &x).unwrap();
        assert_eq!(p, DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap());
    }

    #[test]
    fn projection_onto_zero_is_zero() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let p = project_rowspace(&a, &DenseMatrix::zeros(2, 2)).unwrap();
        assert_eq!(p, DenseMatrix::zeros(2, 2));
        assert!(project_rowspace(&a, &DenseMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn orthonormal_rows_project_by_transpose() {
        let s = 0.5f64.sqrt();
        let x = DenseMatrix::from_rows(&[[s, s, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let a = DenseMatrix::from_rows(&[[1.0, 2.0, 3.0], [-1.0, 0.5, 2.0]]).unwrap();
        let direct = a.matmul(&x.transpose()).unwrap().matmul(&x).unwrap();
        let p = project_rowspace(&a, &x).unwrap();
        assert!(p.sub(&direct).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn gap_of_identical_matrices_is_zero() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [0.0, 3.0]]).unwrap();
        let g = directional_norm_gap(&a, &a).unwrap();
        assert_eq!(g, GapExtremes { max: 0.0, min: 0.0 });
    }

    #[test]
    fn gap_against_empty_sketch() {
        let a = DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let g = directional_norm_gap(&a, &DenseMatrix::zeros(1, 2)).unwrap();
        assert_eq!(g.max, 1.0);
        assert_eq!(g.min, 0.0);
    }
}
