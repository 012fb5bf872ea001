//! Cyclic Jacobi eigensolver for small dense symmetric matrices.

use super::{DenseMatrix, LinalgError};

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix; eigenvalues sorted
/// non-increasing, `vectors` holds the matching eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

/// Eigen-decomposition of the symmetric part of `a`.
pub fn sym_eigen(a: &DenseMatrix) -> Result<SymEigen, LinalgError> {
    let n = a.rows();
    if n != a.cols() {
        return Err(LinalgError::ShapeMismatch { op: "sym_eigen", left: a.shape(), right: a.shape() });
    }
    let mut m = a.clone();
    // symmetrise against round-off in the caller's accumulation
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (m.get(i, j) + m.get(j, i));
            m.set(i, j, avg);
            m.set(j, i, avg);
        }
    }
    let mut v = DenseMatrix::identity(n);
    let scale = m.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut converged = false;
    let mut off = 0.0;
    for _ in 0..MAX_SWEEPS {
        off = off_diagonal_norm(&m);
        if off <= f64::EPSILON * scale || scale == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_finite() {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                } else {
                    0.0
                };
                if t == 0.0 {
                    // apq negligible against the diagonal gap
                    m.set(p, q, 0.0);
                    m.set(q, p, 0.0);
                    continue;
                }
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                m.set(p, q, 0.0);
                m.set(q, p, 0.0);
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence { sweeps: MAX_SWEEPS, residual: off });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m.get(y, y).total_cmp(&m.get(x, x)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, dst, v.get(k, src));
        }
    }
    Ok(SymEigen { values, vectors })
}

fn off_diagonal_norm(m: &DenseMatrix) -> f64 {
    let n = m.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m.get(i, j) * m.get(i, j);
            }
        }
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_closed_form() {
        let a = DenseMatrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = sym_eigen(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let v0 = [e.vectors.get(0, 0), e.vectors.get(1, 0)];
        assert!((v0[0].abs() - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((v0[0] - v0[1]).abs() < 1e-14);
    }

    #[test]
    fn diagonal_is_sorted() {
        let e = sym_eigen(&DenseMatrix::from_diag(&[1.0, -4.0, 3.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0, -4.0]);
    }

    #[test]
    fn indefinite_matrix_reconstructs() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0, 0.5], [2.0, -3.0, 1.0], [0.5, 1.0, 0.0]]).unwrap();
        let e = sym_eigen(&a).unwrap();
        let vd = e.vectors.matmul(&DenseMatrix::from_diag(&e.values)).unwrap();
        let back = vd.matmul(&e.vectors.transpose()).unwrap();
        assert!(back.sub(&a).unwrap().max_abs() < 1e-13);
        let trace: f64 = e.values.iter().sum();
        assert!((trace + 2.0).abs() < 1e-13);
    }
}
