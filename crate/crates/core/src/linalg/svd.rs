//! Thin SVD: Householder QR of the tall orientation followed by one-sided
//! (Hestenes) Jacobi on the square triangular factor.

use super::{DenseMatrix, LinalgError};

const MAX_SWEEPS: usize = 60;

/// Thin singular value decomposition `a = u · diag(s) · vᵀ`.
///
/// `u` is `rows × r`, `v` is `cols × r` with `r = min(rows, cols)`, and `s`
/// is non-increasing. Columns belonging to zero singular values are still
/// orthonormal, so `u` and `v` always have orthonormal columns.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// `u · diag(s) · vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        self.reconstruct_rank(self.s.len())
    }

    /// `u_k · diag(s_k) · v_kᵀ` using the leading `k` triples.
    pub fn reconstruct_rank(&self, k: usize) -> DenseMatrix {
        let (m, n) = (self.u.rows(), self.v.rows());
        let k = k.min(self.s.len());
        let mut out = DenseMatrix::zeros(m, n);
        for j in 0..k {
            let sj = self.s[j];
            if sj == 0.0 {
                continue;
            }
            for i in 0..m {
                let coef = self.u.get(i, j) * sj;
                if coef == 0.0 {
                    continue;
                }
                let row = out.row_mut(i);
                for (c, o) in row.iter_mut().enumerate() {
                    *o += coef * self.v.get(c, j);
                }
            }
        }
        out
    }

    /// Right singular vector `j` as a contiguous vector.
    pub fn right_vector(&self, j: usize) -> Vec<f64> {
        (0..self.v.rows()).map(|i| self.v.get(i, j)).collect()
    }
}

/// Thin SVD of `a`.
pub fn svd_thin(a: &DenseMatrix) -> Result<SvdFactors, LinalgError> {
    if a.is_empty() {
        return Err(LinalgError::Empty);
    }
    if let Some(pos) = a.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite { row: pos / a.cols(), col: pos % a.cols() });
    }
    if a.rows() >= a.cols() {
        tall_svd(a)
    } else {
        let t = tall_svd(&a.transpose())?;
        Ok(SvdFactors { u: t.v, s: t.s, v: t.u })
    }
}

/// Column-major scratch matrix.
struct ColMajor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ColMajor {
    fn from_dense(a: &DenseMatrix) -> Self {
        let (rows, cols) = a.shape();
        let mut data = vec![0.0; rows * cols];
        for i in 0..rows {
            for (j, &v) in a.row(i).iter().enumerate() {
                data[j * rows + i] = v;
            }
        }
        Self { rows, cols, data }
    }

    fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { rows: n, cols: n, data }
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn two_cols_mut(&mut self, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
        debug_assert!(p < q);
        let (lo, hi) = self.data.split_at_mut(q * self.rows);
        (&mut lo[p * self.rows..(p + 1) * self.rows], &mut hi[..self.rows])
    }

    fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for j in 0..self.cols {
            for (i, &v) in self.col(j).iter().enumerate() {
                out.set(i, j, v);
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Householder QR of a tall `m × n` matrix: returns (Q thin `m × n`, R `n × n`).
fn householder_qr(a: &DenseMatrix) -> (ColMajor, ColMajor) {
    let (m, n) = a.shape();
    let mut w = ColMajor::from_dense(a);
    let mut reflectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);

    for k in 0..n {
        let x = &w.col(k)[k..];
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vnorm_sq = dot(&v, &v);
        if vnorm_sq == 0.0 {
            reflectors.push(None);
            continue;
        }
        for j in k..n {
            let col = &mut w.col_mut(j)[k..];
            let f = 2.0 * dot(&v, col) / vnorm_sq;
            for (c, vi) in col.iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
        // exact zeros below the diagonal
        let col = w.col_mut(k);
        col[k] = alpha;
        for c in col[k + 1..].iter_mut() {
            *c = 0.0;
        }
        reflectors.push(Some(v));
    }

    let mut r = ColMajor { rows: n, cols: n, data: vec![0.0; n * n] };
    for j in 0..n {
        for i in 0..=j {
            r.data[j * n + i] = w.col(j)[i];
        }
    }

    let mut q = ColMajor { rows: m, cols: n, data: vec![0.0; m * n] };
    for j in 0..n {
        q.data[j * m + j] = 1.0;
    }
    for (k, v) in reflectors.iter().enumerate().rev() {
        let Some(v) = v else { continue };
        let vnorm_sq = dot(v, v);
        for j in 0..n {
            let col = &mut q.col_mut(j)[k..];
            let f = 2.0 * dot(v, col) / vnorm_sq;
            if f == 0.0 {
                continue;
            }
            for (c, vi) in col.iter_mut().zip(v) {
                *c -= f * vi;
            }
        }
    }
    (q, r)
}

fn tall_svd(a: &DenseMatrix) -> Result<SvdFactors, LinalgError> {
    let (m, n) = a.shape();
    let (q, mut w) = householder_qr(a);
    let mut v = ColMajor::identity(n);
    let tol = f64::EPSILON * (n as f64).max(1.0);
    // columns below this squared norm are rounding noise and count as zero
    let frob_sq: f64 = w.data.iter().map(|x| x * x).sum();
    let negligible = frob_sq * (tol * tol);

    let mut converged = n < 2;
    let mut worst = 0.0_f64;
    for _ in 0..MAX_SWEEPS {
        worst = 0.0;
        let mut rotated = false;
        for p in 0..n {
            for qi in p + 1..n {
                let (wp, wq) = w.two_cols_mut(p, qi);
                let alpha = dot(wp, wp);
                let beta = dot(wq, wq);
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let gamma = dot(wp, wq);
                let off = gamma.abs() / (alpha.sqrt() * beta.sqrt());
                worst = worst.max(off);
                if off <= tol {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(wp, wq, c, s);
                let (vp, vq) = v.two_cols_mut(p, qi);
                rotate(vp, vq, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence { sweeps: MAX_SWEEPS, residual: worst });
    }

    let mut order: Vec<(usize, f64)> = (0..n)
        .map(|j| {
            let sq = dot(w.col(j), w.col(j));
            (j, if sq <= negligible { 0.0 } else { sq.sqrt() })
        })
        .collect();
    // stable: equal singular values keep column order
    order.sort_by(|x, y| y.1.total_cmp(&x.1));

    let s: Vec<f64> = order.iter().map(|&(_, sv)| sv).collect();
    let mut u_small = ColMajor { rows: n, cols: n, data: vec![0.0; n * n] };
    let mut v_sorted = ColMajor { rows: n, cols: n, data: vec![0.0; n * n] };
    let mut missing = Vec::new();
    for (dst, &(src, sv)) in order.iter().enumerate() {
        v_sorted.col_mut(dst).copy_from_slice(v.col(src));
        if sv > 0.0 {
            let inv = 1.0 / sv;
            for (o, &x) in u_small.col_mut(dst).iter_mut().zip(w.col(src)) {
                *o = x * inv;
            }
        } else {
            missing.push(dst);
        }
    }
    complete_basis(&mut u_small, &missing);

    // U = Q · U_small
    let mut u = DenseMatrix::zeros(m, n);
    for j in 0..n {
        let uc = u_small.col(j);
        for (p, &coef) in uc.iter().enumerate() {
            if coef == 0.0 {
                continue;
            }
            for (i, &qv) in q.col(p).iter().enumerate() {
                let cur = u.get(i, j);
                u.set(i, j, cur + qv * coef);
            }
        }
    }

    Ok(SvdFactors { u, s, v: v_sorted.to_dense() })
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// Fills the listed columns with unit vectors orthogonal to every other
/// column (two passes of modified Gram-Schmidt over the standard basis).
fn complete_basis(u: &mut ColMajor, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let n = u.rows;
    let mut filled: Vec<usize> = (0..u.cols).filter(|j| !missing.contains(j)).collect();
    let mut candidate = 0;
    for &target in missing {
        while candidate < n {
            let mut e = vec![0.0; n];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &j in &filled {
                    let c = u.col(j);
                    let proj = dot(&e, c);
                    for (ei, ci) in e.iter_mut().zip(c) {
                        *ei -= proj * ci;
                    }
                }
            }
            let norm = dot(&e, &e).sqrt();
            if norm > 0.5 {
                for (o, ei) in u.col_mut(target).iter_mut().zip(&e) {
                    *o = ei / norm;
                }
                filled.push(target);
                break;
            }
        }
    }
}
