//! Evaluates every guarantee of a sketch against the exact input matrix.

use serde::Serialize;

use super::{FdSketch, SketchError};
use crate::linalg::{frob_sq, gap_from_grams, project_onto_basis, rowspace_basis, svd_thin, DenseMatrix};
use crate::par::{self, Execution};

/// Relative tolerance on identities (`‖A‖² − ‖Q‖² = ℓΔ`).
pub const IDENTITY_TOL: f64 = 1e-8;
/// Slack on inequalities, as a multiple of `‖A‖²_F`.
pub const INEQUALITY_SLACK: f64 = 1e-9;
/// Below this multiple of `‖A‖²_F` a residual counts as zero.
const DEGENERATE: f64 = 1e-12;

/// Pass/fail per bound. `lemma8_*` are `None` when `‖A−A_k‖_F > ‖A_k‖_F`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BoundChecks {
    /// `max_x ‖Ax‖² − ‖Qx‖² ≤ ‖A‖²_F/ℓ`
    pub eq1_upper: bool,
    /// `min_x ‖Ax‖² − ‖Qx‖² ≥ 0`
    pub eq1_lower: bool,
    /// `‖A‖² − ‖Q‖² = ℓΔ`, or `∈ [ℓΔ, mΔ]` for a batched buffer
    pub lemma4_identity: bool,
    /// `Δ ≤ ‖A−A_k‖²/(ℓ−k)`
    pub lemma5: bool,
    /// `‖A − π_{Q_k}(A)‖² ≤ (1+ε)‖A−A_k‖²`
    pub lemma6: bool,
    /// `‖A−A_k‖² ≤ ‖A‖² − ‖Q_k‖²`
    pub lemma7_low: bool,
    /// `‖A‖² − ‖Q_k‖² ≤ (1+ε)‖A−A_k‖²`
    pub lemma7_high: bool,
    /// `(1−ε)‖A_k‖² ≤ ‖Q_k‖²`
    pub lemma8_low: Option<bool>,
    /// `‖Q_k‖² ≤ ‖A_k‖²`
    pub lemma8_high: Option<bool>,
}

impl BoundChecks {
    pub fn all_pass(&self) -> bool {
        self.eq1_upper
            && self.eq1_lower
            && self.lemma4_identity
            && self.lemma5
            && self.lemma6
            && self.lemma7_low
            && self.lemma7_high
            && self.lemma8_low.unwrap_or(true)
            && self.lemma8_high.unwrap_or(true)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorReport {
    pub k: usize,
    pub ell: usize,
    pub m: usize,
    pub eps: f64,
    pub rows: usize,
    pub delta: f64,
    /// `‖A‖²_F`
    pub frob_sq_a: f64,
    /// `‖Q‖²_F`
    pub frob_sq_q: f64,
    /// `‖A_k‖²_F`
    pub ak_sq: f64,
    /// `‖A − A_k‖²_F`
    pub tail_sq: f64,
    /// `‖Q_k‖²_F`
    pub qk_sq: f64,
    /// `‖A − π_{Q_k}(A)‖²_F`
    pub proj_err_sq: f64,
    pub max_dir_gap: f64,
    pub min_dir_gap: f64,
    /// `|‖A‖² − ‖Q‖² − ℓΔ| / ‖A‖²`
    pub frob_identity_residual: f64,
    /// `‖A − π_{Q_k}(A)‖² / ‖A − A_k‖²`; 1 in the exact-recovery case.
    pub proj_err_ratio: f64,
    pub sandwich_low_ok: bool,
    pub sandwich_high_ok: bool,
    /// `‖A − A_k‖² ≤ ‖A_k‖²`, the precondition of the two-sided `‖Q_k‖²` bound.
    pub topk_bounds_apply: bool,
    /// `((1−ε)‖A_k‖², ‖A_k‖²)`, the interval `‖Q_k‖²` must land in when
    /// `topk_bounds_apply` holds.
    pub qk_norm_bounds: (f64, f64),
    pub bounds: BoundChecks,
}

impl ErrorReport {
    pub fn all_pass(&self) -> bool {
        self.bounds.all_pass()
    }
}

/// Builds the report for `sketch` against the full input `a` (the exact
/// concatenation of everything fed to the sketch). `a`'s SVD is computed
/// from scratch and shares nothing with the sketch path.
pub fn error_report(a: &DenseMatrix, sketch: &FdSketch) -> Result<ErrorReport, SketchError> {
    let mut s = sketch.flushed()?;
    let p = *s.params();
    if a.cols() != p.d && a.rows() > 0 {
        return Err(SketchError::DimensionMismatch { expected: p.d, got: a.cols() });
    }
    let q = s.query()?;
    let qk = s.query_topk()?;

    let frob_a = frob_sq(a);
    let frob_q = frob_sq(&q);
    let qk_sq = frob_sq(&qk);
    let delta = s.delta();

    let ga = if a.rows() == 0 { DenseMatrix::zeros(p.d, p.d) } else { par::gram(a, Execution::default()) };
    let gaps = gap_from_grams(&ga, &q.gram())?;

    let (ak_sq, tail_sq, proj_err_sq) = if a.rows() == 0 {
        (0.0, 0.0, 0.0)
    } else {
        let f = svd_thin(a)?;
        let ak: f64 = f.s.iter().take(p.k).map(|s| s * s).sum();
        let tail: f64 = f.s.iter().skip(p.k).map(|s| s * s).sum();
        let basis = rowspace_basis(&qk)?;
        let proj = project_onto_basis(a, &basis);
        (ak, tail, frob_sq(&a.sub(&proj)?))
    };

    let slack = INEQUALITY_SLACK * frob_a;
    let floor = DEGENERATE * frob_a;
    let proj_err_ratio = if tail_sq < floor && proj_err_sq < floor || frob_a == 0.0 {
        1.0
    } else {
        proj_err_sq / tail_sq.max(floor)
    };
    let identity_gap = frob_a - frob_q - p.ell as f64 * delta;
    let frob_identity_residual = if frob_a > 0.0 { identity_gap.abs() / frob_a } else { identity_gap.abs() };
    let lemma4_identity = if p.capacity == p.ell {
        identity_gap.abs() <= IDENTITY_TOL * frob_a
    } else {
        let removed = frob_a - frob_q;
        let tol = IDENTITY_TOL * frob_a;
        removed >= p.ell as f64 * delta - tol && removed <= p.capacity as f64 * delta + tol
    };

    let one_plus = 1.0 + p.eps;
    let topk_bounds_apply = tail_sq <= ak_sq;
    let sandwich_low_ok = tail_sq <= frob_a - qk_sq + slack;
    let sandwich_high_ok = frob_a - qk_sq <= one_plus * tail_sq + slack;
    let bounds = BoundChecks {
        eq1_upper: gaps.max <= frob_a / p.ell as f64 + slack,
        eq1_lower: gaps.min >= -slack,
        lemma4_identity,
        lemma5: delta <= tail_sq / (p.ell - p.k) as f64 + slack,
        lemma6: proj_err_sq <= one_plus * tail_sq + slack,
        lemma7_low: sandwich_low_ok,
        lemma7_high: sandwich_high_ok,
        lemma8_low: topk_bounds_apply.then_some((1.0 - p.eps) * ak_sq <= qk_sq + slack),
        lemma8_high: topk_bounds_apply.then_some(qk_sq <= ak_sq + slack),
    };

    Ok(ErrorReport {
        k: p.k,
        ell: p.ell,
        m: p.capacity,
        eps: p.eps,
        rows: a.rows(),
        delta,
        frob_sq_a: frob_a,
        frob_sq_q: frob_q,
        ak_sq,
        tail_sq,
        qk_sq,
        proj_err_sq,
        max_dir_gap: gaps.max,
        min_dir_gap: gaps.min,
        frob_identity_residual,
        proj_err_ratio,
        sandwich_low_ok,
        sandwich_high_ok,
        topk_bounds_apply,
        qk_norm_bounds: ((1.0 - p.eps) * ak_sq, ak_sq),
        bounds,
    })
}
