//! Executable negative results.
//!
//! * An adversarial stream on which truncate-to-rank-k incremental PCA never
//!   moves off its first `k` rows, while Frequent Directions keeps its
//!   relative-error guarantee.
//! * The hard instance showing that no row-retaining (sparse) variant of
//!   Frequent Directions can reduce the Frobenius mass by `cℓδ` per step
//!   (P1) while losing at most `δ` in every direction (P2), unless
//!   `c ≤ 2/ℓ`.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{frob_sq, projection_residual_sq, svd_thin, DenseMatrix, LinalgError};
use crate::par::{self, Execution};
use crate::sketch::{error_report, sketch_rows, FdParams, SketchError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CounterexampleError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

/// Head block `diag(σ_1..σ_k)` with `σ_j = σ_k + (k − j)`, then `n − k`
/// copies of `tail_norm · e_{tail_axis}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdversarialStream {
    pub k: usize,
    pub d: usize,
    pub n: usize,
    pub sigma_k: f64,
    pub tail_norm: f64,
    /// Zero-based column of the tail direction; must be `≥ k`.
    pub tail_axis: usize,
}

impl AdversarialStream {
    pub fn new(k: usize, d: usize, n: usize) -> Result<Self, CounterexampleError> {
        let s = Self { k, d, n, sigma_k: 10.0, tail_norm: 5.0, tail_axis: k };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), CounterexampleError> {
        if self.k == 0 {
            return Err(CounterexampleError::InvalidParams("k must be at least 1".into()));
        }
        if self.d <= self.k {
            return Err(CounterexampleError::InvalidParams(format!(
                "need d > k for a tail direction, got d={}, k={}",
                self.d, self.k
            )));
        }
        if self.n < self.k {
            return Err(CounterexampleError::InvalidParams(format!(
                "need n >= k, got n={}, k={}",
                self.n, self.k
            )));
        }
        if self.tail_axis < self.k || self.tail_axis >= self.d {
            return Err(CounterexampleError::InvalidParams(format!(
                "tail axis {} must lie in {}..{}",
                self.tail_axis, self.k, self.d
            )));
        }
        Ok(())
    }

    /// Row `i` of the stream (zero-based).
    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut r = vec![0.0; self.d];
        if i < self.k {
            r[i] = self.sigma_k + (self.k - 1 - i) as f64;
        } else {
            r[self.tail_axis] = self.tail_norm;
        }
        r
    }

    pub fn rows(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.n).map(|i| self.row(i))
    }

    pub fn to_matrix(&self) -> DenseMatrix {
        let mut data = Vec::with_capacity(self.n * self.d);
        for r in self.rows() {
            data.extend(r);
        }
        DenseMatrix::from_vec(self.n, self.d, data).expect("finite by construction")
    }

    /// Squared mass of the tail rows, `tail_norm²·(n − k)`.
    pub fn tail_mass(&self) -> f64 {
        self.tail_norm * self.tail_norm * (self.n - self.k) as f64
    }
}

/// The adversarial stream with default `σ_k = 10`, tail norm 5.
pub fn gen_adversary(k: usize, d: usize, n: usize) -> Result<DenseMatrix, CounterexampleError> {
    Ok(AdversarialStream::new(k, d, n)?.to_matrix())
}

/// Incremental PCA: after each row, keep only the rank-`k` truncation of
/// `[state; row]`, stored as the `k × d` matrix `S_k V_kᵀ`.
pub fn incremental_pca<'a, I>(rows: I, k: usize, d: usize) -> Result<DenseMatrix, CounterexampleError>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    if k == 0 || d == 0 {
        return Err(CounterexampleError::InvalidParams("k and d must be at least 1".into()));
    }
    let mut state = DenseMatrix::zeros(0, d);
    for row in rows {
        let mut stacked = state.clone();
        stacked.push_row(row)?;
        let f = svd_thin(&stacked)?;
        let keep = k.min(f.s.len());
        let mut next = DenseMatrix::zeros(keep, d);
        for j in 0..keep {
            for c in 0..d {
                next.set(j, c, f.s[j] * f.v.get(c, j));
            }
        }
        state = next;
    }
    Ok(state)
}

/// Projection errors of incremental PCA and Frequent Directions on the
/// same stream, against the optimal rank-`k` error.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdversaryComparison {
    pub k: usize,
    pub d: usize,
    pub n: usize,
    pub eps: f64,
    pub ell: usize,
    pub tail_mass: f64,
    /// `‖A − A_k‖²_F`
    pub optimal_err: f64,
    pub ipca_proj_err: f64,
    pub ipca_ratio: f64,
    pub fd_proj_err: f64,
    pub fd_ratio: f64,
    /// `fd_ratio ≤ 1 + ε`
    pub fd_within_bound: bool,
}

/// Runs both algorithms on `stream` and reports projection errors.
pub fn compare_on_adversary(stream: &AdversarialStream, eps: f64) -> Result<AdversaryComparison, CounterexampleError> {
    stream.validate()?;
    let a = stream.to_matrix();
    let ipca = incremental_pca(a.row_iter(), stream.k, stream.d)?;
    let ipca_err = projection_residual_sq(&a, &ipca)?;

    let params = FdParams::new(stream.k, eps, 1.0, stream.d)?;
    let sketch = sketch_rows(params, &a)?;
    let report = error_report(&a, &sketch)?;

    let ratio = |err: f64| if report.tail_sq > 0.0 { err / report.tail_sq } else if err > 0.0 { f64::MAX } else { 1.0 };
    Ok(AdversaryComparison {
        k: stream.k,
        d: stream.d,
        n: stream.n,
        eps,
        ell: params.ell,
        tail_mass: stream.tail_mass(),
        optimal_err: report.tail_sq,
        ipca_proj_err: ipca_err,
        ipca_ratio: ratio(ipca_err),
        fd_proj_err: report.proj_err_sq,
        fd_ratio: report.proj_err_ratio,
        fd_within_bound: report.bounds.lemma6,
    })
}

/// `min_j ‖Q − π_{Q_{−j}}(Q)‖²_F` and the lowest index attaining it, where
/// `Q_{−j}` is `q` without row `j`.
pub fn orthogonal_residual_min(q: &DenseMatrix) -> Result<(f64, usize), CounterexampleError> {
    if q.rows() < 2 {
        return Err(CounterexampleError::InvalidParams("need at least two rows".into()));
    }
    let residuals = (0..q.rows()).map(|j| removal_residual(q, j)).collect::<Result<Vec<_>, _>>()?;
    let min = residuals.iter().copied().fold(f64::INFINITY, f64::min);
    // ties are decided up to rounding, in favour of the lowest index
    let tie = 1e-12 * frob_sq(q).max(f64::MIN_POSITIVE);
    let index = residuals.iter().position(|&v| v <= min + tie).expect("at least two rows");
    Ok((min, index))
}

/// `‖Q − π_{Q_{−j}}(Q)‖²_F`.
pub fn removal_residual(q: &DenseMatrix, j: usize) -> Result<f64, CounterexampleError> {
    let rest = q.slice_rows(0, j).vstack(&q.slice_rows(j + 1, q.rows()))?;
    Ok(projection_residual_sq(q, &rest)?)
}

/// Rows `w_j · r̄_j` with `r_j = e_1 + e_{j+1}` and `w_j = ‖r_j‖ = √2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SparseFdInstance {
    pub ell: usize,
    pub d: usize,
    /// Squared weights `w_j²`.
    pub weights_sq: Vec<f64>,
    /// The per-step loss `δ` the argument charges (1 for this instance).
    pub delta: f64,
}

impl SparseFdInstance {
    pub fn hard(ell: usize, d: usize) -> Result<Self, CounterexampleError> {
        if ell < 2 || d <= ell {
            return Err(CounterexampleError::InvalidParams(format!(
                "need ell >= 2 and d > ell, got ell={ell}, d={d}"
            )));
        }
        Ok(Self { ell, d, weights_sq: vec![2.0; ell], delta: 1.0 })
    }

    /// The weighted matrix `Q`.
    pub fn matrix(&self) -> DenseMatrix {
        let mut data = Vec::with_capacity(self.ell * self.d);
        for j in 0..self.ell {
            let mut r = vec![0.0; self.d];
            r[0] = 1.0;
            r[j + 1] = 1.0;
            data.extend(r);
        }
        DenseMatrix::from_vec(self.ell, self.d, data).expect("finite by construction")
    }
}

/// Which row is dropped and which direction P2 is tested along.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCheckSetup {
    /// Zero-based removed row; the default is the last row.
    pub removed: usize,
    /// Test direction; the default is `e_1`.
    pub direction: Vec<f64>,
}

impl SparseCheckSetup {
    pub fn standard(inst: &SparseFdInstance) -> Self {
        let mut x = vec![0.0; inst.d];
        x[0] = 1.0;
        Self { removed: inst.ell - 1, direction: x }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SparseFdReport {
    pub sum_alpha: f64,
    /// Every re-weighted `ŵ_j² = w_j² − α_j` is non-negative.
    pub feasible: bool,
    /// `‖Q‖²_F − ‖Q̂‖²_F ≥ cℓδ`
    pub p1_satisfied: bool,
    /// `‖Qx‖² ≤ ‖Q̂x‖² + δ`
    pub p2_satisfied: bool,
    pub jointly_satisfied: bool,
}

/// Checks (P1) and (P2) for re-weighting the kept rows by `alphas`
/// (one per kept row, in row order) after dropping `setup.removed`.
pub fn sparse_fd_check_with(
    inst: &SparseFdInstance,
    setup: &SparseCheckSetup,
    alphas: &[f64],
    c: f64,
) -> Result<SparseFdReport, CounterexampleError> {
    if alphas.len() != inst.ell - 1 {
        return Err(CounterexampleError::InvalidParams(format!(
            "need {} alphas, got {}",
            inst.ell - 1,
            alphas.len()
        )));
    }
    if setup.removed >= inst.ell || setup.direction.len() != inst.d {
        return Err(CounterexampleError::InvalidParams("bad removal index or direction".into()));
    }
    let overlap_sq = overlaps(inst, &setup.direction);
    Ok(evaluate_reweighting(inst, setup.removed, &overlap_sq, alphas, c))
}

/// `⟨r̄_j, x⟩²`, formed as `⟨r_j, x⟩²/‖r_j‖²` on the integer rows so the
/// boundary cases stay exact.
fn overlaps(inst: &SparseFdInstance, x: &[f64]) -> Vec<f64> {
    let q = inst.matrix();
    q.row_iter()
        .map(|r| {
            let dot: f64 = r.iter().zip(x).map(|(a, b)| a * b).sum();
            let norm_sq: f64 = r.iter().map(|v| v * v).sum();
            dot * dot / norm_sq
        })
        .collect()
}

fn evaluate_reweighting(
    inst: &SparseFdInstance,
    removed: usize,
    overlap_sq: &[f64],
    alphas: &[f64],
    c: f64,
) -> SparseFdReport {
    let (feasible, p1, p2) = conditions(inst, removed, overlap_sq, alphas, c);
    SparseFdReport {
        sum_alpha: alphas.iter().sum(),
        feasible,
        p1_satisfied: feasible && p1,
        p2_satisfied: feasible && p2,
        jointly_satisfied: feasible && p1 && p2,
    }
}

/// `(weights stay non-negative, P1, P2)`.
#[inline]
fn conditions(inst: &SparseFdInstance, removed: usize, overlap_sq: &[f64], alphas: &[f64], c: f64) -> (bool, bool, bool) {
    let mut feasible = true;
    let mut frob_drop = inst.weights_sq[removed];
    let mut dir_drop = inst.weights_sq[removed] * overlap_sq[removed];
    let kept = (0..inst.ell).filter(|&j| j != removed);
    for (j, &alpha) in kept.zip(alphas) {
        if inst.weights_sq[j] - alpha < 0.0 {
            feasible = false;
        }
        frob_drop += alpha;
        dir_drop += alpha * overlap_sq[j];
    }
    let p1 = frob_drop >= c * inst.ell as f64 * inst.delta;
    let p2 = dir_drop <= inst.delta;
    (feasible, p1, p2)
}

/// [`sparse_fd_check_with`] for the default setup (drop the last row, test
/// along `e_1`).
pub fn sparse_fd_check(inst: &SparseFdInstance, alphas: &[f64], c: f64) -> Result<SparseFdReport, CounterexampleError> {
    sparse_fd_check_with(inst, &SparseCheckSetup::standard(inst), alphas, c)
}

/// Exhaustive search over `α ∈ [lo, hi]^{ℓ−1}` on a regular grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityGrid {
    pub ell: usize,
    pub d: usize,
    pub c: f64,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    pub points: u64,
    pub jointly_feasible: u64,
    /// Whether `α = 0` satisfies both conditions.
    pub zero_feasible: bool,
    /// First jointly feasible point in lexicographic order.
    pub example: Option<Vec<f64>>,
    /// `c ≤ 2/ℓ`
    pub predicted_feasible: bool,
}

/// Largest grid the search will enumerate.
pub const MAX_GRID_POINTS: u64 = 2_000_000_000;

/// Enumerates the α-grid for the default setup. Grid values are
/// `lo + i·step`, computed per coordinate from the integer index.
pub fn feasibility_grid(
    inst: &SparseFdInstance,
    c: f64,
    lo: f64,
    hi: f64,
    step: f64,
    exec: Execution,
) -> Result<FeasibilityGrid, CounterexampleError> {
    if !(step > 0.0 && hi >= lo) {
        return Err(CounterexampleError::InvalidParams("need step > 0 and hi >= lo".into()));
    }
    let per_axis = ((hi - lo) / step + 1e-9).floor() as u64 + 1;
    let dims = (inst.ell - 1) as u32;
    let points = per_axis
        .checked_pow(dims)
        .filter(|&p| p <= MAX_GRID_POINTS)
        .ok_or_else(|| CounterexampleError::InvalidParams(format!("grid of {per_axis}^{dims} points is too large")))?;

    let setup = SparseCheckSetup::standard(inst);
    let overlap_sq = overlaps(inst, &setup.direction);
    // exact zero on the grid when lo is a multiple of step
    let offset = (lo / step).round();
    let aligned = (lo / step - offset).abs() < 1e-9;
    let values: Vec<f64> = (0..per_axis)
        .map(|i| if aligned { (i as f64 + offset) * step } else { lo + i as f64 * step })
        .collect();

    // split on the first coordinate, odometer over the rest
    let dims = dims as usize;
    let partial = par::map_range(values.len(), exec, |first| {
        let mut idx = vec![0usize; dims];
        let mut alphas = vec![values[0]; dims];
        alphas[0] = values[first];
        let mut count = 0u64;
        let mut example = None;
        loop {
            let (feasible, p1, p2) = conditions(inst, setup.removed, &overlap_sq, &alphas, c);
            if feasible && p1 && p2 {
                count += 1;
                if example.is_none() {
                    example = Some(alphas.clone());
                }
            }
            let mut axis = dims;
            loop {
                axis -= 1;
                if axis == 0 {
                    return (count, example);
                }
                idx[axis] += 1;
                if idx[axis] < values.len() {
                    alphas[axis] = values[idx[axis]];
                    break;
                }
                idx[axis] = 0;
                alphas[axis] = values[0];
            }
        }
    });
    let jointly_feasible = partial.iter().map(|p| p.0).sum();
    let example = partial.into_iter().find_map(|p| p.1);
    let zero = vec![0.0; dims];
    let zero_feasible = evaluate_reweighting(inst, setup.removed, &overlap_sq, &zero, c).jointly_satisfied;

    Ok(FeasibilityGrid {
        ell: inst.ell,
        d: inst.d,
        c,
        lo,
        hi,
        step,
        points,
        jointly_feasible,
        zero_feasible,
        example,
        predicted_feasible: c <= 2.0 / inst.ell as f64,
    })
}

/// Squared residual of each row removal on the hard instance, for every
/// index (recorded, not asserted, for indices other than the last).
pub fn removal_profile(inst: &SparseFdInstance) -> Result<Vec<f64>, CounterexampleError> {
    let q = inst.matrix();
    (0..inst.ell).map(|j| removal_residual(&q, j)).collect()
}

/// `‖Q‖²_F` of the hard instance.
pub fn instance_mass(inst: &SparseFdInstance) -> f64 {
    frob_sq(&inst.matrix())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adversary_small_case() {
        let a = gen_adversary(1, 2, 3).unwrap();
        assert_eq!(a, DenseMatrix::from_rows(&[[10.0, 0.0], [0.0, 5.0], [0.0, 5.0]]).unwrap());
    }

    #[test]
    fn adversary_head_only() {
        let a = gen_adversary(2, 4, 2).unwrap();
        assert_eq!(a, DenseMatrix::from_rows(&[[11.0, 0.0, 0.0, 0.0], [0.0, 10.0, 0.0, 0.0]]).unwrap());
    }

    #[test]
    fn adversary_rejects_bad_shapes() {
        assert!(gen_adversary(2, 2, 5).is_err());
        assert!(gen_adversary(2, 3, 1).is_err());
        assert!(gen_adversary(0, 3, 1).is_err());
    }

    #[test]
    fn tail_mass_arithmetic() {
        for n in [1, 2, 10, 57] {
            let s = AdversarialStream::new(1, 3, n).unwrap();
            let tail: f64 = s.to_matrix().row_iter().skip(1).map(|r| r.iter().map(|v| v * v).sum::<f64>()).sum();
            assert_eq!(s.tail_mass(), tail);
            assert_eq!(tail, 25.0 * (n - 1) as f64);
        }
    }

    #[test]
    fn ipca_recovers_low_rank_stream() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [-1.0, -2.0, 0.0]]).unwrap();
        let state = incremental_pca(a.row_iter(), 1, 3).unwrap();
        assert!(projection_residual_sq(&a, &state).unwrap() < 1e-24);
    }

    #[test]
    fn ipca_drops_the_tail() {
        let a = gen_adversary(1, 2, 20).unwrap();
        let state = incremental_pca(a.row_iter(), 1, 2).unwrap();
        assert_eq!(state.rows(), 1);
        assert!((state.row(0)[0].abs() - 10.0).abs() < 1e-12);
        assert!(state.row(0)[1].abs() < 1e-12);
    }

    #[test]
    fn hard_instance_residual_is_one_plus_one_over_ell() {
        // residual of r_j against the other rows: e_{j+1} plus the part of
        // e_1 outside span{e_1 + e_i}, which has squared norm 1/ℓ
        for ell in 2..8 {
            let inst = SparseFdInstance::hard(ell, ell + 1).unwrap();
            let (v, j) = orthogonal_residual_min(&inst.matrix()).unwrap();
            assert!((v - (1.0 + 1.0 / ell as f64)).abs() < 1e-12, "ell={ell}: {v}");
            assert_eq!(j, 0);
        }
    }

    #[test]
    fn duplicated_row_has_zero_residual() {
        let q = DenseMatrix::from_rows(&[[1.0, 2.0, 0.0], [0.0, 1.0, 1.0], [1.0, 2.0, 0.0]]).unwrap();
        let (v, j) = orthogonal_residual_min(&q).unwrap();
        assert!(v < 1e-24);
        assert_eq!(j, 0);
    }

    #[test]
    fn sparse_check_closed_forms() {
        let inst = SparseFdInstance::hard(4, 6).unwrap();
        let r = sparse_fd_check(&inst, &[0.0, 0.0, 0.0], 0.5).unwrap();
        assert!(r.p1_satisfied && r.p2_satisfied && r.jointly_satisfied);
        let r = sparse_fd_check(&inst, &[0.5, 0.25, 0.25], 1.0).unwrap();
        // p1: 1 >= 2 fails, p2: 1 <= 0 fails
        assert!(!r.p1_satisfied && !r.p2_satisfied);
        let r = sparse_fd_check(&inst, &[1.0, 0.5, 0.5], 1.0).unwrap();
        assert!(r.p1_satisfied && !r.p2_satisfied);
        let r = sparse_fd_check(&inst, &[3.0, 0.0, 0.0], 0.1).unwrap();
        assert!(!r.feasible && !r.jointly_satisfied);
        assert!(sparse_fd_check(&inst, &[0.0], 1.0).is_err());
    }

    #[test]
    fn other_removal_is_no_easier() {
        let inst = SparseFdInstance::hard(4, 6).unwrap();
        let mut setup = SparseCheckSetup::standard(&inst);
        setup.removed = 1;
        let r = sparse_fd_check_with(&inst, &setup, &[0.0, 0.0, 0.0], 0.75).unwrap();
        assert!(!r.jointly_satisfied);
    }

    #[test]
    fn small_grid_matches_prediction() {
        let inst = SparseFdInstance::hard(3, 4).unwrap();
        let g = feasibility_grid(&inst, 2.0 / 3.0, -1.0, 1.0, 0.25, Execution::Sequential).unwrap();
        assert_eq!(g.points, 81);
        assert!(g.zero_feasible);
        let g = feasibility_grid(&inst, 0.7, -1.0, 1.0, 0.25, Execution::Sequential).unwrap();
        assert_eq!(g.jointly_feasible, 0);
    }
}
