//! Frequent Directions: a deterministic `ℓ × d` streaming sketch `Q` of a
//! row stream `A` with `0 ≤ ‖Ax‖² − ‖Qx‖² ≤ ‖A‖²_F/ℓ` for every unit `x`.
//!
//! Rows are written into zero rows of an `m × d` buffer (`m = ⌈c·ℓ⌉`).
//! When the buffer is full (every row when `m = ℓ`), it is replaced by
//! `S'Vᵀ` where `S' = diag(√max(s_j² − s_ℓ², 0))`, which zeroes row `ℓ` and
//! everything below it. With `ℓ = ⌈k + k/ε⌉` the top `k` rows of the sketch
//! give a `(1+ε)` relative-error rank-`k` subspace.

mod codec;
mod report;

pub use codec::{decode, encode, DecodeError, FORMAT_VERSION, MAGIC};
pub use report::{error_report, BoundChecks, ErrorReport, IDENTITY_TOL, INEQUALITY_SLACK};

use thiserror::Error;

use crate::linalg::{frob_sq, svd_thin, DenseMatrix, LinalgError};
use crate::par::{self, Execution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SketchError {
    #[error("invalid sketch parameters: {0}")]
    InvalidParams(String),
    #[error("row has {got} entries, sketch expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("row contains a non-finite entry at column {0}")]
    NonFinite(usize),
    #[error("cannot merge sketches with different parameters ({0})")]
    ParamMismatch(String),
    #[error("nothing to merge")]
    EmptyMerge,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `⌈x⌉`, snapping values within 1e-9 (relative) of an integer onto it so
/// that e.g. `3 + 3/0.3` gives 13 rather than 14.
pub fn tolerant_ceil(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r.max(0.0) as usize
    } else {
        x.ceil().max(0.0) as usize
    }
}

/// Sketch shape and accuracy parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdParams {
    /// Target rank.
    pub k: usize,
    /// Relative error.
    pub eps: f64,
    /// Logical sketch rows.
    pub ell: usize,
    /// Effective batch factor `m/ℓ` (the requested `c` rounded up to whole rows).
    pub batch_factor: f64,
    /// Buffer rows, `⌈c·ℓ⌉`.
    pub capacity: usize,
    /// Columns.
    pub d: usize,
}

impl FdParams {
    /// `ℓ = ⌈k + k/ε⌉`, `m = ⌈c·ℓ⌉`.
    pub fn new(k: usize, eps: f64, c: f64, d: usize) -> Result<Self, SketchError> {
        if k == 0 {
            return Err(SketchError::InvalidParams("k must be at least 1".into()));
        }
        if !(eps.is_finite() && eps > 0.0) {
            return Err(SketchError::InvalidParams(format!("eps must be positive, got {eps}")));
        }
        let ell = tolerant_ceil(k as f64 + k as f64 / eps);
        Self::build(k, eps, ell, c, d)
    }

    /// Explicit `ℓ > k`; the relative error is the one `ℓ` buys,
    /// `ε = k/(ℓ−k)`.
    pub fn with_ell(k: usize, ell: usize, c: f64, d: usize) -> Result<Self, SketchError> {
        if k == 0 || ell <= k {
            return Err(SketchError::InvalidParams(format!("need 1 <= k < ell, got k={k}, ell={ell}")));
        }
        Self::build(k, k as f64 / (ell - k) as f64, ell, c, d)
    }

    fn build(k: usize, eps: f64, ell: usize, c: f64, d: usize) -> Result<Self, SketchError> {
        if !(c.is_finite() && c >= 1.0) {
            return Err(SketchError::InvalidParams(format!("batch factor must be >= 1, got {c}")));
        }
        if d == 0 {
            return Err(SketchError::InvalidParams("d must be at least 1".into()));
        }
        let capacity = tolerant_ceil(c * ell as f64).max(ell);
        // only m is stored, so keep the factor m actually realises
        Ok(Self { k, eps, ell, batch_factor: capacity as f64 / ell as f64, capacity, d })
    }

    /// Rebuilds parameters from their stored form (`c = m/ℓ`).
    pub fn from_stored(k: usize, eps: f64, ell: usize, capacity: usize, d: usize) -> Result<Self, SketchError> {
        if k == 0 || ell <= k || capacity < ell || d == 0 || !(eps.is_finite() && eps > 0.0) {
            return Err(SketchError::InvalidParams(format!(
                "k={k} eps={eps} ell={ell} m={capacity} d={d}"
            )));
        }
        Ok(Self { k, eps, ell, batch_factor: capacity as f64 / ell as f64, capacity, d })
    }

    /// Human-readable caveats (currently only `ℓ > d`).
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.ell > self.d {
            w.push(format!(
                "ell = {} exceeds d = {}: the sketch is exact and never shrinks",
                self.ell, self.d
            ));
        }
        w
    }

    fn same_shape(&self, other: &Self) -> Result<(), SketchError> {
        let mut diffs = Vec::new();
        if self.k != other.k {
            diffs.push(format!("k {} vs {}", self.k, other.k));
        }
        if self.eps.to_bits() != other.eps.to_bits() {
            diffs.push(format!("eps {} vs {}", self.eps, other.eps));
        }
        if self.ell != other.ell {
            diffs.push(format!("ell {} vs {}", self.ell, other.ell));
        }
        if self.capacity != other.capacity {
            diffs.push(format!("m {} vs {}", self.capacity, other.capacity));
        }
        if self.d != other.d {
            diffs.push(format!("d {} vs {}", self.d, other.d));
        }
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(SketchError::ParamMismatch(diffs.join(", ")))
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn from_value(v: f64) -> Self {
        Self { sum: v, comp: 0.0 }
    }

    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.add(other.comp);
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// What one compression did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompressionStep {
    /// Shrink applied to every squared singular value.
    pub delta: f64,
    /// `‖buffer‖²_F` before and after.
    pub frob_sq_before: f64,
    pub frob_sq_after: f64,
    /// Non-zero rows before and after.
    pub rows_before: usize,
    pub rows_after: usize,
}

/// Streaming Frequent Directions state.
#[derive(Clone, Debug)]
pub struct FdSketch {
    params: FdParams,
    buffer: DenseMatrix,
    nonzero_rows: usize,
    pending: bool,
    delta: CompensatedSum,
    input_frob_sq: CompensatedSum,
    rows_seen: u64,
}

impl PartialEq for FdSketch {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
            && self.buffer == other.buffer
            && self.rows_seen == other.rows_seen
            && self.delta().to_bits() == other.delta().to_bits()
            && self.input_frob_sq().to_bits() == other.input_frob_sq().to_bits()
    }
}

impl FdSketch {
    pub fn new(params: FdParams) -> Self {
        Self {
            params,
            buffer: DenseMatrix::zeros(params.capacity, params.d),
            nonzero_rows: 0,
            pending: false,
            delta: CompensatedSum::default(),
            input_frob_sq: CompensatedSum::default(),
            rows_seen: 0,
        }
    }

    /// Sketch with `ℓ = ⌈k + k/ε⌉` and batch factor `c`.
    pub fn with_relative_error(k: usize, eps: f64, c: f64, d: usize) -> Result<Self, SketchError> {
        Ok(Self::new(FdParams::new(k, eps, c, d)?))
    }

    pub(crate) fn from_parts(
        params: FdParams,
        buffer: DenseMatrix,
        delta: f64,
        input_frob_sq: f64,
        rows_seen: u64,
    ) -> Self {
        let nonzero_rows = (0..buffer.rows()).rev().find(|&i| !buffer.row_is_zero(i)).map_or(0, |i| i + 1);
        Self {
            params,
            pending: nonzero_rows >= params.ell,
            buffer,
            nonzero_rows,
            delta: CompensatedSum::from_value(delta),
            input_frob_sq: CompensatedSum::from_value(input_frob_sq),
            rows_seen,
        }
    }

    pub fn params(&self) -> &FdParams {
        &self.params
    }

    /// Accumulated shrink mass `Δ`.
    pub fn delta(&self) -> f64 {
        self.delta.value()
    }

    /// `‖A‖²_F` of every row fed so far (including merged inputs).
    pub fn input_frob_sq(&self) -> f64 {
        self.input_frob_sq.value()
    }

    pub fn rows_seen(&self) -> u64 {
        self.rows_seen
    }

    /// The full `m × d` buffer, including rows not yet compressed.
    pub fn buffer(&self) -> &DenseMatrix {
        &self.buffer
    }

    pub fn nonzero_rows(&self) -> usize {
        self.nonzero_rows
    }

    /// Rows buffered since the last compression.
    pub fn has_pending(&self) -> bool {
        self.pending
    }

    /// Feeds one input row.
    pub fn append(&mut self, row: &[f64]) -> Result<(), SketchError> {
        if row.len() != self.params.d {
            return Err(SketchError::DimensionMismatch { expected: self.params.d, got: row.len() });
        }
        if let Some(col) = row.iter().position(|v| !v.is_finite()) {
            return Err(SketchError::NonFinite(col));
        }
        self.rows_seen += 1;
        self.input_frob_sq.add(row.iter().map(|v| v * v).sum());
        if row.iter().all(|&v| v == 0.0) {
            // contributes to neither AᵀA nor the buffer
            return Ok(());
        }
        self.insert(row)
    }

    /// Feeds every row of `rows`.
    pub fn extend_rows(&mut self, rows: &DenseMatrix) -> Result<(), SketchError> {
        rows.row_iter().try_for_each(|r| self.append(r))
    }

    fn insert(&mut self, row: &[f64]) -> Result<(), SketchError> {
        debug_assert!(self.nonzero_rows < self.params.capacity);
        self.buffer.row_mut(self.nonzero_rows).copy_from_slice(row);
        self.nonzero_rows += 1;
        self.pending = true;
        if self.params.capacity == self.params.ell || self.nonzero_rows == self.params.capacity {
            self.compress()?;
        }
        Ok(())
    }

    /// SVD of the buffer followed by the shrink by `s_ℓ²`.
    pub fn compress(&mut self) -> Result<CompressionStep, SketchError> {
        let ell = self.params.ell;
        let rows_before = self.nonzero_rows;
        self.pending = false;
        if rows_before == 0 {
            return Ok(CompressionStep {
                delta: 0.0,
                frob_sq_before: 0.0,
                frob_sq_after: 0.0,
                rows_before,
                rows_after: 0,
            });
        }
        let live = self.buffer.slice_rows(0, rows_before);
        let f = svd_thin(&live)?;
        let delta = if f.s.len() >= ell { f.s[ell - 1] * f.s[ell - 1] } else { 0.0 };

        let mut rows_after = 0;
        for (j, &sj) in f.s.iter().enumerate().take(ell - 1) {
            let shrunk = (sj * sj - delta).max(0.0).sqrt();
            if shrunk == 0.0 {
                break;
            }
            let row = self.buffer.row_mut(j);
            for (c, o) in row.iter_mut().enumerate() {
                *o = shrunk * f.v.get(c, j);
            }
            rows_after = j + 1;
        }
        for i in rows_after..rows_before {
            self.buffer.row_mut(i).fill(0.0);
        }
        self.nonzero_rows = rows_after;
        self.delta.add(delta);

        Ok(CompressionStep {
            delta,
            frob_sq_before: f.s.iter().map(|s| s * s).sum(),
            frob_sq_after: frob_sq(&self.buffer),
            rows_before,
            rows_after,
        })
    }

    /// The `ℓ × d` sketch `Q`, compressing buffered rows first.
    pub fn query(&mut self) -> Result<DenseMatrix, SketchError> {
        if self.pending {
            self.compress()?;
        }
        Ok(self.buffer.slice_rows(0, self.params.ell))
    }

    /// The `k × d` matrix `Q_k`: the top `k` rows of the compressed sketch,
    /// which are already scaled right singular vectors in decreasing order.
    pub fn query_topk(&mut self) -> Result<DenseMatrix, SketchError> {
        self.query()?;
        Ok(self.buffer.slice_rows(0, self.params.k))
    }

    /// A compressed copy, leaving `self` untouched.
    pub fn flushed(&self) -> Result<Self, SketchError> {
        let mut s = self.clone();
        if s.pending {
            s.compress()?;
        }
        Ok(s)
    }

    /// Merges `other` into a copy of `self` by re-inserting the rows of
    /// `other`'s compressed sketch.
    pub fn merge(&self, other: &Self) -> Result<Self, SketchError> {
        self.params.same_shape(&other.params)?;
        let mut out = self.clone();
        let other = other.flushed()?;
        for i in 0..other.nonzero_rows {
            out.insert(other.buffer.row(i))?;
        }
        out.rows_seen += other.rows_seen;
        out.input_frob_sq.merge(&other.input_frob_sq);
        out.delta.merge(&other.delta);
        Ok(out)
    }
}

/// Sketches every row of `rows` in order.
pub fn sketch_rows(params: FdParams, rows: &DenseMatrix) -> Result<FdSketch, SketchError> {
    let mut s = FdSketch::new(params);
    s.extend_rows(rows)?;
    Ok(s)
}

/// Pairwise merge, level by level; pairs within a level are independent.
pub fn merge_tree(mut sketches: Vec<FdSketch>, exec: Execution) -> Result<FdSketch, SketchError> {
    if sketches.is_empty() {
        return Err(SketchError::EmptyMerge);
    }
    while sketches.len() > 1 {
        let pairs: Vec<&[FdSketch]> = sketches.chunks(2).collect();
        let merged = par::map(&pairs, exec, |pair| match pair {
            [a, b] => a.merge(b),
            [a] => Ok(a.clone()),
            _ => unreachable!("chunks(2)"),
        });
        sketches = merged.into_iter().collect::<Result<_, _>>()?;
    }
    Ok(sketches.pop().expect("one sketch left"))
}

/// Splits `rows` into `shards` contiguous blocks, sketches them
/// independently and tree-merges the results.
pub fn sketch_sharded(
    params: FdParams,
    rows: &DenseMatrix,
    shards: usize,
    exec: Execution,
) -> Result<FdSketch, SketchError> {
    let shards = shards.max(1);
    let n = rows.rows();
    let parts = par::map_range(shards, exec, |s| {
        let start = s * n / shards;
        let end = (s + 1) * n / shards;
        sketch_rows(params, &rows.slice_rows(start, end))
    });
    merge_tree(parts.into_iter().collect::<Result<_, _>>()?, exec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ell_from_relative_error() {
        assert_eq!(FdParams::new(2, 0.5, 1.0, 10).unwrap().ell, 6);
        assert_eq!(FdParams::new(1, 1.0, 1.0, 10).unwrap().ell, 2);
        let p = FdParams::new(3, 0.3, 2.0, 10).unwrap();
        assert_eq!((p.ell, p.capacity), (13, 26));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(FdParams::new(0, 0.5, 1.0, 3).is_err());
        assert!(FdParams::new(1, 0.0, 1.0, 3).is_err());
        assert!(FdParams::new(1, 0.5, 0.5, 3).is_err());
        assert!(FdParams::new(1, 0.5, 1.0, 0).is_err());
        assert!(FdParams::with_ell(2, 2, 1.0, 3).is_err());
    }

    #[test]
    fn ell_above_d_only_warns() {
        let p = FdParams::new(5, 0.1, 1.0, 20).unwrap();
        assert_eq!(p.ell, 55);
        assert_eq!(p.warnings().len(), 1);
        assert!(FdParams::new(1, 1.0, 1.0, 20).unwrap().warnings().is_empty());
    }

    #[test]
    fn first_row_is_kept_exactly() {
        let mut s = FdSketch::new(FdParams::with_ell(1, 3, 1.0, 3).unwrap());
        s.append(&[3.0, 0.0, 4.0]).unwrap();
        let q = s.query().unwrap();
        assert_eq!(s.delta(), 0.0);
        assert!((frob_sq(&q) - 25.0).abs() < 1e-12);
        let r0 = q.row(0);
        assert!((r0[0].abs() - 3.0).abs() < 1e-12 && (r0[2].abs() - 4.0).abs() < 1e-12);
        assert!(q.row_is_zero(1) && q.row_is_zero(2));
    }

    #[test]
    fn basis_rows_hand_trace() {
        // e1, e2 shrink away on the second row; e1 survives the third
        let mut s = FdSketch::new(FdParams::with_ell(1, 2, 1.0, 2).unwrap());
        for r in [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]] {
            s.append(&r).unwrap();
        }
        let q = s.query().unwrap();
        assert!((s.delta() - 1.0).abs() < 1e-14);
        assert!((q.row(0)[0].abs() - 1.0).abs() < 1e-14 && q.row(0)[1].abs() < 1e-14);
        assert!(q.row_is_zero(1));
        assert!((s.input_frob_sq() - frob_sq(&q) - 2.0 * s.delta()).abs() < 1e-14);
    }

    #[test]
    fn empty_query_is_zero() {
        let mut s = FdSketch::new(FdParams::new(2, 0.5, 2.0, 4).unwrap());
        assert_eq!(s.query().unwrap(), DenseMatrix::zeros(6, 4));
    }

    #[test]
    fn rejects_bad_rows() {
        let mut s = FdSketch::new(FdParams::new(1, 1.0, 1.0, 2).unwrap());
        assert_eq!(s.append(&[1.0]), Err(SketchError::DimensionMismatch { expected: 2, got: 1 }));
        assert_eq!(s.append(&[1.0, f64::NAN]), Err(SketchError::NonFinite(1)));
        assert_eq!(s.rows_seen(), 0);
    }

    #[test]
    fn zero_rows_count_but_do_not_occupy() {
        let mut s = FdSketch::new(FdParams::new(1, 1.0, 2.0, 2).unwrap());
        s.append(&[0.0, 0.0]).unwrap();
        assert_eq!(s.rows_seen(), 1);
        assert_eq!(s.nonzero_rows(), 0);
    }

    #[test]
    fn batched_compresses_only_when_full() {
        let p = FdParams::with_ell(1, 2, 2.0, 5).unwrap();
        assert_eq!(p.capacity, 4);
        let mut s = FdSketch::new(p);
        for i in 0..3 {
            let mut r = [0.0; 5];
            r[i] = 1.0 + i as f64;
            s.append(&r).unwrap();
        }
        assert_eq!(s.nonzero_rows(), 3);
        assert!(s.has_pending());
        s.append(&[0.0, 0.0, 0.0, 5.0, 0.0]).unwrap();
        // s = (5,3,2,1), shrink by s_2² = 9 keeps one row of norm 4
        assert_eq!(s.nonzero_rows(), 1);
        assert!((s.delta() - 9.0).abs() < 1e-12);
        assert!((frob_sq(s.buffer()) - 16.0).abs() < 1e-12);
    }

    #[test]
    fn merge_rejects_mismatch() {
        let a = FdSketch::new(FdParams::new(1, 1.0, 1.0, 3).unwrap());
        let b = FdSketch::new(FdParams::new(1, 1.0, 1.0, 4).unwrap());
        assert!(matches!(a.merge(&b), Err(SketchError::ParamMismatch(_))));
        assert!(matches!(merge_tree(vec![], Execution::Sequential), Err(SketchError::EmptyMerge)));
    }

    #[test]
    fn merge_with_empty_keeps_sketch() {
        let p = FdParams::with_ell(1, 2, 1.0, 3).unwrap();
        let mut a = FdSketch::new(p);
        a.append(&[1.0, 2.0, 2.0]).unwrap();
        let mut m = a.merge(&FdSketch::new(p)).unwrap();
        let q0 = a.query().unwrap();
        let q1 = m.query().unwrap();
        assert_eq!(q0.gram(), q1.gram());
        assert_eq!(m.rows_seen(), 1);
    }

    #[test]
    fn tolerant_ceil_snaps() {
        assert_eq!(tolerant_ceil(13.000000000000002), 13);
        assert_eq!(tolerant_ceil(12.5), 13);
        assert_eq!(tolerant_ceil(6.0), 6);
    }
}
