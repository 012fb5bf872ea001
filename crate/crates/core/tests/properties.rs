use fdsketch::heavy_hitters::{histogram, MgSummary};
use fdsketch::io::{write_binary, write_csv, RowFormat, RowReader};
use fdsketch::linalg::{directional_norm_gap, frob_sq, svd_thin};
use fdsketch::sketch::{decode, encode, merge_tree, sketch_rows, sketch_sharded, IDENTITY_TOL, INEQUALITY_SLACK};
use fdsketch::{DenseMatrix, Execution, FdParams, FdSketch};
use proptest::prelude::*;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = DenseMatrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0f64..10.0, r * c).prop_map(move |v| DenseMatrix::from_vec(r, c, v).unwrap())
    })
}

/// Low-rank matrices with repeated and zero rows, the cases that stress
/// rank-deficient SVDs.
fn degenerate_matrix() -> impl Strategy<Value = DenseMatrix> {
    (1usize..4, 2usize..8, 2usize..20).prop_flat_map(|(rank, cols, rows)| {
        (
            prop::collection::vec(-5.0f64..5.0, rank * cols),
            prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), -3.0f64..3.0], rows * rank),
        )
            .prop_map(move |(basis, coef)| {
                let mut data = vec![0.0; rows * cols];
                for i in 0..rows {
                    for r in 0..rank {
                        for j in 0..cols {
                            data[i * cols + j] += coef[i * rank + r] * basis[r * cols + j];
                        }
                    }
                }
                DenseMatrix::from_vec(rows, cols, data).unwrap()
            })
    })
}

fn stream(n: usize, d: usize) -> impl Strategy<Value = DenseMatrix> {
    (1..=n).prop_flat_map(move |rows| {
        prop::collection::vec(prop_oneof![4 => -5.0f64..5.0, 1 => Just(0.0)], rows * d)
            .prop_map(move |v| DenseMatrix::from_vec(rows, d, v).unwrap())
    })
}

fn orthonormal_columns_err(m: &DenseMatrix) -> f64 {
    let g = m.transpose().matmul(m).unwrap();
    g.sub(&DenseMatrix::identity(m.cols())).unwrap().max_abs()
}

fn check_svd(a: &DenseMatrix) -> Result<(), TestCaseError> {
    let f = svd_thin(a).unwrap();
    let scale = f.s.first().copied().unwrap_or(0.0).max(1.0);
    prop_assert!(f.s.windows(2).all(|w| w[0] >= w[1]));
    prop_assert!(f.s.iter().all(|&v| v >= 0.0));
    prop_assert!(orthonormal_columns_err(&f.u) <= 1e-10);
    prop_assert!(orthonormal_columns_err(&f.v) <= 1e-10);
    prop_assert!(f.reconstruct().sub(a).unwrap().max_abs() <= 1e-10 * scale);
    Ok(())
}

/// Checks both spectral bounds of `Q` against `A` with the inequality slack.
fn check_spectral_bounds(a: &DenseMatrix, q: &DenseMatrix, ell: usize) -> Result<(), TestCaseError> {
    let fa = frob_sq(a);
    let gap = directional_norm_gap(a, q).unwrap();
    let slack = INEQUALITY_SLACK * fa;
    prop_assert!(gap.min >= -slack, "QᵀQ exceeds AᵀA by {}", -gap.min);
    prop_assert!(gap.max <= fa / ell as f64 + slack, "gap {} > {}", gap.max, fa / ell as f64);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_with_orthonormal_factors(a in matrix(9, 9)) {
        check_svd(&a)?;
    }

    #[test]
    fn svd_handles_rank_deficiency(a in degenerate_matrix()) {
        check_svd(&a)?;
        check_svd(&a.transpose())?;
    }

    #[test]
    fn misra_gries_bounds(
        items in prop::collection::vec(0u64..12, 0..300),
        ell in 1usize..8,
    ) {
        let mut s = MgSummary::new(ell).unwrap();
        s.extend(items.iter().copied());
        let h = histogram(items.iter().copied());
        let n = items.len() as u64;
        let r = s.decrements();
        prop_assert!(s.entries().count() <= ell);
        prop_assert!(s.entries().all(|(_, c)| c >= 1));
        prop_assert!(r * ell as u64 <= n);
        for (&j, &f) in &h {
            let est = s.estimate(j);
            prop_assert!(est <= f && f - est <= r);
        }
        for k in 0..ell {
            let cert = s.error_certificate(&h, k).unwrap();
            prop_assert!(cert.all_pass(), "{cert:?}");
        }
    }

    #[test]
    fn every_prefix_satisfies_spectral_bounds(
        a in stream(40, 5),
        k in 1usize..3,
        eps in 0.2f64..2.0,
        c in prop_oneof![Just(1.0), Just(2.0), 1.0f64..3.0],
    ) {
        let params = FdParams::new(k, eps, c, 5).unwrap();
        let mut s = FdSketch::new(params);
        let mut last_delta = 0.0;
        for i in 0..a.rows() {
            s.append(a.row(i)).unwrap();
            prop_assert!(s.delta() >= last_delta);
            last_delta = s.delta();
            let prefix = a.slice_rows(0, i + 1);
            // the live buffer, compressed or not, already obeys the bounds
            check_spectral_bounds(&prefix, s.buffer(), params.ell)?;
            let fa = frob_sq(&prefix);
            let removed = fa - frob_sq(s.buffer());
            let tol = IDENTITY_TOL * fa;
            if params.capacity == params.ell {
                prop_assert!((removed - params.ell as f64 * s.delta()).abs() <= tol);
            } else {
                prop_assert!(removed >= params.ell as f64 * s.delta() - tol);
                prop_assert!(removed <= params.capacity as f64 * s.delta() + tol);
            }
        }
        let q = s.query().unwrap();
        prop_assert!(q.rows() == params.ell);
        check_spectral_bounds(&a, &q, params.ell)?;
    }

    #[test]
    fn compression_step_removes_between_ell_and_rows_times_delta(
        a in stream(12, 6),
        ell in 2usize..6,
    ) {
        // a buffer large enough that appends never compress on their own
        let params = FdParams::with_ell(1, ell, 4.0, 6).unwrap();
        let mut s = FdSketch::new(params);
        s.extend_rows(&a).unwrap();
        let rows = s.nonzero_rows();
        let before = s.buffer().clone();
        let step = s.compress().unwrap();
        // no direction loses more than δ in one step
        let gap = directional_norm_gap(&before, s.buffer()).unwrap();
        let slack = INEQUALITY_SLACK * frob_sq(&before);
        prop_assert!(gap.max <= step.delta + slack, "{} > δ = {}", gap.max, step.delta);
        prop_assert!(gap.min >= -slack);
        let tol = IDENTITY_TOL * step.frob_sq_before.max(f64::MIN_POSITIVE);
        let drop = step.frob_sq_before - step.frob_sq_after;
        prop_assert!(step.delta >= 0.0);
        prop_assert!(drop >= ell as f64 * step.delta - tol);
        prop_assert!(drop <= rows.max(ell) as f64 * step.delta + tol);
        prop_assert!(step.rows_after < ell);
        prop_assert!((frob_sq(s.buffer()) - step.frob_sq_after).abs() <= tol);
    }

    #[test]
    fn codec_round_trip_is_bit_identical(
        a in stream(30, 4),
        k in 1usize..3,
        eps in 0.3f64..2.0,
        c in prop_oneof![Just(1.0), Just(2.5)],
    ) {
        let s = sketch_rows(FdParams::new(k, eps, c, 4).unwrap(), &a).unwrap();
        let bytes = encode(&s).unwrap();
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(&back, &s.flushed().unwrap());
        prop_assert_eq!(encode(&back).unwrap(), bytes);
        prop_assert_eq!(back.delta().to_bits(), s.flushed().unwrap().delta().to_bits());
    }

    #[test]
    fn row_files_round_trip_and_agree(a in stream(25, 3)) {
        let mut csv = Vec::new();
        write_csv(&a, &mut csv).unwrap();
        let mut bin = Vec::new();
        write_binary(&a, &mut bin).unwrap();
        let from_csv = RowReader::new(&csv[..], RowFormat::Csv).unwrap().read_all().unwrap();
        let from_bin = RowReader::new(&bin[..], RowFormat::Binary).unwrap().read_all().unwrap();
        prop_assert_eq!(from_csv.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        a.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(&from_bin, &a);
        let params = FdParams::new(1, 0.5, 1.0, 3).unwrap();
        let s1 = encode(&sketch_rows(params, &from_csv).unwrap()).unwrap();
        let s2 = encode(&sketch_rows(params, &from_bin).unwrap()).unwrap();
        prop_assert_eq!(s1, s2);
    }

    #[test]
    fn sketching_is_deterministic(a in stream(30, 4), c in prop_oneof![Just(1.0), Just(2.0)]) {
        let params = FdParams::new(2, 0.5, c, 4).unwrap();
        let s1 = encode(&sketch_rows(params, &a).unwrap()).unwrap();
        let s2 = encode(&sketch_rows(params, &a).unwrap()).unwrap();
        prop_assert_eq!(s1, s2);
    }

    #[test]
    fn merged_sketch_obeys_spectral_bounds(
        a in stream(60, 5),
        shards in 1usize..6,
        c in prop_oneof![Just(1.0), Just(2.0)],
    ) {
        let params = FdParams::new(2, 0.5, c, 5).unwrap();
        let seq = sketch_sharded(params, &a, shards, Execution::Sequential).unwrap();
        let par = sketch_sharded(params, &a, shards, Execution::Parallel).unwrap();
        prop_assert_eq!(encode(&seq).unwrap(), encode(&par).unwrap());
        prop_assert_eq!(seq.rows_seen(), a.rows() as u64);
        prop_assert!((seq.input_frob_sq() - frob_sq(&a)).abs() <= 1e-12 * frob_sq(&a).max(1.0));
        let q = seq.flushed().unwrap();
        check_spectral_bounds(&a, q.buffer(), params.ell)?;
    }

    #[test]
    fn merging_with_empty_is_neutral(a in stream(20, 3)) {
        let params = FdParams::new(1, 0.5, 1.0, 3).unwrap();
        let s = sketch_rows(params, &a).unwrap();
        let merged = merge_tree(vec![s.clone(), FdSketch::new(params)], Execution::Sequential).unwrap();
        prop_assert_eq!(encode(&merged).unwrap(), encode(&s).unwrap());
    }
}
