//! Data-parallel helpers. With the `parallel` feature (default) the
//! `Parallel` strategy runs on the rayon pool; without it every strategy
//! runs sequentially. Results never depend on the strategy: work is split
//! into fixed chunks and reduced in index order.

use crate::linalg::{gram_of_rows, DenseMatrix};

/// How independent work items are scheduled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `true` when work will actually fan out across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(n: usize, exec: Execution, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

const GRAM_CHUNK_ROWS: usize = 64;

/// `aᵀa`, accumulated over fixed row chunks so the rounding is identical
/// for both strategies.
pub fn gram(a: &DenseMatrix, exec: Execution) -> DenseMatrix {
    let chunks = a.rows().div_ceil(GRAM_CHUNK_ROWS);
    if chunks <= 1 {
        return a.gram();
    }
    let partials = map_range(chunks, exec, |c| {
        let start = c * GRAM_CHUNK_ROWS;
        let end = (start + GRAM_CHUNK_ROWS).min(a.rows());
        gram_of_rows((start..end).map(|i| a.row(i)), a.cols())
    });
    let mut iter = partials.into_iter();
    let mut acc = iter.next().expect("at least two chunks");
    for p in iter {
        for (x, y) in acc.as_mut_slice().iter_mut().zip(p.as_slice()) {
            *x += y;
        }
    }
    acc
}
