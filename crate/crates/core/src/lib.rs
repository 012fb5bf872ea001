//! Deterministic streaming matrix sketching.
//!
//! * [`sketch`]: Frequent Directions, its batched variant, merging, the
//!   binary sketch format and the bound report.
//! * [`heavy_hitters`]: the Misra-Gries summary it generalises.
//! * [`linalg`]: the dense kernels everything runs on.
//! * [`counterexamples`]: incremental PCA's failure mode and the sparse
//!   variant's impossibility instance.
//! * [`verify`]: seeded trials checked against exact-SVD oracles.
//! * [`io`]: row-stream files (CSV and binary).

pub mod counterexamples;
pub mod heavy_hitters;
pub mod io;
pub mod linalg;
pub mod par;
pub mod sketch;
pub mod verify;

pub use linalg::DenseMatrix;
pub use par::Execution;
pub use sketch::{FdParams, FdSketch};
