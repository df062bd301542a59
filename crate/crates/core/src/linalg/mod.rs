//! Minimal dense and sparse linear algebra kernels.
//!
//! Everything in here is sized for patch-local problems: univariate factor
//! matrices, small capacitance systems, desk-scale sparse factorizations.

mod dense;
mod kron;
mod sparse;

pub use dense::{general_eig_spd, sym_eig, CholeskyFactor, DenseMatrix, LuFactor};
pub use kron::{kron_dense, kron_matvec, kron_matvec_op, Transpose};
pub use sparse::{CsrMatrix, SparseCholesky};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("matrix is singular at pivot {0}")]
    Singular(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("eigensolver failed to converge at index {0}")]
    NoConvergence(usize),
}
