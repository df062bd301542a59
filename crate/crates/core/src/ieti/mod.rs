//! Dual-primal tearing/interconnecting solver: dof bookkeeping, jump
//! matrix, primal basis, saddle-point operator, block preconditioner and
//! solution recovery.

mod dofs;
mod solve;
mod system;

pub use dofs::{
    build_jump_matrix, build_primal_map, classify_dofs, DofClass, DofPartition, JumpMatrix,
    JumpRow, PrimalMap,
};
pub use solve::{solve_ieti, solve_with_assembly, IetiSolution, PhaseTimes, SolveOptions, Variant};
pub use system::{
    assemble_ieti, build_local_preconditioner, build_primal_basis, build_scaled_dirichlet,
    IetiAssembly, LocalSolve, PatchBlocks, PrimalBasis, PrimalMode, SaddleOperator,
    SaddlePreconditioner,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IetiError {
    #[error(transparent)]
    Assembly(#[from] crate::assembly::AssemblyError),
    #[error(transparent)]
    FastDiag(#[from] crate::fastdiag::FastDiagError),
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
    #[error("primal basis solve failed on patch {patch}, column {column}: {source}")]
    PrimalSolve {
        patch: usize,
        column: usize,
        source: crate::krylov::KrylovError,
    },
    #[error("outer solver failed: {0}")]
    Outer(#[from] crate::krylov::KrylovError),
    #[error("configuration error: {0}")]
    Config(String),
}
