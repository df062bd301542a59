//! Multi-patch isogeometric Poisson solver.
//!
//! The library discretizes the Poisson problem on a 2-D multi-patch domain
//! with tensor-product B-splines per patch, couples the patches with a
//! symmetric interior penalty dG formulation, and solves the resulting
//! system with a dual-primal tearing/interconnecting (IETI-DP) method.
//! The patch-local problems can be preconditioned inexactly by fast
//! diagonalization with a Sherman-Morrison-Woodbury corner correction,
//! which keeps the memory footprint of the local solves low.
//!
//! Module overview:
//! - [`linalg`]: dense/sparse kernels (symmetric eigensolver, Cholesky, LU,
//!   CSR, Kronecker products).
//! - [`splines`]: univariate and tensor-product B-spline bases, quadrature,
//!   1-D mass/stiffness matrices.
//! - [`geometry`]: patch geometry maps, multi-patch topology, experiment
//!   domain generators, JSON import/export.
//! - [`assembly`]: SIPG extended-space systems, parameter-domain surrogate
//!   matrices, edge L2 projections.
//! - [`fastdiag`]: fast diagonalization, SMW corner correction, local
//!   preconditioners, inexact scaled Dirichlet preconditioner.
//! - [`krylov`]: PCG and MINRES with Lanczos condition estimates.
//! - [`ieti`]: dof classification, jump matrix, primal basis, saddle system,
//!   solver variants and solution recovery.
//! - [`driver`]: experiment runner, report emission, scaling studies.

#![forbid(unsafe_code)]

pub mod assembly;
pub mod driver;
pub mod fastdiag;
pub mod geometry;
pub mod ieti;
pub mod krylov;
pub mod linalg;
pub mod oracle;
pub mod splines;
pub mod util;
