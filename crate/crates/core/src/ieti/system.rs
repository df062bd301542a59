//! Assembled tearing system: per-patch blocks in the I/B/C ordering, the
//! primal basis and coarse problem, the saddle operator and its
//! block-diagonal preconditioner.

use super::dofs::{
    build_jump_matrix, build_primal_map, classify_dofs, DofClass, DofPartition, JumpMatrix,
    PrimalMap,
};
use super::IetiError;
use crate::assembly::{
    assemble_local, assemble_parameter_matrices, build_edge_projection, Discretization,
    ExtendedSpace, ParameterMatrices,
};
use crate::fastdiag::{
    fd_factorize, smw_factorize, InnerSolver, LocalPreconditioner, PatchSchur, ScaledDirichlet,
    TracePrecBlock,
};
use crate::krylov::{pcg, LinOp};
use crate::linalg::{CholeskyFactor, CsrMatrix, DenseMatrix, SparseCholesky};
use std::sync::atomic::{AtomicU64, Ordering};

/// Per-patch system blocks in the delta/C splitting.
pub struct PatchBlocks {
    pub part: DofPartition,
    /// Full extended matrix in the natural extended ordering.
    pub a_full: CsrMatrix,
    pub a_dd: CsrMatrix,
    pub a_dc: DenseMatrix,
    pub a_cc: DenseMatrix,
    pub f_delta: Vec<f64>,
    pub f_c: Vec<f64>,
}

/// Everything assembled once per discretization.
pub struct IetiAssembly {
    pub exts: Vec<ExtendedSpace>,
    pub patches: Vec<PatchBlocks>,
    pub params: Vec<ParameterMatrices>,
    pub jump: JumpMatrix,
    pub primal_map: PrimalMap,
    /// Jump rows with delta ordinals: ((patch+, delta+), (patch-, delta-)).
    pub rows_delta: Vec<((usize, usize), (usize, usize))>,
    /// Jump rows with gamma ordinals.
    pub rows_gamma: Vec<((usize, usize), (usize, usize))>,
    /// Offset of each patch's delta block in the concatenated delta vector.
    pub delta_offsets: Vec<usize>,
    pub n_delta_total: usize,
}

impl IetiAssembly {
    pub fn n_lambda(&self) -> usize {
        self.jump.n_rows()
    }

    pub fn n_patches(&self) -> usize {
        self.patches.len()
    }

    /// B_Delta^T lambda scattered into a concatenated delta vector.
    pub fn jump_transpose_apply(&self, lambda: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (j, &((kp, dp), (km, dm))) in self.rows_delta.iter().enumerate() {
            out[self.delta_offsets[kp] + dp] += lambda[j];
            out[self.delta_offsets[km] + dm] -= lambda[j];
        }
    }

    /// B_Delta u for a concatenated delta vector.
    pub fn jump_apply(&self, u: &[f64], out: &mut [f64]) {
        for (j, &((kp, dp), (km, dm))) in self.rows_delta.iter().enumerate() {
            out[j] = u[self.delta_offsets[kp] + dp] - u[self.delta_offsets[km] + dm];
        }
    }
}

/// Assemble all patch-local systems, surrogate matrices, the jump matrix
/// and the primal identification.
pub fn assemble_ieti(
    disc: &Discretization,
    rhs: &(dyn Fn([f64; 2]) -> f64 + Sync),
    jobs: usize,
) -> Result<IetiAssembly, IetiError> {
    let n = disc.n_patches();
    let exts: Vec<ExtendedSpace> = (0..n).map(|k| ExtendedSpace::build(disc, k)).collect();
    let parts: Vec<DofPartition> = exts.iter().map(|e| classify_dofs(disc, e)).collect();

    let assembled = crate::util::map_indexed(jobs, n, |k| {
        let sys = assemble_local(disc, &exts[k], &rhs)?;
        let pm = assemble_parameter_matrices(disc, &exts[k]);
        Ok::<_, IetiError>((sys, pm))
    });
    let mut patches = Vec::with_capacity(n);
    let mut params = Vec::with_capacity(n);
    for (k, item) in assembled.into_iter().enumerate() {
        let (sys, pm) = item?;
        let part = parts[k].clone();
        let delta = part.delta_dofs();
        let a_dd = sys.a.submatrix(&delta, &delta);
        let a_dc = sys.a.submatrix(&delta, &part.c_dofs).to_dense();
        let a_cc = sys.a.submatrix(&part.c_dofs, &part.c_dofs).to_dense();
        let f_delta: Vec<f64> = delta.iter().map(|&d| sys.f[d]).collect();
        let f_c: Vec<f64> = part.c_dofs.iter().map(|&d| sys.f[d]).collect();
        patches.push(PatchBlocks {
            part,
            a_full: sys.a,
            a_dd,
            a_dc,
            a_cc,
            f_delta,
            f_c,
        });
        params.push(pm);
    }

    let primal_map = build_primal_map(disc, &parts);
    let jump = build_jump_matrix(disc, &exts, &parts);
    let rows_delta: Vec<_> = jump
        .rows
        .iter()
        .map(|r| {
            let dp = patches[r.plus.0].part.delta_of[r.plus.1].expect("plus side in delta");
            let dm = patches[r.minus.0].part.delta_of[r.minus.1].expect("minus side in delta");
            ((r.plus.0, dp), (r.minus.0, dm))
        })
        .collect();
    let rows_gamma: Vec<_> = jump
        .rows
        .iter()
        .map(|r| {
            let gp = patches[r.plus.0].part.gamma_of[r.plus.1].expect("plus side in gamma");
            let gm = patches[r.minus.0].part.gamma_of[r.minus.1].expect("minus side in gamma");
            ((r.plus.0, gp), (r.minus.0, gm))
        })
        .collect();
    let mut delta_offsets = Vec::with_capacity(n);
    let mut acc = 0;
    for p in &patches {
        delta_offsets.push(acc);
        acc += p.part.n_delta();
    }

    Ok(IetiAssembly {
        exts,
        patches,
        params,
        jump,
        primal_map,
        rows_delta,
        rows_gamma,
        delta_offsets,
        n_delta_total: acc,
    })
}

/// Local solver for one patch's delta block.
pub enum LocalSolve {
    /// Fast-diagonalization preconditioner P.
    Inexact(LocalPreconditioner),
    /// nu Richardson steps with P on the delta block.
    InexactRichardson(LocalPreconditioner, usize),
    /// Exact sparse Cholesky of the delta block.
    Exact(SparseCholesky),
}

impl LocalSolve {
    pub fn apply(&self, blocks: &PatchBlocks, r: &[f64]) -> Vec<f64> {
        match self {
            LocalSolve::Inexact(p) => p.apply(r).expect("local preconditioner apply"),
            LocalSolve::InexactRichardson(p, nu) => {
                let prec = |v: &[f64]| p.apply(v).expect("local preconditioner apply");
                let op = |v: &[f64]| {
                    let mut y = vec![0.0; v.len()];
                    blocks.a_dd.matvec(v, &mut y);
                    y
                };
                crate::fastdiag::richardson_apply(&prec, &op, *nu, r)
                    .expect("richardson order validated at construction")
            }
            LocalSolve::Exact(chol) => chol.solve(r),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, LocalSolve::Exact(_))
    }
}

/// Assemble the fast-diagonalization local preconditioner of one patch.
pub fn build_local_preconditioner(
    disc: &Discretization,
    ext: &ExtendedSpace,
    part: &DofPartition,
    pm: &ParameterMatrices,
) -> Result<LocalPreconditioner, IetiError> {
    // Corner positions within the patch tensor ordering.
    let patch_corners: Vec<usize> = part
        .c_dofs
        .iter()
        .copied()
        .filter(|&d| d < ext.n_patch)
        .collect();
    let smw = smw_factorize(&pm.m1, &pm.k1, &pm.m2, &pm.k2, pm.alpha, &patch_corners)?;
    // Patch dof -> position within the smw delta ordering.
    let mut patch_delta_pos: Vec<Option<usize>> = vec![None; ext.n_patch];
    for (pos, &dof) in smw.delta_positions().iter().enumerate() {
        patch_delta_pos[dof] = Some(pos);
    }
    let patch_to_ext_delta: Vec<usize> = smw
        .delta_positions()
        .iter()
        .map(|&dof| part.delta_of[dof].expect("non-corner patch dof is in delta"))
        .collect();

    let mut blocks = Vec::with_capacity(ext.traces.len());
    for (bi, block) in ext.traces.iter().enumerate() {
        let (weight, mass) = &pm.d2_blocks[bi];
        let mut ext_delta = Vec::new();
        let mut local = Vec::new();
        for a in 0..block.n() {
            let dof = block.offset + a;
            if part.class_of[dof] == DofClass::Corner {
                continue;
            }
            ext_delta.push(part.delta_of[dof].expect("trace dof in delta"));
            local.push(a);
        }
        let sub = mass.submatrix(&local, &local);
        let mut scaled = sub.clone();
        scaled.scale(*weight);
        let d2_chol = scaled.cholesky()?;
        let proj = build_edge_projection(disc, ext, block)?;
        let own = ext.edge_trace(block.side);
        let own_to_patch_delta: Vec<Option<usize>> = (0..own.n)
            .map(|a| {
                let dof = ext.edge_dof(&own, a);
                patch_delta_pos[dof]
            })
            .collect();
        blocks.push(TracePrecBlock {
            ext_delta,
            local,
            n_full: block.n(),
            d2_chol,
            proj,
            own_to_patch_delta,
        });
    }
    Ok(LocalPreconditioner {
        smw,
        patch_to_ext_delta,
        blocks,
        n_delta_ext: part.n_delta(),
    })
}

/// Assemble the scaled Dirichlet preconditioner: parameter-domain Schur
/// complements with fast-diagonalization interior solves, or the exact
/// physical-domain variant with sparse Cholesky interior solves.
pub fn build_scaled_dirichlet(
    asm: &IetiAssembly,
    exact: bool,
) -> Result<ScaledDirichlet, IetiError> {
    let mut patches = Vec::with_capacity(asm.n_patches());
    for (k, pb) in asm.patches.iter().enumerate() {
        let part = &pb.part;
        let gamma = part.gamma_dofs();
        let source: &CsrMatrix = if exact {
            &pb.a_full
        } else {
            &asm.params[k].dhat
        };
        let d_ig = source.submatrix(&part.i_dofs, &gamma);
        let d_gi = source.submatrix(&gamma, &part.i_dofs);
        let d_gg = source.submatrix(&gamma, &gamma);
        let inner = if exact {
            let a_ii = source.submatrix(&part.i_dofs, &part.i_dofs);
            InnerSolver::Chol(SparseCholesky::factor(&a_ii)?)
        } else {
            // Interior block of the parameter-domain matrix is the
            // Kronecker sum of the strictly interior univariate factors.
            let ext = &asm.exts[k];
            let interior = |dir: usize| {
                let kv = ext.basis.kv(dir);
                let (m, kk) = kv.univariate_matrices();
                let idx: Vec<usize> = (1..kv.num_basis() - 1).collect();
                (m.submatrix(&idx, &idx), kk.submatrix(&idx, &idx))
            };
            let (m1, k1) = interior(0);
            let (m2, k2) = interior(1);
            InnerSolver::Fd(fd_factorize(&m1, &k1, &m2, &k2, 0.0)?)
        };
        patches.push(PatchSchur {
            inner,
            d_ig,
            d_gi,
            d_gg,
        });
    }
    let gamma_sizes: Vec<usize> = asm.patches.iter().map(|p| p.part.n_gamma()).collect();
    let scaling = ScaledDirichlet::multiplicity_scaling(&asm.rows_gamma, &gamma_sizes);
    Ok(ScaledDirichlet {
        patches,
        rows: asm.rows_gamma.clone(),
        scaling,
    })
}

/// How the primal basis columns are computed.
#[derive(Clone, Copy, Debug)]
pub enum PrimalMode {
    /// PCG on the delta blocks with the local preconditioner, to relative
    /// l2 residual eps_c.
    Pcg { eps_c: f64, maxit: usize },
    /// Direct sparse Cholesky solves.
    Direct,
}

/// Energy-minimizing primal basis and the coarse problem.
pub struct PrimalBasis {
    pub n_global: usize,
    /// Per patch: Psi_Delta, n_delta x n_c.
    pub psi_delta: Vec<DenseMatrix>,
    /// Per patch: local C ordinal -> global primal dof.
    pub g_map: Vec<Vec<usize>>,
    pub a_psi: DenseMatrix,
    pub a_psi_chol: Option<CholeskyFactor>,
    pub f_pi: Vec<f64>,
}

impl PrimalBasis {
    pub fn coarse_solve(&self, r: &[f64]) -> Vec<f64> {
        match &self.a_psi_chol {
            Some(ch) => ch.solve(r),
            None => Vec::new(),
        }
    }
}

/// Solve A_dd Psi_Delta = -A_dC per patch and assemble the coarse matrix
/// Psi^T A Psi together with f_Pi = Psi^T f.
pub fn build_primal_basis(
    asm: &IetiAssembly,
    local: &[LocalSolve],
    mode: PrimalMode,
) -> Result<PrimalBasis, IetiError> {
    let ng = asm.primal_map.n_global;
    let mut psi_delta = Vec::with_capacity(asm.n_patches());
    let mut a_psi = DenseMatrix::zeros(ng, ng);
    let mut f_pi = vec![0.0; ng];
    for (k, pb) in asm.patches.iter().enumerate() {
        let nd = pb.part.n_delta();
        let nc = pb.part.n_c();
        let mut psi = DenseMatrix::zeros(nd, nc);
        for c in 0..nc {
            let mut rhs = vec![0.0; nd];
            for i in 0..nd {
                rhs[i] = -pb.a_dc[(i, c)];
            }
            let col = match mode {
                PrimalMode::Direct => match &local[k] {
                    LocalSolve::Exact(chol) => chol.solve(&rhs),
                    _ => {
                        return Err(IetiError::Config(
                            "direct primal mode requires exact local solvers".into(),
                        ))
                    }
                },
                PrimalMode::Pcg { eps_c, maxit } => {
                    if rhs.iter().all(|&v| v == 0.0) {
                        vec![0.0; nd]
                    } else {
                        let prec = PrecOp {
                            local: &local[k],
                            blocks: pb,
                        };
                        let (col, _) = pcg(&pb.a_dd, &prec, &rhs, eps_c, maxit).map_err(|e| {
                            IetiError::PrimalSolve {
                                patch: k,
                                column: c,
                                source: e,
                            }
                        })?;
                        col
                    }
                }
            };
            psi.set_column(c, &col);
        }
        // Local coarse block Psi^T A Psi =
        // Psi_D^T (A_dd Psi_D + A_dC) + (A_dC)^T Psi_D + A_CC.
        let mut local_coarse = pb.a_cc.clone();
        let mut a_psi_cols = DenseMatrix::zeros(nd, nc);
        for c in 0..nc {
            let col = psi.column(c);
            let mut acol = vec![0.0; nd];
            pb.a_dd.matvec(&col, &mut acol);
            a_psi_cols.set_column(c, &acol);
        }
        for i in 0..nc {
            let psi_i = psi.column(i);
            for j in 0..nc {
                let psi_j = psi.column(j);
                let mut v = 0.0;
                for d in 0..nd {
                    v += psi_i[d] * (a_psi_cols[(d, j)] + pb.a_dc[(d, j)])
                        + pb.a_dc[(d, i)] * psi_j[d];
                }
                local_coarse[(i, j)] += v;
            }
        }
        local_coarse.symmetrize();
        let g = &asm.primal_map.local_to_global[k];
        for i in 0..nc {
            for j in 0..nc {
                a_psi[(g[i], g[j])] += local_coarse[(i, j)];
            }
        }
        for c in 0..nc {
            let psi_c = psi.column(c);
            let mut v = pb.f_c[c];
            for d in 0..nd {
                v += psi_c[d] * pb.f_delta[d];
            }
            f_pi[g[c]] += v;
        }
        psi_delta.push(psi);
    }
    a_psi.symmetrize();
    let a_psi_chol = if ng > 0 {
        Some(a_psi.cholesky()?)
    } else {
        None
    };
    Ok(PrimalBasis {
        n_global: ng,
        psi_delta,
        g_map: asm.primal_map.local_to_global.clone(),
        a_psi,
        a_psi_chol,
        f_pi,
    })
}

struct PrecOp<'a> {
    local: &'a LocalSolve,
    blocks: &'a PatchBlocks,
}

impl LinOp for PrecOp<'_> {
    fn dim(&self) -> usize {
        self.blocks.part.n_delta()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let out = self.local.apply(self.blocks, x);
        y.copy_from_slice(&out);
    }
}

/// The saddle-point operator on (u_delta, u_pi, lambda).
pub struct SaddleOperator<'a> {
    pub asm: &'a IetiAssembly,
    pub primal: &'a PrimalBasis,
}

impl SaddleOperator<'_> {
    pub fn n_delta(&self) -> usize {
        self.asm.n_delta_total
    }

    pub fn n_pi(&self) -> usize {
        self.primal.n_global
    }

    pub fn n_lambda(&self) -> usize {
        self.asm.n_lambda()
    }

    /// Psi u_pi scattered to the concatenated delta vector.
    pub fn psi_times(&self, u_pi: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (k, pb) in self.asm.patches.iter().enumerate() {
            let psi = &self.primal.psi_delta[k];
            let g = &self.primal.g_map[k];
            let base = self.asm.delta_offsets[k];
            for (c, &gc) in g.iter().enumerate() {
                let v = u_pi[gc];
                if v == 0.0 {
                    continue;
                }
                for d in 0..pb.part.n_delta() {
                    out[base + d] += psi[(d, c)] * v;
                }
            }
        }
    }

    /// Psi^T w for a concatenated delta vector.
    pub fn psi_transpose_times(&self, w: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (k, pb) in self.asm.patches.iter().enumerate() {
            let psi = &self.primal.psi_delta[k];
            let g = &self.primal.g_map[k];
            let base = self.asm.delta_offsets[k];
            for (c, &gc) in g.iter().enumerate() {
                let mut v = 0.0;
                for d in 0..pb.part.n_delta() {
                    v += psi[(d, c)] * w[base + d];
                }
                out[gc] += v;
            }
        }
    }
}

impl LinOp for SaddleOperator<'_> {
    fn dim(&self) -> usize {
        self.n_delta() + self.n_pi() + self.n_lambda()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nd = self.n_delta();
        let np = self.n_pi();
        let nl = self.n_lambda();
        let (u_delta, rest) = x.split_at(nd);
        let (u_pi, lambda) = rest.split_at(np);
        let (y_delta, y_rest) = y.split_at_mut(nd);
        let (y_pi, y_lambda) = y_rest.split_at_mut(np);

        // y_delta = A_dd u_delta + B_Delta^T lambda
        for (k, pb) in self.asm.patches.iter().enumerate() {
            let base = self.asm.delta_offsets[k];
            let n = pb.part.n_delta();
            pb.a_dd
                .matvec(&u_delta[base..base + n], &mut y_delta[base..base + n]);
        }
        for (j, &((kp, dp), (km, dm))) in self.asm.rows_delta.iter().enumerate() {
            y_delta[self.asm.delta_offsets[kp] + dp] += lambda[j];
            y_delta[self.asm.delta_offsets[km] + dm] -= lambda[j];
        }

        // y_pi = A_Psi u_pi + Psi^T B^T lambda
        let mut bt_lambda = vec![0.0; nd];
        self.asm.jump_transpose_apply(lambda, &mut bt_lambda);
        let mut tmp_pi = vec![0.0; np];
        self.psi_transpose_times(&bt_lambda, &mut tmp_pi);
        self.primal.a_psi.matvec(u_pi, y_pi);
        for i in 0..np {
            y_pi[i] += tmp_pi[i];
        }

        // y_lambda = B_Delta u_delta + B Psi u_pi
        let mut w = vec![0.0; nd];
        self.psi_times(u_pi, &mut w);
        for i in 0..nd {
            w[i] += u_delta[i];
        }
        if nl > 0 {
            self.asm.jump_apply(&w, y_lambda);
        }
    }
}

/// Block-diagonal preconditioner diag(P, A_Psi^-1, M_sD) with accumulated
/// application timers for the local and Dirichlet blocks.
pub struct SaddlePreconditioner<'a> {
    pub asm: &'a IetiAssembly,
    pub primal: &'a PrimalBasis,
    pub local: &'a [LocalSolve],
    pub dirichlet: &'a ScaledDirichlet,
    pub jobs: usize,
    pub t_local_nanos: AtomicU64,
    pub t_dirichlet_nanos: AtomicU64,
}

impl<'a> SaddlePreconditioner<'a> {
    pub fn new(
        asm: &'a IetiAssembly,
        primal: &'a PrimalBasis,
        local: &'a [LocalSolve],
        dirichlet: &'a ScaledDirichlet,
        jobs: usize,
    ) -> Self {
        SaddlePreconditioner {
            asm,
            primal,
            local,
            dirichlet,
            jobs,
            t_local_nanos: AtomicU64::new(0),
            t_dirichlet_nanos: AtomicU64::new(0),
        }
    }

    pub fn t_local(&self) -> f64 {
        self.t_local_nanos.load(Ordering::Relaxed) as f64 * 1e-9
    }

    pub fn t_dirichlet(&self) -> f64 {
        self.t_dirichlet_nanos.load(Ordering::Relaxed) as f64 * 1e-9
    }
}

impl LinOp for SaddlePreconditioner<'_> {
    fn dim(&self) -> usize {
        self.asm.n_delta_total + self.primal.n_global + self.asm.n_lambda()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nd = self.asm.n_delta_total;
        let np = self.primal.n_global;
        let (r_delta, rest) = x.split_at(nd);
        let (r_pi, q) = rest.split_at(np);
        let (y_delta, y_rest) = y.split_at_mut(nd);
        let (y_pi, y_lambda) = y_rest.split_at_mut(np);

        let t0 = std::time::Instant::now();
        let outputs = crate::util::map_indexed(self.jobs, self.asm.n_patches(), |k| {
            let base = self.asm.delta_offsets[k];
            let n = self.asm.patches[k].part.n_delta();
            self.local[k].apply(&self.asm.patches[k], &r_delta[base..base + n])
        });
        for (k, out) in outputs.into_iter().enumerate() {
            let base = self.asm.delta_offsets[k];
            y_delta[base..base + out.len()].copy_from_slice(&out);
        }
        self.t_local_nanos
            .fetch_add(t0.elapsed().as_nanos() as u64, Ordering::Relaxed);

        let w = self.primal.coarse_solve(r_pi);
        y_pi.copy_from_slice(&w);

        let t1 = std::time::Instant::now();
        let zeta = self.dirichlet.apply(q);
        y_lambda.copy_from_slice(&zeta);
        self.t_dirichlet_nanos
            .fetch_add(t1.elapsed().as_nanos() as u64, Ordering::Relaxed);
    }
}
