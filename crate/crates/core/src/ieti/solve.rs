//! Outer solves for the tearing system: MINRES on the saddle formulation
//! with the block preconditioner, or PCG on the dual Schur complement, and
//! the final solution recovery.

use super::system::{
    assemble_ieti, build_local_preconditioner, build_primal_basis, build_scaled_dirichlet,
    IetiAssembly, LocalSolve, PrimalBasis, PrimalMode, SaddleOperator, SaddlePreconditioner,
};
use super::IetiError;
use crate::assembly::Discretization;
use crate::krylov::{minres, pcg, FnOp, SolveReport};
use crate::linalg::SparseCholesky;
use std::cell::Cell;

/// Solver variant: inexact fast-diagonalization local solves (plain or
/// wrapped in two Richardson steps), exact sparse local solves in the
/// saddle formulation, or the Schur-complement formulation with CG.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Mfd,
    Mfd2,
    Mlu,
    Cglu,
}

impl Variant {
    pub fn uses_exact_local(self) -> bool {
        matches!(self, Variant::Mlu | Variant::Cglu)
    }

    pub fn all() -> [Variant; 4] {
        [Variant::Mfd, Variant::Mfd2, Variant::Mlu, Variant::Cglu]
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mfd" => Ok(Variant::Mfd),
            "mfd2" | "mfd-2" => Ok(Variant::Mfd2),
            "mlu" => Ok(Variant::Mlu),
            "cglu" => Ok(Variant::Cglu),
            other => Err(format!(
                "unknown variant '{other}', expected mfd|mfd2|mlu|cglu"
            )),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Variant::Mfd => "MFD",
            Variant::Mfd2 => "MFD-2",
            Variant::Mlu => "MLU",
            Variant::Cglu => "CGLU",
        };
        write!(f, "{s}")
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub variant: Variant,
    /// Relative tolerance of the outer solve (preconditioned residual for
    /// MINRES, l2 residual for the CG variant).
    pub eps: f64,
    /// Tolerance of the primal-basis PCG solves; defaults to eps / 100.
    pub eps_c: Option<f64>,
    pub max_outer: usize,
    pub max_local: usize,
    pub jobs: usize,
}

impl SolveOptions {
    pub fn new(variant: Variant) -> Self {
        SolveOptions {
            variant,
            eps: 1e-8,
            eps_c: None,
            max_outer: 5000,
            max_local: 500,
            jobs: 1,
        }
    }

    pub fn eps_c_value(&self) -> f64 {
        self.eps_c.unwrap_or(self.eps / 100.0)
    }
}

/// Wall-clock phase breakdown of one solve.
#[derive(Clone, Copy, Debug, Default)]
pub struct PhaseTimes {
    pub t_psi: f64,
    pub t_setup_local: f64,
    pub t_setup_dirichlet: f64,
    pub t_apply_local: f64,
    pub t_apply_dirichlet: f64,
    pub t_solve: f64,
    pub t_total: f64,
}

pub struct IetiSolution {
    /// Per patch, the recovered patch-space coefficients (artificial
    /// interface components discarded).
    pub patch_coeffs: Vec<Vec<f64>>,
    /// Per patch, the full extended coefficient vector.
    pub ext_coeffs: Vec<Vec<f64>>,
    pub u_delta: Vec<f64>,
    pub u_pi: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub report: SolveReport,
    pub phases: PhaseTimes,
    /// l2 norm of B_Delta u_Delta + B Psi u_Pi at the returned solution.
    pub constraint_residual: f64,
}

/// Assemble and solve with the chosen variant.
pub fn solve_ieti(
    disc: &Discretization,
    rhs: &(dyn Fn([f64; 2]) -> f64 + Sync),
    opts: &SolveOptions,
) -> Result<IetiSolution, IetiError> {
    let t0 = std::time::Instant::now();
    let asm = assemble_ieti(disc, rhs, opts.jobs)?;
    let mut sol = solve_with_assembly(disc, &asm, opts)?;
    sol.phases.t_total = t0.elapsed().as_secs_f64();
    Ok(sol)
}

/// Solve a pre-assembled system.
pub fn solve_with_assembly(
    disc: &Discretization,
    asm: &IetiAssembly,
    opts: &SolveOptions,
) -> Result<IetiSolution, IetiError> {
    let t_total0 = std::time::Instant::now();
    let mut phases = PhaseTimes::default();

    // Local solvers.
    let t = std::time::Instant::now();
    let local: Vec<LocalSolve> = match opts.variant {
        Variant::Mfd | Variant::Mfd2 => {
            let built = crate::util::map_indexed(opts.jobs, asm.n_patches(), |k| {
                build_local_preconditioner(disc, &asm.exts[k], &asm.patches[k].part, &asm.params[k])
            });
            let mut out = Vec::with_capacity(asm.n_patches());
            for lp in built {
                let lp = lp?;
                out.push(if opts.variant == Variant::Mfd {
                    LocalSolve::Inexact(lp)
                } else {
                    LocalSolve::InexactRichardson(lp, 2)
                });
            }
            out
        }
        Variant::Mlu | Variant::Cglu => {
            let built = crate::util::map_indexed(opts.jobs, asm.n_patches(), |k| {
                SparseCholesky::factor(&asm.patches[k].a_dd)
            });
            let mut out = Vec::with_capacity(asm.n_patches());
            for ch in built {
                out.push(LocalSolve::Exact(ch?));
            }
            out
        }
    };
    phases.t_setup_local = t.elapsed().as_secs_f64();

    // Scaled Dirichlet preconditioner.
    let t = std::time::Instant::now();
    let dirichlet = build_scaled_dirichlet(asm, opts.variant.uses_exact_local())?;
    phases.t_setup_dirichlet = t.elapsed().as_secs_f64();

    // Primal basis and coarse problem.
    let t = std::time::Instant::now();
    let mode = if opts.variant.uses_exact_local() {
        PrimalMode::Direct
    } else {
        let nd_max = asm
            .patches
            .iter()
            .map(|p| p.part.n_delta())
            .max()
            .unwrap_or(0);
        let maxit = opts.max_local.max(10 * (nd_max as f64).sqrt() as usize);
        PrimalMode::Pcg {
            eps_c: opts.eps_c_value(),
            maxit,
        }
    };
    let primal = build_primal_basis(asm, &local, mode)?;
    phases.t_psi = t.elapsed().as_secs_f64();

    let nd = asm.n_delta_total;
    let np = primal.n_global;
    let nl = asm.n_lambda();

    let t_solve0 = std::time::Instant::now();
    let (u_delta, u_pi, multipliers, report) = match opts.variant {
        Variant::Cglu => {
            let (ud, up, la, rep, tl, td) =
                solve_dual_schur(asm, &primal, &local, &dirichlet, opts)?;
            phases.t_apply_local = tl;
            phases.t_apply_dirichlet = td;
            (ud, up, la, rep)
        }
        _ => {
            let op = SaddleOperator {
                asm,
                primal: &primal,
            };
            let prec = SaddlePreconditioner::new(asm, &primal, &local, &dirichlet, opts.jobs);
            let mut b = vec![0.0; nd + np + nl];
            for (k, pb) in asm.patches.iter().enumerate() {
                let base = asm.delta_offsets[k];
                b[base..base + pb.f_delta.len()].copy_from_slice(&pb.f_delta);
            }
            b[nd..nd + np].copy_from_slice(&primal.f_pi);
            let (x, rep) = minres(&op, &prec, &b, opts.eps, opts.max_outer)?;
            phases.t_apply_local = prec.t_local();
            phases.t_apply_dirichlet = prec.t_dirichlet();
            let u_delta = x[..nd].to_vec();
            let u_pi = x[nd..nd + np].to_vec();
            let lambda = x[nd + np..].to_vec();
            (u_delta, u_pi, lambda, rep)
        }
    };
    phases.t_solve = t_solve0.elapsed().as_secs_f64();

    // Recovery: u = (u_delta; 0) + Psi u_pi, scattered per patch.
    let op = SaddleOperator {
        asm,
        primal: &primal,
    };
    let mut full_delta = vec![0.0; nd];
    op.psi_times(&u_pi, &mut full_delta);
    for i in 0..nd {
        full_delta[i] += u_delta[i];
    }
    let mut constraint = vec![0.0; nl];
    if nl > 0 {
        asm.jump_apply(&full_delta, &mut constraint);
    }
    let constraint_residual = constraint.iter().map(|v| v * v).sum::<f64>().sqrt();

    let mut ext_coeffs = Vec::with_capacity(asm.n_patches());
    let mut patch_coeffs = Vec::with_capacity(asm.n_patches());
    for (k, pb) in asm.patches.iter().enumerate() {
        let ext = &asm.exts[k];
        let base = asm.delta_offsets[k];
        let mut v = vec![0.0; ext.n_ext];
        for (dof, class) in pb.part.class_of.iter().enumerate() {
            v[dof] = match class {
                super::dofs::DofClass::Corner => {
                    let c = pb.part.c_of[dof].expect("corner ordinal");
                    u_pi[primal.g_map[k][c]]
                }
                _ => full_delta[base + pb.part.delta_of[dof].expect("delta ordinal")],
            };
        }
        patch_coeffs.push(v[..ext.n_patch].to_vec());
        ext_coeffs.push(v);
    }

    phases.t_total = t_total0.elapsed().as_secs_f64();
    Ok(IetiSolution {
        patch_coeffs,
        ext_coeffs,
        u_delta,
        u_pi,
        multipliers,
        report,
        phases,
        constraint_residual,
    })
}

/// CG on the dual Schur complement F lambda = d with the exact scaled
/// Dirichlet preconditioner, followed by back-substitution.
#[allow(clippy::type_complexity)]
fn solve_dual_schur(
    asm: &IetiAssembly,
    primal: &PrimalBasis,
    local: &[LocalSolve],
    dirichlet: &crate::fastdiag::ScaledDirichlet,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, SolveReport, f64, f64), IetiError> {
    let nd = asm.n_delta_total;
    let nl = asm.n_lambda();
    let op = SaddleOperator { asm, primal };
    let t_local = Cell::new(0.0f64);
    let t_dirichlet = Cell::new(0.0f64);

    let solve_delta = |r: &[f64]| -> Vec<f64> {
        let t0 = std::time::Instant::now();
        let mut out = vec![0.0; nd];
        for (k, pb) in asm.patches.iter().enumerate() {
            let base = asm.delta_offsets[k];
            let n = pb.part.n_delta();
            let x = local[k].apply(pb, &r[base..base + n]);
            out[base..base + n].copy_from_slice(&x);
        }
        t_local.set(t_local.get() + t0.elapsed().as_secs_f64());
        out
    };

    // d = B A_dd^-1 f_delta + B Psi A_Psi^-1 f_Pi
    let mut f_delta = vec![0.0; nd];
    for (k, pb) in asm.patches.iter().enumerate() {
        let base = asm.delta_offsets[k];
        f_delta[base..base + pb.f_delta.len()].copy_from_slice(&pb.f_delta);
    }
    let mut d = vec![0.0; nl];
    if nl > 0 {
        let x = solve_delta(&f_delta);
        asm.jump_apply(&x, &mut d);
        let z = primal.coarse_solve(&primal.f_pi);
        let mut w = vec![0.0; nd];
        op.psi_times(&z, &mut w);
        let mut bw = vec![0.0; nl];
        asm.jump_apply(&w, &mut bw);
        for j in 0..nl {
            d[j] += bw[j];
        }
    }

    let f_op = FnOp::new(nl, |lambda: &[f64], y: &mut [f64]| {
        let mut bt = vec![0.0; nd];
        asm.jump_transpose_apply(lambda, &mut bt);
        let x = solve_delta(&bt);
        asm.jump_apply(&x, y);
        // coarse term
        let mut p = vec![0.0; primal.n_global];
        op.psi_transpose_times(&bt, &mut p);
        let z = primal.coarse_solve(&p);
        let mut w = vec![0.0; nd];
        op.psi_times(&z, &mut w);
        let mut bw = vec![0.0; nl];
        asm.jump_apply(&w, &mut bw);
        for j in 0..nl {
            y[j] += bw[j];
        }
    });
    let msd_op = FnOp::new(nl, |q: &[f64], y: &mut [f64]| {
        let t0 = std::time::Instant::now();
        let z = dirichlet.apply(q);
        y.copy_from_slice(&z);
        t_dirichlet.set(t_dirichlet.get() + t0.elapsed().as_secs_f64());
    });

    let (lambda, report) = if nl > 0 {
        pcg(&f_op, &msd_op, &d, opts.eps, opts.max_outer)?
    } else {
        (Vec::new(), SolveReport::default())
    };

    // Back-substitution.
    let mut bt = vec![0.0; nd];
    if nl > 0 {
        asm.jump_transpose_apply(&lambda, &mut bt);
    }
    let mut rhs_delta = f_delta;
    for i in 0..nd {
        rhs_delta[i] -= bt[i];
    }
    let u_delta = solve_delta(&rhs_delta);
    let mut p = vec![0.0; primal.n_global];
    op.psi_transpose_times(&bt, &mut p);
    let mut rhs_pi = primal.f_pi.clone();
    for i in 0..rhs_pi.len() {
        rhs_pi[i] -= p[i];
    }
    let u_pi = primal.coarse_solve(&rhs_pi);
    Ok((
        u_delta,
        u_pi,
        lambda,
        report,
        t_local.get(),
        t_dirichlet.get(),
    ))
}
