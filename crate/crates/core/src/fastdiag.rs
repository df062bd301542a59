//! Fast diagonalization for Kronecker-sum matrices, the
//! Sherman-Morrison-Woodbury corner correction, the additive local
//! preconditioner built from the two surrogate spaces, and the patch-local
//! Schur complements of the scaled Dirichlet preconditioner.

use crate::assembly::EdgeProjection;
use crate::linalg::{
    general_eig_spd, CholeskyFactor, CsrMatrix, DenseMatrix, LinalgError, LuFactor, SparseCholesky,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FastDiagError {
    #[error("mass factor is not SPD: {0}")]
    MassNotSpd(String),
    #[error("stiffness factor has negative eigenvalue {0:.3e}")]
    StiffnessIndefinite(f64),
    #[error("operator is singular (alpha = 0 with no Dirichlet reduction)")]
    SingularOperator,
    #[error("capacitance matrix is singular")]
    SingularCapacitance,
    #[error("Richardson order must be >= 1, got {0}")]
    InvalidRichardsonOrder(usize),
    #[error("dimension mismatch: expected {0}, got {1}")]
    DimensionMismatch(usize, usize),
}

/// Fast-diagonalization factorization of K1 (x) M2 + M1 (x) K2 +
/// alpha M1 (x) M2 through per-direction generalized eigendecompositions
/// K z = lambda M z with M-orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct FdSolver {
    z1: DenseMatrix,
    lam1: Vec<f64>,
    z2: DenseMatrix,
    lam2: Vec<f64>,
    alpha: f64,
    singular: bool,
}

pub fn fd_factorize(
    m1: &DenseMatrix,
    k1: &DenseMatrix,
    m2: &DenseMatrix,
    k2: &DenseMatrix,
    alpha: f64,
) -> Result<FdSolver, FastDiagError> {
    let dir =
        |m: &DenseMatrix, k: &DenseMatrix| -> Result<(Vec<f64>, DenseMatrix), FastDiagError> {
            let (lam, z) = general_eig_spd(k, m).map_err(|e| match e {
                LinalgError::NotPositiveDefinite { .. } => FastDiagError::MassNotSpd(e.to_string()),
                other => FastDiagError::MassNotSpd(other.to_string()),
            })?;
            if let Some(&min) = lam.first() {
                if min < -1e-12 {
                    return Err(FastDiagError::StiffnessIndefinite(min));
                }
            }
            Ok((lam, z))
        };
    let (lam1, z1) = dir(m1, k1)?;
    let (lam2, z2) = dir(m2, k2)?;
    #[cfg(debug_assertions)]
    {
        // Z^T M Z = I and Z^T K Z = diag(lambda) to 1e-10.
        for (m, k, z, lam) in [(m1, k1, &z1, &lam1), (m2, k2, &z2, &lam2)] {
            let zt = z.transpose();
            let ztmz = zt.matmul(m).matmul(z);
            let ztkz = zt.matmul(k).matmul(z);
            for i in 0..lam.len() {
                for j in 0..lam.len() {
                    let want_m = f64::from(i == j);
                    let want_k = if i == j { lam[i] } else { 0.0 };
                    debug_assert!(
                        (ztmz[(i, j)] - want_m).abs() <= 1e-10 * lam.len() as f64,
                        "mass orthonormality violated"
                    );
                    debug_assert!(
                        (ztkz[(i, j)] - want_k).abs() <= 1e-10 * (1.0 + lam.last().unwrap().abs()),
                        "stiffness diagonalization violated"
                    );
                }
            }
        }
    }
    let min1 = lam1.first().copied().unwrap_or(0.0);
    let min2 = lam2.first().copied().unwrap_or(0.0);
    let scale = lam1.last().copied().unwrap_or(1.0) + lam2.last().copied().unwrap_or(1.0);
    let singular = (min1 + min2 + alpha).abs() <= 1e-12 * scale.max(1.0);
    Ok(FdSolver {
        z1,
        lam1,
        z2,
        lam2,
        alpha,
        singular,
    })
}

impl FdSolver {
    pub fn n1(&self) -> usize {
        self.lam1.len()
    }

    pub fn n2(&self) -> usize {
        self.lam2.len()
    }

    pub fn n(&self) -> usize {
        self.n1() * self.n2()
    }

    /// A zero Kronecker eigenvalue was detected at factorization time.
    pub fn is_singular(&self) -> bool {
        self.singular
    }

    /// x = (K1 (x) M2 + M1 (x) K2 + alpha M1 (x) M2)^-1 b via two small
    /// dense multiplications per direction and a diagonal solve.
    pub fn apply_inverse(&self, b: &[f64]) -> Result<Vec<f64>, FastDiagError> {
        if self.singular {
            return Err(FastDiagError::SingularOperator);
        }
        if b.len() != self.n() {
            return Err(FastDiagError::DimensionMismatch(self.n(), b.len()));
        }
        use crate::linalg::{kron_matvec_op, Transpose};
        let mut y = kron_matvec_op(&self.z1, Transpose::Yes, &self.z2, Transpose::Yes, b);
        let n2 = self.n2();
        for (idx, v) in y.iter_mut().enumerate() {
            let i1 = idx / n2;
            let i2 = idx % n2;
            *v /= self.lam1[i1] + self.lam2[i2] + self.alpha;
        }
        Ok(kron_matvec_op(
            &self.z1,
            Transpose::No,
            &self.z2,
            Transpose::No,
            &y,
        ))
    }
}

/// Column q of K1 (x) M2 + M1 (x) K2 + alpha M1 (x) M2.
fn kron_sum_column(
    m1: &DenseMatrix,
    k1: &DenseMatrix,
    m2: &DenseMatrix,
    k2: &DenseMatrix,
    alpha: f64,
    q: usize,
) -> Vec<f64> {
    let n1 = m1.rows();
    let n2 = m2.rows();
    let q1 = q / n2;
    let q2 = q % n2;
    let mut col = vec![0.0; n1 * n2];
    for i1 in 0..n1 {
        let a = k1[(i1, q1)];
        let b = m1[(i1, q1)];
        if a == 0.0 && b == 0.0 {
            continue;
        }
        for i2 in 0..n2 {
            col[i1 * n2 + i2] += a * m2[(i2, q2)] + b * (k2[(i2, q2)] + alpha * m2[(i2, q2)]);
        }
    }
    col
}

/// Sherman-Morrison-Woodbury realization of the inverse of the
/// corner-deleted block of a Kronecker-sum matrix: the corner rows/columns
/// are decoupled by a rank-2|C| correction whose capacitance system is
/// factorized densely.
pub struct SmwSolver {
    fd: FdSolver,
    /// Corner positions within the patch tensor ordering.
    corners: Vec<usize>,
    /// Complement (delta) positions, ascending.
    delta: Vec<usize>,
    u_cols: Vec<Vec<f64>>,
    v_cols: Vec<Vec<f64>>,
    cap_lu: Option<LuFactor>,
}

pub fn smw_factorize(
    m1: &DenseMatrix,
    k1: &DenseMatrix,
    m2: &DenseMatrix,
    k2: &DenseMatrix,
    alpha: f64,
    corners: &[usize],
) -> Result<SmwSolver, FastDiagError> {
    let fd = fd_factorize(m1, k1, m2, k2, alpha)?;
    let n = fd.n();
    let corners: Vec<usize> = {
        let mut c = corners.to_vec();
        c.sort_unstable();
        c.dedup();
        c
    };
    let is_corner = {
        let mut mask = vec![false; n];
        for &q in &corners {
            mask[q] = true;
        }
        mask
    };
    let delta: Vec<usize> = (0..n).filter(|i| !is_corner[*i]).collect();
    let nc = corners.len();
    if nc == 0 {
        return Ok(SmwSolver {
            fd,
            corners,
            delta,
            u_cols: Vec::new(),
            v_cols: Vec::new(),
            cap_lu: None,
        });
    }
    // U = [ [D_dc, 0], [0, I_cc] ], V^T = [ [0, I_cc], [D_cd, 0] ]:
    // column j < nc of U is the q_j-th matrix column with corner rows
    // zeroed; column nc + j is the corner indicator e_{q_j}. V swaps the
    // two groups.
    let mut u_cols = Vec::with_capacity(2 * nc);
    let mut v_cols = Vec::with_capacity(2 * nc);
    let mut matrix_cols = Vec::with_capacity(nc);
    for &q in &corners {
        let mut col = kron_sum_column(m1, k1, m2, k2, alpha, q);
        for &c in &corners {
            col[c] = 0.0;
        }
        matrix_cols.push(col);
    }
    for col in &matrix_cols {
        u_cols.push(col.clone());
    }
    for &q in &corners {
        let mut e = vec![0.0; n];
        e[q] = 1.0;
        u_cols.push(e);
    }
    for &q in &corners {
        let mut e = vec![0.0; n];
        e[q] = 1.0;
        v_cols.push(e);
    }
    for col in &matrix_cols {
        v_cols.push(col.clone());
    }
    // Capacitance I - V^T Dinv U, factorized densely.
    let m = 2 * nc;
    let mut cap = DenseMatrix::identity(m);
    for (j, u) in u_cols.iter().enumerate() {
        let du = fd.apply_inverse(u)?;
        for (i, v) in v_cols.iter().enumerate() {
            let dot: f64 = v.iter().zip(du.iter()).map(|(a, b)| a * b).sum();
            cap[(i, j)] -= dot;
        }
    }
    let cap_lu = cap.lu().map_err(|_| FastDiagError::SingularCapacitance)?;
    Ok(SmwSolver {
        fd,
        corners,
        delta,
        u_cols,
        v_cols,
        cap_lu: Some(cap_lu),
    })
}

impl SmwSolver {
    pub fn n_delta(&self) -> usize {
        self.delta.len()
    }

    pub fn corners(&self) -> &[usize] {
        &self.corners
    }

    pub fn delta_positions(&self) -> &[usize] {
        &self.delta
    }

    pub fn fd(&self) -> &FdSolver {
        &self.fd
    }

    /// x_delta = (corner-deleted block)^-1 b_delta: zero-extend, apply the
    /// SMW-corrected full inverse, restrict.
    pub fn apply(&self, b_delta: &[f64]) -> Result<Vec<f64>, FastDiagError> {
        if b_delta.len() != self.delta.len() {
            return Err(FastDiagError::DimensionMismatch(
                self.delta.len(),
                b_delta.len(),
            ));
        }
        let n = self.fd.n();
        let mut b = vec![0.0; n];
        for (i, &pos) in self.delta.iter().enumerate() {
            b[pos] = b_delta[i];
        }
        let mut x = self.fd.apply_inverse(&b)?;
        if let Some(cap_lu) = &self.cap_lu {
            let m = self.u_cols.len();
            let mut c = vec![0.0; m];
            for (i, v) in self.v_cols.iter().enumerate() {
                c[i] = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
            }
            let y = cap_lu.solve(&c);
            let mut uy = vec![0.0; n];
            for (j, u) in self.u_cols.iter().enumerate() {
                let yj = y[j];
                if yj == 0.0 {
                    continue;
                }
                for (t, &uv) in uy.iter_mut().zip(u.iter()) {
                    *t += yj * uv;
                }
            }
            let corr = self.fd.apply_inverse(&uy)?;
            for i in 0..n {
                x[i] += corr[i];
            }
        }
        Ok(self.delta.iter().map(|&pos| x[pos]).collect())
    }
}

/// One artificial-interface block of the local preconditioner.
pub struct TracePrecBlock {
    /// Extended-delta index of each delta dof of this trace block.
    pub ext_delta: Vec<usize>,
    /// Position within the full trace block of each delta dof.
    pub local: Vec<usize>,
    /// Number of dofs of the full trace block.
    pub n_full: usize,
    /// Cholesky of the delta-restricted scaled edge mass.
    pub d2_chol: CholeskyFactor,
    /// Edge L2 projection of the interface.
    pub proj: EdgeProjection,
    /// Patch-delta index of each own-edge-trace dof (None at corners).
    pub own_to_patch_delta: Vec<Option<usize>>,
}

/// Additive two-space preconditioner for the delta block of one patch:
/// P = E1 (D1_dd)^-1 E1^T + E2 (D2_dd)^-1 E2^T with the first solve done
/// by fast diagonalization plus SMW correction and the second by small
/// direct solves on the artificial interfaces.
pub struct LocalPreconditioner {
    pub smw: SmwSolver,
    /// Extended-delta index of each patch-delta dof (SMW delta ordering).
    pub patch_to_ext_delta: Vec<usize>,
    pub blocks: Vec<TracePrecBlock>,
    pub n_delta_ext: usize,
}

impl LocalPreconditioner {
    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>, FastDiagError> {
        if r.len() != self.n_delta_ext {
            return Err(FastDiagError::DimensionMismatch(self.n_delta_ext, r.len()));
        }
        // E1^T r: patch-delta part plus adjoint-projected trace parts.
        let mut g = vec![0.0; self.patch_to_ext_delta.len()];
        for (i, &e) in self.patch_to_ext_delta.iter().enumerate() {
            g[i] = r[e];
        }
        for blk in &self.blocks {
            let mut r_tr = vec![0.0; blk.n_full];
            for (&e, &loc) in blk.ext_delta.iter().zip(blk.local.iter()) {
                r_tr[loc] = r[e];
            }
            let own = blk.proj.project_transpose(&r_tr);
            for (a, opt) in blk.own_to_patch_delta.iter().enumerate() {
                if let Some(pd) = opt {
                    g[*pd] += own[a];
                }
            }
        }
        // (D1_dd)^-1
        let z = self.smw.apply(&g)?;
        // E1 z
        let mut w = vec![0.0; self.n_delta_ext];
        for (i, &e) in self.patch_to_ext_delta.iter().enumerate() {
            w[e] = z[i];
        }
        for blk in &self.blocks {
            let mut own = vec![0.0; blk.own_to_patch_delta.len()];
            for (a, opt) in blk.own_to_patch_delta.iter().enumerate() {
                if let Some(pd) = opt {
                    own[a] = z[*pd];
                }
            }
            let tr = blk.proj.project(&own);
            for (&e, &loc) in blk.ext_delta.iter().zip(blk.local.iter()) {
                w[e] += tr[loc];
            }
        }
        // E2 (D2_dd)^-1 E2^T r
        for blk in &self.blocks {
            let rd: Vec<f64> = blk.ext_delta.iter().map(|&e| r[e]).collect();
            let y = blk.d2_chol.solve(&rd);
            for (i, &e) in blk.ext_delta.iter().enumerate() {
                w[e] += y[i];
            }
        }
        Ok(w)
    }
}

/// nu preconditioned Richardson steps on A x = r starting from zero:
/// realizes (I - (I - P A)^nu) A^-1. nu = 1 reproduces P exactly.
pub fn richardson_apply(
    prec: &dyn Fn(&[f64]) -> Vec<f64>,
    op: &dyn Fn(&[f64]) -> Vec<f64>,
    nu: usize,
    r: &[f64],
) -> Result<Vec<f64>, FastDiagError> {
    if nu < 1 {
        return Err(FastDiagError::InvalidRichardsonOrder(nu));
    }
    let mut x = prec(r);
    for _ in 1..nu {
        let ax = op(&x);
        let res: Vec<f64> = r.iter().zip(ax.iter()).map(|(a, b)| a - b).collect();
        let dx = prec(&res);
        for (xi, di) in x.iter_mut().zip(dx.iter()) {
            *xi += di;
        }
    }
    Ok(x)
}

/// Interior solver of a patch Schur complement: fast diagonalization on
/// the parameter-domain interior block, or an exact sparse Cholesky of the
/// physical interior block.
pub enum InnerSolver {
    Fd(FdSolver),
    Chol(SparseCholesky),
}

impl InnerSolver {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            InnerSolver::Fd(fd) => fd.apply_inverse(b).expect("interior block nonsingular"),
            InnerSolver::Chol(ch) => ch.solve(b),
        }
    }
}

/// One patch's Schur complement S = D_gg - D_gi inv(D_ii) D_ig applied
/// matrix-free.
pub struct PatchSchur {
    pub inner: InnerSolver,
    pub d_ig: CsrMatrix,
    pub d_gi: CsrMatrix,
    pub d_gg: CsrMatrix,
}

impl PatchSchur {
    pub fn apply(&self, x_gamma: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x_gamma.len()];
        self.d_gg.matvec(x_gamma, &mut out);
        if self.d_ig.nrows() > 0 {
            let mut t = vec![0.0; self.d_ig.nrows()];
            self.d_ig.matvec(x_gamma, &mut t);
            let y = self.inner.solve(&t);
            let mut corr = vec![0.0; x_gamma.len()];
            self.d_gi.matvec(&y, &mut corr);
            for i in 0..out.len() {
                out[i] -= corr[i];
            }
        }
        out
    }

    /// Dense Schur complement; test oracle only.
    pub fn dense(&self) -> DenseMatrix {
        let ng = self.d_gg.ncols();
        let mut s = DenseMatrix::zeros(ng, ng);
        let mut e = vec![0.0; ng];
        for j in 0..ng {
            e.fill(0.0);
            e[j] = 1.0;
            let col = self.apply(&e);
            s.set_column(j, &col);
        }
        s
    }
}

/// Scaled Dirichlet preconditioner B_G D^-1 S D^-1 B_G^T on the multiplier
/// space, with per-patch Schur complements and multiplicity scaling.
pub struct ScaledDirichlet {
    pub patches: Vec<PatchSchur>,
    /// One entry per multiplier row: ((patch+, gamma idx), (patch-, gamma idx)).
    pub rows: Vec<((usize, usize), (usize, usize))>,
    /// Per patch, 1 + number of multipliers acting on each gamma dof.
    pub scaling: Vec<Vec<f64>>,
}

impl ScaledDirichlet {
    /// Multiplicity scaling computed from the rows: 1 + count.
    pub fn multiplicity_scaling(
        rows: &[((usize, usize), (usize, usize))],
        gamma_sizes: &[usize],
    ) -> Vec<Vec<f64>> {
        let mut scaling: Vec<Vec<f64>> = gamma_sizes.iter().map(|&n| vec![1.0; n]).collect();
        for &((kp, gp), (km, gm)) in rows {
            scaling[kp][gp] += 1.0;
            scaling[km][gm] += 1.0;
        }
        scaling
    }

    pub fn apply(&self, q: &[f64]) -> Vec<f64> {
        assert_eq!(q.len(), self.rows.len());
        // x = D^-1 B_G^T q
        let mut x: Vec<Vec<f64>> = self.scaling.iter().map(|s| vec![0.0; s.len()]).collect();
        for (j, &((kp, gp), (km, gm))) in self.rows.iter().enumerate() {
            x[kp][gp] += q[j];
            x[km][gm] -= q[j];
        }
        for (xk, sk) in x.iter_mut().zip(self.scaling.iter()) {
            for (v, s) in xk.iter_mut().zip(sk.iter()) {
                *v /= s;
            }
        }
        // y = S x patch-wise, then D^-1 again
        let mut y: Vec<Vec<f64>> = Vec::with_capacity(self.patches.len());
        for (k, schur) in self.patches.iter().enumerate() {
            let mut yk = schur.apply(&x[k]);
            for (v, s) in yk.iter_mut().zip(self.scaling[k].iter()) {
                *v /= s;
            }
            y.push(yk);
        }
        // zeta = B_G y
        let mut zeta = vec![0.0; q.len()];
        for (j, &((kp, gp), (km, gm))) in self.rows.iter().enumerate() {
            zeta[j] = y[kp][gp] - y[km][gm];
        }
        zeta
    }
}
