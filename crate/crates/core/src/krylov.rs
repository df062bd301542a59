//! Preconditioned conjugate gradients and MINRES with extreme-eigenvalue
//! estimation from the Lanczos tridiagonal.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KrylovError {
    #[error("operator is not positive definite in the preconditioner inner product (curvature {0:.3e} at iteration {1})")]
    IndefiniteOperator(f64, usize),
    #[error("preconditioner is not positive definite (z.r = {0:.3e} at iteration {1})")]
    IndefinitePreconditioner(f64, usize),
    #[error("no convergence within {maxit} iterations (relative residual {residual:.3e})")]
    MaxIterations {
        maxit: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("dimension mismatch: operator {0}, vector {1}")]
    DimensionMismatch(usize, usize),
}

/// Action of a square linear operator.
pub trait LinOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Identity preconditioner.
pub struct IdentityOp(pub usize);

impl LinOp for IdentityOp {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

impl LinOp for crate::linalg::CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y);
    }
}

impl LinOp for crate::linalg::DenseMatrix {
    fn dim(&self) -> usize {
        self.rows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y);
    }
}

/// Closure-backed operator.
pub struct FnOp<F: Fn(&[f64], &mut [f64])> {
    n: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOp<F> {
    pub fn new(n: usize, f: F) -> Self {
        FnOp { n, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinOp for FnOp<F> {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

/// Outcome of one Krylov solve, with Lanczos-based spectral estimates of
/// the preconditioned operator. Estimates are reported at convergence;
/// intermediate values would only be monotone lower bounds.
#[derive(Clone, Debug, Default)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub eig_min: Option<f64>,
    pub eig_max: Option<f64>,
    pub kappa: Option<f64>,
    pub wall_time: f64,
    pub memory_peak: u64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Extreme eigenvalues (algebraic min and max) and the condition estimate
/// |lambda|_max / |lambda|_min of a symmetric tridiagonal matrix. Returns
/// None on an empty matrix or QL failure.
pub fn lanczos_condition_estimate(diag: &[f64], offdiag: &[f64]) -> Option<(f64, f64, f64)> {
    let evs = tridiag_eigenvalues(diag, offdiag)?;
    let lo = evs.first().copied()?;
    let hi = evs.last().copied()?;
    let amax = evs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let amin = evs.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    Some((lo, hi, amax / amin))
}

/// Eigenvalues of a symmetric tridiagonal matrix in ascending order
/// (QL iteration with implicit shifts, no eigenvectors).
pub fn tridiag_eigenvalues(diag: &[f64], offdiag: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return None;
    }
    assert!(offdiag.len() + 1 >= n, "need n-1 off-diagonal entries");
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&offdiag[..n - 1]);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return None;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            let sign_r = if g >= 0.0 { r } else { -r };
            g = d[m] - d[l] + e[l] / (g + sign_r);
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(d)
}

/// Preconditioned conjugate gradients for SPD operators. Stops when the
/// l2 residual satisfies ||r|| <= tol ||b||; the condition estimate of
/// prec*op comes from the CG Lanczos tridiagonal.
pub fn pcg(
    op: &dyn LinOp,
    prec: &dyn LinOp,
    b: &[f64],
    tol: f64,
    maxit: usize,
) -> Result<(Vec<f64>, SolveReport), KrylovError> {
    let n = op.dim();
    if b.len() != n {
        return Err(KrylovError::DimensionMismatch(n, b.len()));
    }
    let start = std::time::Instant::now();
    let mut report = SolveReport::default();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        report.residual_history.push(0.0);
        report.wall_time = start.elapsed().as_secs_f64();
        return Ok((x, report));
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    prec.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    if rz <= 0.0 {
        return Err(KrylovError::IndefinitePreconditioner(rz, 0));
    }
    let mut ap = vec![0.0; n];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut relres = 1.0;
    report.residual_history.push(1.0);
    for it in 0..maxit {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(KrylovError::IndefiniteOperator(pap, it));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        relres = norm(&r) / bnorm;
        report.residual_history.push(relres);
        report.iterations = it + 1;
        prec.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        alphas.push(alpha);
        betas.push(beta);
        if relres <= tol {
            break;
        }
        if rz_new <= 0.0 {
            return Err(KrylovError::IndefinitePreconditioner(rz_new, it + 1));
        }
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if relres > tol {
        return Err(KrylovError::MaxIterations {
            maxit,
            residual: relres,
            history: report.residual_history,
        });
    }
    // Lanczos tridiagonal from the CG coefficients:
    // T(j,j) = 1/alpha_j + beta_{j-1}/alpha_{j-1}, T(j,j+1) = sqrt(beta_j)/alpha_j.
    let m = report.iterations;
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m.saturating_sub(1)];
    for j in 0..m {
        diag[j] = 1.0 / alphas[j];
        if j > 0 {
            diag[j] += betas[j - 1] / alphas[j - 1];
        }
        if j + 1 < m {
            off[j] = betas[j].max(0.0).sqrt() / alphas[j];
        }
    }
    if let Some((lo, hi, kappa)) = lanczos_condition_estimate(&diag, &off) {
        report.eig_min = Some(lo);
        report.eig_max = Some(hi);
        report.kappa = Some(kappa);
    }
    report.wall_time = start.elapsed().as_secs_f64();
    report.memory_peak = crate::util::peak_rss_bytes();
    Ok((x, report))
}

/// Preconditioned MINRES for symmetric (possibly indefinite) operators
/// with an SPD preconditioner applied through its action only. Stops when
/// the preconditioned residual norm relative to the preconditioned
/// right-hand side norm drops below tol.
pub fn minres(
    op: &dyn LinOp,
    prec: &dyn LinOp,
    b: &[f64],
    tol: f64,
    maxit: usize,
) -> Result<(Vec<f64>, SolveReport), KrylovError> {
    let n = op.dim();
    if b.len() != n {
        return Err(KrylovError::DimensionMismatch(n, b.len()));
    }
    let start = std::time::Instant::now();
    let mut report = SolveReport::default();
    let mut x = vec![0.0; n];

    // Unnormalized Lanczos residuals r_j and their preconditioned images.
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    prec.apply(&r, &mut z);
    let g2 = dot(&z, &r);
    if g2 < 0.0 {
        return Err(KrylovError::IndefinitePreconditioner(g2, 0));
    }
    let mut gamma = g2.sqrt();
    if gamma == 0.0 {
        report.residual_history.push(0.0);
        report.wall_time = start.elapsed().as_secs_f64();
        return Ok((x, report));
    }
    let gamma1 = gamma;
    let mut gamma_prev = 1.0;
    let mut r_prev = vec![0.0; n];

    let mut w = vec![0.0; n];
    let mut w_prev = vec![0.0; n];
    let (mut c, mut c_prev) = (1.0f64, 1.0f64);
    let (mut s, mut s_prev) = (0.0f64, 0.0f64);
    let mut eta = gamma;

    // Lanczos tridiagonal of the preconditioned operator.
    let mut t_diag: Vec<f64> = Vec::new();
    let mut gammas: Vec<f64> = Vec::new();

    let mut relres = 1.0;
    report.residual_history.push(1.0);
    for it in 1..=maxit {
        // Normalized direction in preconditioned space.
        let zt: Vec<f64> = z.iter().map(|v| v / gamma).collect();
        let mut az = vec![0.0; n];
        op.apply(&zt, &mut az);
        let delta = dot(&zt, &az);
        t_diag.push(delta);

        // Three-term recurrence for the next residual.
        let mut r_next = az;
        for i in 0..n {
            r_next[i] -= (delta / gamma) * r[i];
        }
        if it > 1 {
            for i in 0..n {
                r_next[i] -= (gamma / gamma_prev) * r_prev[i];
            }
        }
        let mut z_next = vec![0.0; n];
        prec.apply(&r_next, &mut z_next);
        let g2n = dot(&z_next, &r_next);
        if g2n < -1e-12 * norm(&r_next).powi(2).max(1e-300) {
            return Err(KrylovError::IndefinitePreconditioner(g2n, it));
        }
        let gamma_next = g2n.max(0.0).sqrt();
        gammas.push(gamma_next);

        // Givens rotations.
        let a0 = c * delta - c_prev * s * gamma;
        let a1 = (a0 * a0 + gamma_next * gamma_next).sqrt();
        let a2 = s * delta + c_prev * c * gamma;
        let a3 = s_prev * gamma;
        let c_next = a0 / a1;
        let s_next = gamma_next / a1;

        let mut w_next = vec![0.0; n];
        for i in 0..n {
            w_next[i] = (zt[i] - a3 * w_prev[i] - a2 * w[i]) / a1;
        }
        for i in 0..n {
            x[i] += c_next * eta * w_next[i];
        }
        eta = -s_next * eta;

        relres = eta.abs() / gamma1;
        report.residual_history.push(relres);
        report.iterations = it;

        std::mem::swap(&mut w_prev, &mut w);
        w = w_next;
        std::mem::swap(&mut r_prev, &mut r);
        r = r_next;
        z = z_next;
        gamma_prev = gamma;
        gamma = gamma_next;
        c_prev = c;
        c = c_next;
        s_prev = s;
        s = s_next;

        if relres <= tol {
            break;
        }
        if gamma == 0.0 {
            // Krylov space exhausted: the solution in it is exact.
            relres = 0.0;
            report.residual_history.push(0.0);
            break;
        }
    }
    if relres > tol {
        return Err(KrylovError::MaxIterations {
            maxit,
            residual: relres,
            history: report.residual_history,
        });
    }
    let m = report.iterations;
    if m >= 1 {
        let off: Vec<f64> = gammas[..m - 1].to_vec();
        if let Some((lo, hi, kappa)) = lanczos_condition_estimate(&t_diag[..m], &off) {
            report.eig_min = Some(lo);
            report.eig_max = Some(hi);
            report.kappa = Some(kappa);
        }
    }
    report.wall_time = start.elapsed().as_secs_f64();
    report.memory_peak = crate::util::peak_rss_bytes();
    Ok((x, report))
}
