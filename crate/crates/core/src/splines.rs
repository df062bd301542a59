//! Univariate and tensor-product B-spline spaces on [0,1], Gauss-Legendre
//! quadrature, and the univariate mass/stiffness matrices that serve as
//! Kronecker factors elsewhere.

use crate::linalg::DenseMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SplineError {
    #[error("invalid degree {0}, must be >= 1")]
    InvalidDegree(usize),
    #[error("invalid element count {0}, must be >= 1")]
    InvalidElements(usize),
    #[error("regularity {regularity} out of range for degree {degree} (0..=p-1)")]
    InvalidRegularity { degree: usize, regularity: usize },
    #[error("evaluation point {0} outside [0, 1]")]
    OutOfDomain(f64),
}

/// A p-open knot vector on [0,1]. The first and last p+1 knots are clamped
/// to 0 and 1; knot values are dyadic by construction so exact equality
/// tests are safe.
#[derive(Clone, Debug, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

/// Uniform open knot vector with `n_elements` nonzero spans and interior
/// knot multiplicity p - regularity.
pub fn make_open_knot_vector(
    p: usize,
    n_elements: usize,
    regularity: usize,
) -> Result<KnotVector, SplineError> {
    if p < 1 {
        return Err(SplineError::InvalidDegree(p));
    }
    if n_elements < 1 {
        return Err(SplineError::InvalidElements(n_elements));
    }
    if regularity > p - 1 {
        return Err(SplineError::InvalidRegularity {
            degree: p,
            regularity,
        });
    }
    let mult = p - regularity;
    let mut knots = Vec::with_capacity(2 * (p + 1) + (n_elements - 1) * mult);
    knots.extend(std::iter::repeat(0.0).take(p + 1));
    for i in 1..n_elements {
        let x = i as f64 / n_elements as f64;
        knots.extend(std::iter::repeat(x).take(mult));
    }
    knots.extend(std::iter::repeat(1.0).take(p + 1));
    Ok(KnotVector { degree: p, knots })
}

impl KnotVector {
    pub fn from_knots(degree: usize, knots: Vec<f64>) -> Result<Self, SplineError> {
        if degree < 1 {
            return Err(SplineError::InvalidDegree(degree));
        }
        assert!(knots.len() >= 2 * (degree + 1), "too few knots");
        for w in knots.windows(2) {
            assert!(w[0] <= w[1], "knots must be nondecreasing");
        }
        for i in 0..=degree {
            assert_eq!(knots[i], 0.0, "knot vector is not p-open at 0");
            assert_eq!(
                knots[knots.len() - 1 - i],
                1.0,
                "knot vector is not p-open at 1"
            );
        }
        Ok(KnotVector { degree, knots })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions n = |knots| - p - 1.
    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Distinct breakpoints delimiting the nonzero spans.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = Vec::new();
        for &k in &self.knots {
            if b.last() != Some(&k) {
                b.push(k);
            }
        }
        b
    }

    pub fn num_elements(&self) -> usize {
        self.breakpoints().len() - 1
    }

    /// Maximum nonzero span width.
    pub fn mesh_size(&self) -> f64 {
        self.breakpoints()
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Quasi-uniformity witness: (max span)/(min span) over nonzero spans.
    pub fn span_ratio(&self) -> f64 {
        let bp = self.breakpoints();
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for w in bp.windows(2) {
            let d = w[1] - w[0];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        hi / lo
    }

    /// Greville abscissae, one per basis function.
    pub fn greville(&self) -> Vec<f64> {
        let p = self.degree;
        (0..self.num_basis())
            .map(|i| self.knots[i + 1..i + 1 + p].iter().sum::<f64>() / p as f64)
            .collect()
    }

    /// Index of the knot span containing x: largest mu with knots[mu] <= x
    /// and knots[mu] < knots[mu+1]; x = 1 maps to the last nonzero span.
    pub fn find_span(&self, x: f64) -> usize {
        let n = self.num_basis();
        let p = self.degree;
        if x >= self.knots[n] {
            // last nonzero span starts at index n-1 ... p range; walk back
            let mut mu = n - 1;
            while self.knots[mu] == self.knots[mu + 1] {
                mu -= 1;
            }
            return mu;
        }
        let mut lo = p;
        let mut hi = n;
        while lo + 1 < hi {
            let mid = (lo + hi) / 2;
            if self.knots[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Each nonzero span bisected `levels` times; degree and interior
    /// regularity preserved.
    pub fn refine_dyadic(&self, levels: usize) -> KnotVector {
        let mut kv = self.clone();
        for _ in 0..levels {
            let p = kv.degree;
            let mut knots = Vec::with_capacity(kv.knots.len() * 2);
            let bp = kv.breakpoints();
            // interior multiplicity of the refined vector matches the
            // original interior multiplicity (maximum smoothness keeps 1)
            let interior_mult = if bp.len() > 2 {
                kv.knots.iter().filter(|&&k| k == bp[1]).count()
            } else {
                1
            };
            knots.extend(std::iter::repeat(0.0).take(p + 1));
            for w in bp.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                knots.extend(std::iter::repeat(mid).take(interior_mult));
                if w[1] != 1.0 {
                    knots.extend(std::iter::repeat(w[1]).take(interior_mult));
                }
            }
            knots.extend(std::iter::repeat(1.0).take(p + 1));
            kv = KnotVector { degree: p, knots };
        }
        kv
    }

    /// Values and first derivatives of the p+1 basis functions supported at
    /// x. Returns (first_active_index, values, derivatives).
    pub fn eval_basis(&self, x: f64) -> Result<(usize, Vec<f64>, Vec<f64>), SplineError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(SplineError::OutOfDomain(x));
        }
        let p = self.degree;
        let mu = self.find_span(x);
        // Cox-de Boor triangle: ndu[j][r] = value of degree-r function.
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        // values of degree p and degree p-1 functions on the span
        let mut vals = vec![0.0; p + 1];
        let mut lower = vec![0.0; p + 1]; // degree p-1 values, padded
        vals[0] = 1.0;
        for r in 1..=p {
            left[r] = x - self.knots[mu + 1 - r];
            right[r] = self.knots[mu + r] - x;
            if r == p {
                lower[..p].copy_from_slice(&vals[..p]);
            }
            let mut saved = 0.0;
            for j in 0..r {
                // right[j+1] = knots[mu+j+1] - x, left [r-j] = x - knots[mu+1-r+j]
                let den = right[j + 1] + left[r - j];
                let temp = vals[j] / den;
                vals[j] = saved + right[j + 1] * temp;
                saved = left[r - j] * temp;
            }
            vals[r] = saved;
        }
        // Derivative from degree p-1 values:
        // B'_{i,p}(x) = p * ( lower_{i} / (t_{i+p} - t_i) - lower_{i+1} / (t_{i+p+1} - t_{i+1}) )
        let first = mu - p;
        let mut ders = vec![0.0; p + 1];
        if p >= 1 {
            for j in 0..=p {
                let i = first + j;
                let mut d = 0.0;
                if j >= 1 {
                    // lower[j-1] is the value of B_{i,p-1} on this span
                    let den = self.knots[i + p] - self.knots[i];
                    if den > 0.0 {
                        d += lower[j - 1] / den;
                    }
                }
                if j <= p - 1 {
                    let den = self.knots[i + p + 1] - self.knots[i + 1];
                    if den > 0.0 {
                        d -= lower[j] / den;
                    }
                }
                ders[j] = p as f64 * d;
            }
        }
        Ok((first, vals, ders))
    }

    /// 1-D mass and stiffness matrices with Gauss-Legendre quadrature of
    /// p+1 points per span, exact for these integrands.
    pub fn univariate_matrices(&self) -> (DenseMatrix, DenseMatrix) {
        let n = self.num_basis();
        let p = self.degree;
        let mut mass = DenseMatrix::zeros(n, n);
        let mut stiff = DenseMatrix::zeros(n, n);
        let rule = GaussRule::new(p + 1);
        let bp = self.breakpoints();
        for w in bp.windows(2) {
            let (a, b) = (w[0], w[1]);
            let jac = 0.5 * (b - a);
            for (node, weight) in rule.iter() {
                let x = 0.5 * (a + b) + jac * node;
                let (first, vals, ders) = self.eval_basis(x).expect("in-domain");
                let wq = weight * jac;
                for j in 0..=p {
                    for k in 0..=p {
                        mass[(first + j, first + k)] += wq * vals[j] * vals[k];
                        stiff[(first + j, first + k)] += wq * ders[j] * ders[k];
                    }
                }
            }
        }
        (mass, stiff)
    }
}

/// Gauss-Legendre rule on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    /// Compute nodes and weights by Newton iteration on the Legendre
    /// polynomial; exact to machine precision for the small point counts
    /// used here.
    pub fn new(npoints: usize) -> GaussRule {
        assert!(npoints >= 1);
        let n = npoints;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            // Initial guess (Abramowitz & Stegun 25.4.30 flavor)
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                // Legendre recurrence for P_n(x) and P'_n(x)
                let mut p0 = 1.0;
                let mut p1 = x;
                for k in 2..=n {
                    let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = pk;
                }
                let pn = if n == 1 { x } else { p1 };
                dp = n as f64 * (x * pn - p0) / (x * x - 1.0);
                if n == 1 {
                    dp = 1.0;
                }
                let dx = pn / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n == 1 {
            nodes[0] = 0.0;
            weights[0] = 2.0;
        }
        GaussRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// Map the rule to the interval [a, b]: returns (points, weights).
    pub fn mapped(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let jac = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.iter().map(|(x, w)| (mid + jac * x, w * jac)).collect()
    }
}

/// One of the four sides of the parameter square (0,1)^2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Side {
    West,
    East,
    South,
    North,
}

pub const SIDES: [Side; 4] = [Side::West, Side::East, Side::South, Side::North];

impl Side {
    /// Parametric direction along the side (0 = xi1, 1 = xi2).
    pub fn parallel_dir(self) -> usize {
        match self {
            Side::West | Side::East => 1,
            Side::South | Side::North => 0,
        }
    }

    /// Parametric direction perpendicular to the side.
    pub fn perp_dir(self) -> usize {
        1 - self.parallel_dir()
    }

    /// Fixed coordinate value of the side in the perpendicular direction.
    pub fn perp_coord(self) -> f64 {
        match self {
            Side::West | Side::South => 0.0,
            Side::East | Side::North => 1.0,
        }
    }

    /// Parameter point on the side at arc coordinate s in [0,1].
    pub fn point(self, s: f64) -> [f64; 2] {
        match self {
            Side::West => [0.0, s],
            Side::East => [1.0, s],
            Side::South => [s, 0.0],
            Side::North => [s, 1.0],
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::West => 0,
            Side::East => 1,
            Side::South => 2,
            Side::North => 3,
        }
    }
}

/// Tensor-product B-spline space on the parameter square, with optional
/// Dirichlet reduction per side. Reduction strips exactly the single
/// boundary-interpolatory basis function of the corresponding direction.
#[derive(Clone, Debug)]
pub struct TensorBasis {
    pub kv1: KnotVector,
    pub kv2: KnotVector,
    dirichlet: [bool; 4], // indexed by Side::index()
    lo: [usize; 2],
    hi: [usize; 2],
}

impl TensorBasis {
    pub fn new(kv1: KnotVector, kv2: KnotVector, dirichlet_sides: &[Side]) -> TensorBasis {
        let mut dirichlet = [false; 4];
        for &s in dirichlet_sides {
            dirichlet[s.index()] = true;
        }
        let lo = [
            usize::from(dirichlet[Side::West.index()]),
            usize::from(dirichlet[Side::South.index()]),
        ];
        let hi = [
            kv1.num_basis() - usize::from(dirichlet[Side::East.index()]),
            kv2.num_basis() - usize::from(dirichlet[Side::North.index()]),
        ];
        TensorBasis {
            kv1,
            kv2,
            dirichlet,
            lo,
            hi,
        }
    }

    pub fn kv(&self, dir: usize) -> &KnotVector {
        match dir {
            0 => &self.kv1,
            1 => &self.kv2,
            _ => panic!("direction must be 0 or 1"),
        }
    }

    pub fn is_dirichlet(&self, side: Side) -> bool {
        self.dirichlet[side.index()]
    }

    pub fn dirichlet_sides(&self) -> Vec<Side> {
        SIDES
            .iter()
            .copied()
            .filter(|s| self.is_dirichlet(*s))
            .collect()
    }

    /// Active (non-Dirichlet) univariate index range [lo, hi) per direction.
    pub fn active_range(&self, dir: usize) -> (usize, usize) {
        (self.lo[dir], self.hi[dir])
    }

    pub fn active_counts(&self) -> (usize, usize) {
        (self.hi[0] - self.lo[0], self.hi[1] - self.lo[1])
    }

    /// Number of active degrees of freedom.
    pub fn num_dofs(&self) -> usize {
        let (m1, m2) = self.active_counts();
        m1 * m2
    }

    /// From reduced dof index to tensor index (i1, i2) in the full basis.
    pub fn tensor_index(&self, dof: usize) -> (usize, usize) {
        let (_, m2) = self.active_counts();
        let a = dof / m2;
        let b = dof % m2;
        (self.lo[0] + a, self.lo[1] + b)
    }

    /// From tensor index to reduced dof index, or None if Dirichlet-removed.
    pub fn dof_index(&self, i1: usize, i2: usize) -> Option<usize> {
        if i1 < self.lo[0] || i1 >= self.hi[0] || i2 < self.lo[1] || i2 >= self.hi[1] {
            return None;
        }
        let (_, m2) = self.active_counts();
        Some((i1 - self.lo[0]) * m2 + (i2 - self.lo[1]))
    }

    pub fn mesh_size(&self) -> f64 {
        self.kv1.mesh_size().max(self.kv2.mesh_size())
    }

    /// Values and gradients of all active basis functions supported at xi.
    /// Returns (dof index, value, [d/dxi1, d/dxi2]) triples.
    pub fn eval(&self, xi: [f64; 2]) -> Vec<(usize, f64, [f64; 2])> {
        let (f1, v1, d1) = self.kv1.eval_basis(xi[0]).expect("xi in domain");
        let (f2, v2, d2) = self.kv2.eval_basis(xi[1]).expect("xi in domain");
        let mut out = Vec::with_capacity(v1.len() * v2.len());
        for (j1, (&a, &da)) in v1.iter().zip(d1.iter()).enumerate() {
            for (j2, (&b, &db)) in v2.iter().zip(d2.iter()).enumerate() {
                if let Some(dof) = self.dof_index(f1 + j1, f2 + j2) {
                    out.push((dof, a * b, [da * b, a * db]));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::Rng;

    #[test]
    fn open_knot_vector_smallest() {
        let kv = make_open_knot_vector(1, 2, 0).unwrap();
        assert_eq!(kv.knots(), &[0.0, 0.0, 0.5, 1.0, 1.0]);
        assert_eq!(kv.num_basis(), 3);
    }

    #[test]
    fn open_knot_vector_pure_polynomial() {
        let kv = make_open_knot_vector(2, 1, 1).unwrap();
        assert_eq!(kv.knots(), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(kv.num_basis(), 3);
        assert_eq!(kv.num_elements(), 1);
    }

    #[test]
    fn open_knot_vector_count_formula() {
        let kv = make_open_knot_vector(3, 4, 2).unwrap();
        assert_eq!(kv.num_basis(), 7);
        assert_eq!(kv.knots().len(), 2 * 4 + 3);
    }

    #[test]
    fn open_knot_vector_rejects_bad_regularity() {
        assert!(matches!(
            make_open_knot_vector(2, 3, 2),
            Err(SplineError::InvalidRegularity { .. })
        ));
    }

    #[test]
    fn eval_linear_hats() {
        let kv = KnotVector::from_knots(1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let (first, vals, ders) = kv.eval_basis(0.25).unwrap();
        assert_eq!(first, 0);
        assert!((vals[0] - 0.75).abs() < 1e-15);
        assert!((vals[1] - 0.25).abs() < 1e-15);
        assert!((ders[0] + 1.0).abs() < 1e-15);
        assert!((ders[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eval_bernstein_quadratic() {
        let kv = make_open_knot_vector(2, 1, 1).unwrap();
        let (_, vals, _) = kv.eval_basis(0.5).unwrap();
        assert!((vals[0] - 0.25).abs() < 1e-15);
        assert!((vals[1] - 0.5).abs() < 1e-15);
        assert!((vals[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn eval_rejects_out_of_domain() {
        let kv = make_open_knot_vector(2, 2, 1).unwrap();
        assert!(matches!(
            kv.eval_basis(1.5),
            Err(SplineError::OutOfDomain(_))
        ));
        assert!(kv.eval_basis(1.0).is_ok());
        assert!(kv.eval_basis(0.0).is_ok());
    }

    #[test]
    fn partition_of_unity_many_knot_vectors() {
        let mut rng = Rng::new(2024);
        for p in 1..=8usize {
            let reg = p - 1;
            let kv = make_open_knot_vector(p, 4, reg).unwrap().refine_dyadic(1);
            for _ in 0..1000 {
                let x = rng.next_f64();
                let (_, vals, ders) = kv.eval_basis(x).unwrap();
                let s: f64 = vals.iter().sum();
                let ds: f64 = ders.iter().sum();
                assert!((s - 1.0).abs() <= 1e-13, "p={p}, x={x}: sum={s}");
                assert!(
                    ds.abs() <= 1e-10 * (p as f64) / kv.mesh_size(),
                    "p={p}, x={x}"
                );
            }
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let mut rng = Rng::new(55);
        for p in [1usize, 2, 3, 5] {
            let kv = make_open_knot_vector(p, 3, p - 1).unwrap();
            let n = kv.num_basis();
            for _ in 0..100 {
                let h = 1e-6;
                let x = rng.next_range(2.0 * h, 1.0 - 2.0 * h);
                let (f0, _, ders) = kv.eval_basis(x).unwrap();
                let (fp, vp, _) = kv.eval_basis(x + h).unwrap();
                let (fm, vm, _) = kv.eval_basis(x - h).unwrap();
                // Scatter into full-length arrays to compare across spans.
                let mut full_p = vec![0.0; n];
                let mut full_m = vec![0.0; n];
                for (j, &v) in vp.iter().enumerate() {
                    full_p[fp + j] = v;
                }
                for (j, &v) in vm.iter().enumerate() {
                    full_m[fm + j] = v;
                }
                for (j, &d) in ders.iter().enumerate() {
                    let fd = (full_p[f0 + j] - full_m[f0 + j]) / (2.0 * h);
                    let scale = d.abs().max(1.0);
                    assert!(
                        (fd - d).abs() <= 1e-6 * scale,
                        "p={p} x={x} basis {j}: fd={fd}, d={d}"
                    );
                }
            }
        }
    }

    #[test]
    fn univariate_matrices_linear_hats() {
        let kv = KnotVector::from_knots(1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let (m, k) = kv.univariate_matrices();
        assert!((m[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((m[(0, 1)] - 1.0 / 6.0).abs() < 1e-15);
        assert!((m[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((k[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((k[(0, 1)] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn stiffness_kernel_and_mass_sum() {
        for p in 1..=4usize {
            let kv = make_open_knot_vector(p, 3, p - 1).unwrap();
            let n = kv.num_basis();
            let (m, k) = kv.univariate_matrices();
            // K * 1 = 0
            for i in 0..n {
                let row_sum: f64 = (0..n).map(|j| k[(i, j)]).sum();
                assert!(row_sum.abs() < 1e-12, "p={p} row {i}");
            }
            // 1^T M 1 = domain length
            let total: f64 = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| m[(i, j)])
                .sum();
            assert!((total - 1.0).abs() < 1e-13, "p={p}");
        }
    }

    #[test]
    fn mass_matrix_spd() {
        for p in 1..=5usize {
            let kv = make_open_knot_vector(p, 4, p - 1).unwrap();
            let (m, _) = kv.univariate_matrices();
            let (w, _) = crate::linalg::sym_eig(&m).unwrap();
            assert!(w[0] > 0.0, "p={p}: min eig {}", w[0]);
        }
    }

    #[test]
    fn galerkin_exactness_linear_function() {
        // The coefficients of x -> x are the Greville abscissae, so
        // c^T K c must equal the Dirichlet energy of x, which is 1.
        for p in 1..=3usize {
            for r in 0..=2usize {
                let kv = make_open_knot_vector(p, 2, p - 1).unwrap().refine_dyadic(r);
                let (_, k) = kv.univariate_matrices();
                let c = kv.greville();
                let n = kv.num_basis();
                let mut energy = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        energy += c[i] * k[(i, j)] * c[j];
                    }
                }
                assert!((energy - 1.0).abs() < 1e-12, "p={p} r={r}: {energy}");
            }
        }
    }

    #[test]
    fn span_ratio_witness() {
        let kv = make_open_knot_vector(2, 4, 1).unwrap();
        assert_eq!(kv.span_ratio(), 1.0);
        let kv2 = KnotVector::from_knots(1, vec![0.0, 0.0, 0.25, 1.0, 1.0]).unwrap();
        assert_eq!(kv2.span_ratio(), 3.0);
        assert!(kv2.span_ratio().is_finite());
    }

    #[test]
    fn refine_dyadic_examples() {
        let kv = make_open_knot_vector(2, 1, 1).unwrap();
        let r1 = kv.refine_dyadic(1);
        assert_eq!(r1.knots(), &[0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0]);
        let same = kv.refine_dyadic(0);
        assert_eq!(same, kv);
        let r3 = kv.refine_dyadic(3);
        assert_eq!(r3.num_elements(), 8);
        assert_eq!(r3.num_basis(), 10);
        // degree and regularity preserved: interior multiplicity 1
        assert_eq!(r3.degree(), 2);
    }

    #[test]
    fn refine_preserves_low_regularity() {
        let kv = make_open_knot_vector(3, 2, 1).unwrap(); // interior mult 2
        let r = kv.refine_dyadic(1);
        assert_eq!(r.num_elements(), 4);
        let quarters = r.knots().iter().filter(|&&k| k == 0.25).count();
        assert_eq!(quarters, 2, "interior multiplicity preserved");
    }

    #[test]
    fn gauss_rule_polynomial_exactness() {
        for n in 1..=10usize {
            let rule = GaussRule::new(n);
            // integrate x^k over [-1,1] for k <= 2n-1
            for k in 0..=(2 * n - 1) {
                let num: f64 = rule.iter().map(|(x, w)| w * x.powi(k as i32)).sum();
                let exact = if k % 2 == 1 {
                    0.0
                } else {
                    2.0 / (k as f64 + 1.0)
                };
                assert!(
                    (num - exact).abs() < 1e-13,
                    "n={n}, k={k}: {num} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn tensor_basis_dof_accounting() {
        let kv = make_open_knot_vector(2, 2, 1).unwrap(); // n = 4
        let tb = TensorBasis::new(kv.clone(), kv.clone(), &[Side::West, Side::South]);
        assert_eq!(tb.num_dofs(), 9);
        // Bijectivity of the index map over active indices.
        let mut seen = vec![false; tb.num_dofs()];
        for i1 in 0..4 {
            for i2 in 0..4 {
                match tb.dof_index(i1, i2) {
                    Some(d) => {
                        assert!(!seen[d]);
                        seen[d] = true;
                        assert_eq!(tb.tensor_index(d), (i1, i2));
                        assert!(i1 >= 1 && i2 >= 1);
                    }
                    None => {
                        assert!(i1 == 0 || i2 == 0);
                    }
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn tensor_eval_partition_of_unity() {
        let kv = make_open_knot_vector(2, 2, 1).unwrap();
        let tb = TensorBasis::new(kv.clone(), kv, &[]);
        let mut rng = Rng::new(8);
        for _ in 0..200 {
            let xi = [rng.next_f64(), rng.next_f64()];
            let s: f64 = tb.eval(xi).iter().map(|(_, v, _)| v).sum();
            assert!((s - 1.0).abs() < 1e-13);
        }
    }
}
