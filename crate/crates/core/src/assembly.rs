//! SIPG assembly on the extended (artificial-interface) patch spaces,
//! together with the parameter-domain surrogate matrices used by the
//! preconditioners and the edge L2 projections.

use crate::geometry::{patch_sizes, GeometryError, MultiPatch};
use crate::linalg::{CholeskyFactor, CsrMatrix, DenseMatrix, LinalgError};
use crate::splines::{GaussRule, KnotVector, Side, TensorBasis};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("penalty parameter must be positive, got {0}")]
    InvalidPenalty(f64),
    #[error("space/topology mismatch: {0}")]
    SpaceMismatch(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("edge mass factorization failed: {0}")]
    EdgeMass(#[from] LinalgError),
}

/// dG coupling configuration.
#[derive(Clone, Debug)]
pub struct DgConfig {
    /// SIPG penalty.
    pub delta: f64,
    /// Extra Gauss points per direction on top of the default p+1.
    pub quad_increment: usize,
}

impl DgConfig {
    pub fn new(delta: f64) -> Self {
        DgConfig {
            delta,
            quad_increment: 0,
        }
    }
}

/// Default penalty 2 (p+1)^2; an explicit override wins.
pub fn choose_penalty(p: usize, override_delta: Option<f64>) -> Result<f64, AssemblyError> {
    match override_delta {
        Some(d) if d > 0.0 => Ok(d),
        Some(d) => Err(AssemblyError::InvalidPenalty(d)),
        None => Ok(2.0 * ((p + 1) * (p + 1)) as f64),
    }
}

/// Geometry, per-patch solution spaces and coupling parameters of one
/// discrete problem.
pub struct Discretization {
    pub mp: MultiPatch,
    pub spaces: Vec<TensorBasis>,
    pub cfg: DgConfig,
    /// (H_k, hhat_k, h_k) per patch.
    pub sizes: Vec<(f64, f64, f64)>,
}

impl Discretization {
    pub fn new(
        mp: MultiPatch,
        spaces: Vec<TensorBasis>,
        cfg: DgConfig,
    ) -> Result<Self, AssemblyError> {
        if spaces.len() != mp.n_patches() {
            return Err(AssemblyError::SpaceMismatch(format!(
                "{} spaces for {} patches",
                spaces.len(),
                mp.n_patches()
            )));
        }
        for (k, sp) in spaces.iter().enumerate() {
            let want = &mp.topology.dirichlet_sides[k];
            for side in crate::splines::SIDES {
                let is_d = sp.is_dirichlet(side);
                if is_d != want.contains(&side) {
                    return Err(AssemblyError::SpaceMismatch(format!(
                        "patch {k}: Dirichlet flag on side {side:?} disagrees with topology"
                    )));
                }
            }
        }
        let sizes = (0..mp.n_patches())
            .map(|k| patch_sizes(&mp.maps[k], &spaces[k]))
            .collect();
        Ok(Discretization {
            mp,
            spaces,
            cfg,
            sizes,
        })
    }

    /// Physical interface grid size h_kl = min(h_k, h_l).
    pub fn h_kl(&self, k: usize, l: usize) -> f64 {
        self.sizes[k].2.min(self.sizes[l].2)
    }

    /// Parametric interface grid size hhat_kl = min(hhat_k, hhat_l).
    pub fn hhat_kl(&self, k: usize, l: usize) -> f64 {
        self.sizes[k].1.min(self.sizes[l].1)
    }

    pub fn n_patches(&self) -> usize {
        self.mp.n_patches()
    }
}

/// Build the per-patch solution spaces: open knot vectors of the given
/// degree with dyadic refinements and maximum smoothness, Dirichlet-reduced
/// on the topology's boundary sides.
pub fn build_spaces(
    mp: &MultiPatch,
    degree_refine: &[(usize, usize)],
) -> Result<Vec<TensorBasis>, AssemblyError> {
    assert_eq!(degree_refine.len(), mp.n_patches());
    let mut spaces = Vec::with_capacity(mp.n_patches());
    for (k, &(p, r)) in degree_refine.iter().enumerate() {
        let kv = crate::splines::make_open_knot_vector(p, 1, p - 1)
            .map_err(|e| AssemblyError::SpaceMismatch(e.to_string()))?
            .refine_dyadic(r);
        let dirichlet = mp.topology.dirichlet_sides[k].clone();
        spaces.push(TensorBasis::new(kv.clone(), kv, &dirichlet));
    }
    Ok(spaces)
}

/// k's own trace on one of its sides: the univariate dofs of the parallel
/// direction that are alive on the edge.
#[derive(Clone, Debug)]
pub struct EdgeTrace {
    pub dir: usize,
    pub drop_first: bool,
    pub drop_last: bool,
    pub perp_index: usize,
    pub n: usize,
}

impl EdgeTrace {
    /// Patch tensor index of edge-trace index a.
    pub fn tensor_index(&self, a: usize) -> (usize, usize) {
        let i = a + usize::from(self.drop_first);
        if self.dir == 0 {
            (i, self.perp_index)
        } else {
            (self.perp_index, i)
        }
    }
}

/// One artificial-interface block: a copy of the neighbor's trace space on
/// the shared edge.
#[derive(Clone, Debug)]
pub struct TraceBlock {
    pub neighbor: usize,
    pub side: Side,
    pub neighbor_side: Side,
    /// Orientation between k's edge coordinate s and the neighbor's t.
    pub reversed: bool,
    /// Neighbor's parallel-direction knot vector.
    pub kv: KnotVector,
    /// Dirichlet removal inherited from the neighbor, in t-coordinates.
    pub drop_first: bool,
    pub drop_last: bool,
    /// First extended dof of this block.
    pub offset: usize,
}

impl TraceBlock {
    pub fn n(&self) -> usize {
        self.kv.num_basis() - usize::from(self.drop_first) - usize::from(self.drop_last)
    }

    /// Neighbor-side coordinate of a point given in k's edge coordinate.
    pub fn to_neighbor_coord(&self, s: f64) -> f64 {
        if self.reversed {
            1.0 - s
        } else {
            s
        }
    }

    /// Values of the active trace functions supported at k-side coordinate
    /// s, as (local trace index, value) pairs.
    pub fn eval(&self, s: f64) -> Vec<(usize, f64)> {
        let t = self.to_neighbor_coord(s);
        let (first, vals, _) = self.kv.eval_basis(t).expect("t in [0,1]");
        let n_univ = self.kv.num_basis();
        let lo = usize::from(self.drop_first);
        let hi = n_univ - usize::from(self.drop_last);
        vals.iter()
            .enumerate()
            .filter_map(|(j, &v)| {
                let i = first + j;
                (i >= lo && i < hi).then(|| (i - lo, v))
            })
            .collect()
    }

    /// Breakpoints of the trace space expressed in k's edge coordinate.
    pub fn breakpoints_in_k(&self) -> Vec<f64> {
        let mut bp: Vec<f64> = self
            .kv
            .breakpoints()
            .iter()
            .map(|&t| if self.reversed { 1.0 - t } else { t })
            .collect();
        bp.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bp
    }
}

/// Extended local space: the patch space plus one artificial-interface
/// trace block per neighbor, in deterministic side order (W, E, S, N).
pub struct ExtendedSpace {
    pub patch: usize,
    pub basis: TensorBasis,
    pub traces: Vec<TraceBlock>,
    pub n_patch: usize,
    pub n_ext: usize,
}

impl ExtendedSpace {
    pub fn build(disc: &Discretization, k: usize) -> ExtendedSpace {
        let basis = disc.spaces[k].clone();
        let n_patch = basis.num_dofs();
        let mut traces = Vec::new();
        let mut offset = n_patch;
        for (side, iface) in disc.mp.topology.interfaces_of(k) {
            let (l, side_l) = if iface.k == k {
                (iface.l, iface.side_l)
            } else {
                (iface.k, iface.side_k)
            };
            let nb = &disc.spaces[l];
            let dir = side_l.parallel_dir();
            let kv = nb.kv(dir).clone();
            let (lo, hi) = nb.active_range(dir);
            let block = TraceBlock {
                neighbor: l,
                side,
                neighbor_side: side_l,
                reversed: iface.reversed,
                drop_first: lo > 0,
                drop_last: hi < kv.num_basis(),
                kv,
                offset,
            };
            offset += block.n();
            traces.push(block);
        }
        ExtendedSpace {
            patch: k,
            basis,
            traces,
            n_patch,
            n_ext: offset,
        }
    }

    pub fn trace_block(&self, side: Side) -> Option<&TraceBlock> {
        self.traces.iter().find(|t| t.side == side)
    }

    /// k's own edge trace on one of its sides.
    pub fn edge_trace(&self, side: Side) -> EdgeTrace {
        let dir = side.parallel_dir();
        let kv = self.basis.kv(dir);
        let (lo, hi) = self.basis.active_range(dir);
        let perp_dir = side.perp_dir();
        let perp_index = if side.perp_coord() == 0.0 {
            0
        } else {
            self.basis.kv(perp_dir).num_basis() - 1
        };
        EdgeTrace {
            dir,
            drop_first: lo > 0,
            drop_last: hi < kv.num_basis(),
            perp_index,
            n: hi - lo,
        }
    }

    /// Extended dof of an edge-trace index of the patch itself.
    pub fn edge_dof(&self, trace: &EdgeTrace, a: usize) -> usize {
        let (i1, i2) = trace.tensor_index(a);
        self.basis
            .dof_index(i1, i2)
            .expect("edge trace dof must be active")
    }
}

/// Assembled extended-space system of one patch.
pub struct LocalSystem {
    /// Full bilinear form a + m + r.
    pub a: CsrMatrix,
    /// Load vector (patch dofs carry the volume load; trace dofs are 0).
    pub f: Vec<f64>,
    /// dG scalar product part a + r.
    pub d: CsrMatrix,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Domain {
    Physical,
    Parameter,
}

struct EdgePointData {
    /// quadrature weight including the metric factor
    w: f64,
    /// outward unit normal (physical or parameter)
    normal: [f64; 2],
    /// all patch basis functions supported at the point:
    /// (ext dof, value, gradient)
    patch: Vec<(usize, f64, [f64; 2])>,
    /// neighbor trace functions: (ext dof, value)
    trace: Vec<(usize, f64)>,
}

/// Merged interface quadrature: union of both sides' breakpoints in k's
/// edge coordinate with max(p_k, p_l) + 1 Gauss points per merged cell.
fn merged_edge_rule(
    own_kv: &KnotVector,
    block: &TraceBlock,
    quad_increment: usize,
) -> Vec<(f64, f64)> {
    let mut bp = own_kv.breakpoints();
    bp.extend(block.breakpoints_in_k());
    bp.sort_by(|a, b| a.partial_cmp(b).unwrap());
    bp.dedup_by(|a, b| (*a - *b).abs() <= 1e-14);
    let p = own_kv.degree().max(block.kv.degree());
    let rule = GaussRule::new(p + 1 + quad_increment);
    let mut pts = Vec::new();
    for w in bp.windows(2) {
        if w[1] - w[0] <= 1e-14 {
            continue;
        }
        pts.extend(rule.mapped(w[0], w[1]));
    }
    pts
}

fn parameter_outward_normal(side: Side) -> [f64; 2] {
    match side {
        Side::West => [-1.0, 0.0],
        Side::East => [1.0, 0.0],
        Side::South => [0.0, -1.0],
        Side::North => [0.0, 1.0],
    }
}

/// Evaluate everything needed at the quadrature points of one interface.
fn edge_point_data(
    disc: &Discretization,
    ext: &ExtendedSpace,
    block: &TraceBlock,
    domain: Domain,
    quad_increment: usize,
) -> Vec<EdgePointData> {
    let k = ext.patch;
    let side = block.side;
    let own_kv = ext.basis.kv(side.parallel_dir());
    let rule = merged_edge_rule(own_kv, block, quad_increment);
    let map = &disc.mp.maps[k];
    let nhat = parameter_outward_normal(side);
    let mut out = Vec::with_capacity(rule.len());
    for (s, w) in rule {
        let xi = side.point(s);
        let evals = ext.basis.eval(xi);
        let (metric, normal, patch): (f64, [f64; 2], Vec<(usize, f64, [f64; 2])>) = match domain {
            Domain::Physical => {
                let (_, j, det) = map.eval(xi).expect("regular geometry");
                let tangent = [j[0][side.parallel_dir()], j[1][side.parallel_dir()]];
                let tlen = (tangent[0] * tangent[0] + tangent[1] * tangent[1]).sqrt();
                let mut nvec = [
                    (j[1][1] * nhat[0] - j[1][0] * nhat[1]) / det,
                    (-j[0][1] * nhat[0] + j[0][0] * nhat[1]) / det,
                ];
                let nlen = (nvec[0] * nvec[0] + nvec[1] * nvec[1]).sqrt();
                nvec = [nvec[0] / nlen, nvec[1] / nlen];
                let patch = evals
                    .iter()
                    .map(|&(dof, v, g)| {
                        let gx = (j[1][1] * g[0] - j[1][0] * g[1]) / det;
                        let gy = (-j[0][1] * g[0] + j[0][0] * g[1]) / det;
                        (dof, v, [gx, gy])
                    })
                    .collect();
                (tlen, nvec, patch)
            }
            Domain::Parameter => (1.0, nhat, evals),
        };
        let trace = block
            .eval(s)
            .into_iter()
            .map(|(a, v)| (block.offset + a, v))
            .collect();
        out.push(EdgePointData {
            w: w * metric,
            normal,
            patch,
            trace,
        });
    }
    out
}

/// Assemble the extended-space system of patch k on the physical domain:
/// volume stiffness, one-sided SIPG consistency terms, and the penalty.
/// The returned `d` holds the a + r part only.
pub fn assemble_local(
    disc: &Discretization,
    ext: &ExtendedSpace,
    rhs: &dyn Fn([f64; 2]) -> f64,
) -> Result<LocalSystem, AssemblyError> {
    let k = ext.patch;
    let basis = &ext.basis;
    let map = &disc.mp.maps[k];
    let n = ext.n_ext;
    let mut a_trip: Vec<(usize, usize, f64)> = Vec::new();
    let mut d_trip: Vec<(usize, usize, f64)> = Vec::new();
    let mut f = vec![0.0; n];

    // Volume terms.
    let rule1 = GaussRule::new(basis.kv1.degree() + 1 + disc.cfg.quad_increment);
    let rule2 = GaussRule::new(basis.kv2.degree() + 1 + disc.cfg.quad_increment);
    for w1 in basis.kv1.breakpoints().windows(2) {
        for w2 in basis.kv2.breakpoints().windows(2) {
            for (x1, q1) in rule1.mapped(w1[0], w1[1]) {
                for (x2, q2) in rule2.mapped(w2[0], w2[1]) {
                    let xi = [x1, x2];
                    let (x, j, det) = map.eval(xi)?;
                    let wq = q1 * q2 * det.abs();
                    let evals = basis.eval(xi);
                    let grads: Vec<(usize, f64, [f64; 2])> = evals
                        .iter()
                        .map(|&(dof, v, g)| {
                            let gx = (j[1][1] * g[0] - j[1][0] * g[1]) / det;
                            let gy = (-j[0][1] * g[0] + j[0][0] * g[1]) / det;
                            (dof, v, [gx, gy])
                        })
                        .collect();
                    let fx = rhs(x);
                    for &(i, vi, gi) in &grads {
                        f[i] += wq * fx * vi;
                        for &(jj, _, gj) in &grads {
                            let val = wq * (gi[0] * gj[0] + gi[1] * gj[1]);
                            if val != 0.0 {
                                a_trip.push((i, jj, val));
                                d_trip.push((i, jj, val));
                            }
                        }
                    }
                }
            }
        }
    }

    // Interface terms per artificial block.
    for block in &ext.traces {
        let w_pen = disc.cfg.delta / disc.h_kl(k, block.neighbor);
        let data = edge_point_data(disc, ext, block, Domain::Physical, disc.cfg.quad_increment);
        accumulate_interface_terms(&data, w_pen, true, &mut a_trip, &mut d_trip);
    }

    let a = CsrMatrix::from_triplets(n, n, &a_trip);
    let d = CsrMatrix::from_triplets(n, n, &d_trip);
    Ok(LocalSystem { a, f, d })
}

/// Shared accumulation of the SIPG interface terms at precomputed edge
/// quadrature data. The m-term goes to `a_trip` only.
fn accumulate_interface_terms(
    data: &[EdgePointData],
    w_pen: f64,
    include_m: bool,
    a_trip: &mut Vec<(usize, usize, f64)>,
    d_trip: &mut Vec<(usize, usize, f64)>,
) {
    for pt in data {
        let w = pt.w;
        // Penalty r: (u^a - u)(v^a - v) with weight w_pen.
        for &(i, vi, _) in &pt.patch {
            if vi == 0.0 {
                continue;
            }
            for &(jj, vj, _) in &pt.patch {
                let val = w * w_pen * vi * vj;
                if val != 0.0 {
                    a_trip.push((i, jj, val));
                    d_trip.push((i, jj, val));
                }
            }
            for &(ta, va) in &pt.trace {
                let val = -w * w_pen * vi * va;
                if val != 0.0 {
                    a_trip.push((i, ta, val));
                    a_trip.push((ta, i, val));
                    d_trip.push((i, ta, val));
                    d_trip.push((ta, i, val));
                }
            }
        }
        for &(ta, va) in &pt.trace {
            for &(tb, vb) in &pt.trace {
                let val = w * w_pen * va * vb;
                if val != 0.0 {
                    a_trip.push((ta, tb, val));
                    d_trip.push((ta, tb, val));
                }
            }
        }
        if !include_m {
            continue;
        }
        // Consistency m: 1/2 [dn(u) (v^a - v) + dn(v) (u^a - u)], one-sided.
        for &(i, _, gi) in &pt.patch {
            let dni = gi[0] * pt.normal[0] + gi[1] * pt.normal[1];
            if dni == 0.0 {
                continue;
            }
            for &(jj, vj, _) in &pt.patch {
                let val = -0.5 * w * dni * vj;
                if val != 0.0 {
                    a_trip.push((i, jj, val));
                    a_trip.push((jj, i, val));
                }
            }
            for &(ta, va) in &pt.trace {
                let val = 0.5 * w * dni * va;
                if val != 0.0 {
                    a_trip.push((i, ta, val));
                    a_trip.push((ta, i, val));
                }
            }
        }
    }
}

/// Parameter-domain surrogate matrices of one patch.
pub struct ParameterMatrices {
    /// 1 for floating patches, 0 when the patch touches the Dirichlet
    /// boundary.
    pub alpha: f64,
    /// Dirichlet-reduced univariate factors (mass, stiffness) per direction.
    pub m1: DenseMatrix,
    pub k1: DenseMatrix,
    pub m2: DenseMatrix,
    pub k2: DenseMatrix,
    /// Per trace block, the penalty weight delta/hhat_kl and the edge mass
    /// matrix of the artificial trace space.
    pub d2_blocks: Vec<(f64, DenseMatrix)>,
    /// Extended-space matrix of the parameter-domain dG scalar product
    /// (volume gradients plus penalty with weight delta/hhat_kl).
    pub dhat: CsrMatrix,
}

impl ParameterMatrices {
    /// Dense reconstruction K1 (x) M2 + M1 (x) K2 + alpha M1 (x) M2 on the
    /// patch tensor dofs; for tests.
    pub fn d1_dense(&self) -> DenseMatrix {
        use crate::linalg::kron_dense;
        let mut d = kron_dense(&self.k1, &self.m2);
        d.add_scaled(&kron_dense(&self.m1, &self.k2), 1.0);
        if self.alpha != 0.0 {
            d.add_scaled(&kron_dense(&self.m1, &self.m2), self.alpha);
        }
        d
    }

    /// D1 tilde applied matrix-free.
    pub fn d1_apply(&self, x: &[f64], y: &mut [f64]) {
        use crate::linalg::kron_matvec;
        let t1 = kron_matvec(&self.k1, &self.m2, x);
        let t2 = kron_matvec(&self.m1, &self.k2, x);
        for i in 0..x.len() {
            y[i] = t1[i] + t2[i];
        }
        if self.alpha != 0.0 {
            let t3 = kron_matvec(&self.m1, &self.m2, x);
            for i in 0..x.len() {
                y[i] += self.alpha * t3[i];
            }
        }
    }

    /// Parameter-domain patch mass, dense (tests only).
    pub fn mhat_dense(&self) -> DenseMatrix {
        crate::linalg::kron_dense(&self.m1, &self.m2)
    }
}

/// Dirichlet-reduced univariate factor matrices of a direction.
fn reduced_univariate(basis: &TensorBasis, dir: usize) -> (DenseMatrix, DenseMatrix) {
    let (m, k) = basis.kv(dir).univariate_matrices();
    let (lo, hi) = basis.active_range(dir);
    let idx: Vec<usize> = (lo..hi).collect();
    (m.submatrix(&idx, &idx), k.submatrix(&idx, &idx))
}

/// Assemble the parameter-domain matrices of patch k: the Kronecker factors
/// of D1 tilde, the scaled edge mass blocks of D2 tilde, and the extended
/// parameter-domain matrix D hat.
pub fn assemble_parameter_matrices(
    disc: &Discretization,
    ext: &ExtendedSpace,
) -> ParameterMatrices {
    let k = ext.patch;
    let alpha = if disc.mp.topology.dirichlet_sides[k].is_empty() {
        1.0
    } else {
        0.0
    };
    let (m1, k1) = reduced_univariate(&ext.basis, 0);
    let (m2, k2) = reduced_univariate(&ext.basis, 1);

    // Edge mass matrices of the artificial trace spaces (unit parameter
    // measure; the t <-> s reparameterization preserves length).
    let mut d2_blocks = Vec::new();
    for block in &ext.traces {
        let weight = disc.cfg.delta / disc.hhat_kl(k, block.neighbor);
        let nb = block.n();
        let mut mass = DenseMatrix::zeros(nb, nb);
        let rule = GaussRule::new(block.kv.degree() + 1);
        for w in block.breakpoints_in_k().windows(2) {
            for (s, q) in rule.mapped(w[0], w[1]) {
                let vals = block.eval(s);
                for &(a, va) in &vals {
                    for &(b, vb) in &vals {
                        mass[(a, b)] += q * va * vb;
                    }
                }
            }
        }
        d2_blocks.push((weight, mass));
    }

    // Extended parameter-domain matrix: volume gradients (identity
    // geometry) + penalty with weight delta/hhat, no consistency term.
    let n = ext.n_ext;
    let mut trip: Vec<(usize, usize, f64)> = Vec::new();
    let basis = &ext.basis;
    let rule1 = GaussRule::new(basis.kv1.degree() + 1);
    let rule2 = GaussRule::new(basis.kv2.degree() + 1);
    for w1 in basis.kv1.breakpoints().windows(2) {
        for w2 in basis.kv2.breakpoints().windows(2) {
            for (x1, q1) in rule1.mapped(w1[0], w1[1]) {
                for (x2, q2) in rule2.mapped(w2[0], w2[1]) {
                    let wq = q1 * q2;
                    let evals = basis.eval([x1, x2]);
                    for &(i, _, gi) in &evals {
                        for &(jj, _, gj) in &evals {
                            let val = wq * (gi[0] * gj[0] + gi[1] * gj[1]);
                            if val != 0.0 {
                                trip.push((i, jj, val));
                            }
                        }
                    }
                }
            }
        }
    }
    let mut dummy: Vec<(usize, usize, f64)> = Vec::new();
    for block in &ext.traces {
        let w_pen = disc.cfg.delta / disc.hhat_kl(k, block.neighbor);
        let data = edge_point_data(disc, ext, block, Domain::Parameter, disc.cfg.quad_increment);
        accumulate_interface_terms(&data, w_pen, false, &mut trip, &mut dummy);
    }
    let dhat = CsrMatrix::from_triplets(n, n, &trip);

    ParameterMatrices {
        alpha,
        m1,
        k1,
        m2,
        k2,
        d2_blocks,
        dhat,
    }
}

/// L2-orthogonal projection from patch k's own edge trace space onto the
/// artificial trace space of one interface, on the parameter edge.
pub struct EdgeProjection {
    /// Mass matrix of the target (artificial) trace space.
    pub m_edge: DenseMatrix,
    chol: CholeskyFactor,
    /// Mixed mass: (target trace) x (own edge trace).
    pub mixed: DenseMatrix,
}

impl EdgeProjection {
    /// Coefficients of the projection of an own-trace function.
    pub fn project(&self, own: &[f64]) -> Vec<f64> {
        let mut rhs = vec![0.0; self.mixed.rows()];
        self.mixed.matvec(own, &mut rhs);
        self.chol.solve(&rhs)
    }

    /// Adjoint action: own-trace result of the transpose map.
    pub fn project_transpose(&self, trace: &[f64]) -> Vec<f64> {
        let t = self.chol.solve(trace);
        let mut out = vec![0.0; self.mixed.cols()];
        self.mixed.matvec_transpose(&t, &mut out);
        out
    }

    /// Solve with the target edge mass only.
    pub fn edge_mass_solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.chol.solve(rhs)
    }

    /// The projection as a dense matrix (tests only).
    pub fn matrix(&self) -> DenseMatrix {
        let nt = self.mixed.rows();
        let no = self.mixed.cols();
        let mut p = DenseMatrix::zeros(nt, no);
        let mut e = vec![0.0; no];
        for j in 0..no {
            e.fill(0.0);
            e[j] = 1.0;
            let col = self.project(&e);
            p.set_column(j, &col);
        }
        p
    }
}

/// Build the edge projection for one artificial block of patch k.
pub fn build_edge_projection(
    disc: &Discretization,
    ext: &ExtendedSpace,
    block: &TraceBlock,
) -> Result<EdgeProjection, AssemblyError> {
    let own = ext.edge_trace(block.side);
    let own_kv = ext.basis.kv(block.side.parallel_dir());
    let rule = merged_edge_rule(own_kv, block, disc.cfg.quad_increment);
    let nt = block.n();
    let no = own.n;
    let mut m_edge = DenseMatrix::zeros(nt, nt);
    let mut mixed = DenseMatrix::zeros(nt, no);
    let own_lo = usize::from(own.drop_first);
    let own_hi = own_kv.num_basis() - usize::from(own.drop_last);
    for (s, w) in rule {
        let tvals = block.eval(s);
        let (first, vals, _) = own_kv.eval_basis(s).expect("s in [0,1]");
        let ovals: Vec<(usize, f64)> = vals
            .iter()
            .enumerate()
            .filter_map(|(j, &v)| {
                let i = first + j;
                (i >= own_lo && i < own_hi).then(|| (i - own_lo, v))
            })
            .collect();
        for &(a, va) in &tvals {
            for &(b, vb) in &tvals {
                m_edge[(a, b)] += w * va * vb;
            }
            for &(i, vi) in &ovals {
                mixed[(a, i)] += w * va * vi;
            }
        }
    }
    let chol = m_edge.cholesky()?;
    Ok(EdgeProjection {
        m_edge,
        chol,
        mixed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::unit_square_multipatch;
    use crate::linalg::kron_dense;
    use crate::util::Rng;

    pub fn square_disc(
        nx: usize,
        ny: usize,
        p: usize,
        r: usize,
        delta: Option<f64>,
    ) -> Discretization {
        let mp = unit_square_multipatch(nx, ny).unwrap();
        let dr = vec![(p, r); nx * ny];
        let spaces = build_spaces(&mp, &dr).unwrap();
        let delta = choose_penalty(p, delta).unwrap();
        Discretization::new(mp, spaces, DgConfig::new(delta)).unwrap()
    }

    #[test]
    fn penalty_default_and_override() {
        assert_eq!(choose_penalty(2, None).unwrap(), 18.0);
        assert_eq!(choose_penalty(1, Some(4.0)).unwrap(), 4.0);
        assert!(matches!(
            choose_penalty(1, Some(-1.0)),
            Err(AssemblyError::InvalidPenalty(_))
        ));
    }

    #[test]
    fn single_patch_matches_kronecker() {
        // No neighbors: the dG terms vanish and A is the Kronecker Laplace
        // assembly of the reduced univariate factors, exactly.
        let disc = square_disc(1, 1, 1, 2, None);
        let ext = ExtendedSpace::build(&disc, 0);
        assert!(ext.traces.is_empty());
        let sys = assemble_local(&disc, &ext, &|_| 0.0).unwrap();
        let pm = assemble_parameter_matrices(&disc, &ext);
        let mut expect = kron_dense(&pm.k1, &pm.m2);
        expect.add_scaled(&kron_dense(&pm.m1, &pm.k2), 1.0);
        let a = sys.a.to_dense();
        assert_eq!(a.rows(), expect.rows());
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                assert!(
                    (a[(i, j)] - expect[(i, j)]).abs() <= 1e-13,
                    "entry ({i},{j}): {} vs {}",
                    a[(i, j)],
                    expect[(i, j)]
                );
            }
        }
        assert_eq!(pm.alpha, 0.0);
    }

    #[test]
    fn assembled_matrix_is_symmetric() {
        for (p, r) in [(1usize, 1usize), (2, 1), (3, 0)] {
            let disc = square_disc(2, 2, p, r, None);
            for k in 0..4 {
                let ext = ExtendedSpace::build(&disc, k);
                let sys = assemble_local(&disc, &ext, &|_| 1.0).unwrap();
                let asym = sys.a.max_asymmetry();
                assert!(
                    asym <= 1e-12 * sys.a.max_abs(),
                    "p={p} r={r} patch {k}: asymmetry {asym:.3e}"
                );
                assert!(sys.d.max_asymmetry() <= 1e-12 * sys.d.max_abs());
            }
        }
    }

    #[test]
    fn zero_jump_kills_penalty_and_consistency() {
        // Two matching p=1 patches; an extended vector whose artificial
        // coefficients copy the neighbor-facing trace has zero jump, so
        // v^T A v equals v^T D v (m and r both vanish on it) and is
        // penalty-independent.
        let disc = square_disc(2, 1, 1, 1, None);
        let ext = ExtendedSpace::build(&disc, 0);
        let sys = assemble_local(&disc, &ext, &|_| 0.0).unwrap();
        let mut rng = Rng::new(42);
        let mut v = vec![0.0; ext.n_ext];
        for i in 0..ext.n_patch {
            v[i] = rng.next_signed();
        }
        let block = &ext.traces[0];
        let own = ext.edge_trace(block.side);
        assert_eq!(own.n, block.n());
        for a in 0..block.n() {
            let b = if block.reversed { block.n() - 1 - a } else { a };
            v[block.offset + b] = v[ext.edge_dof(&own, a)];
        }
        let mut av = vec![0.0; ext.n_ext];
        sys.a.matvec(&v, &mut av);
        let energy_a: f64 = v.iter().zip(av.iter()).map(|(x, y)| x * y).sum();
        let mut dv = vec![0.0; ext.n_ext];
        sys.d.matvec(&v, &mut dv);
        let energy_d: f64 = v.iter().zip(dv.iter()).map(|(x, y)| x * y).sum();
        assert!(
            (energy_a - energy_d).abs() <= 1e-12 * energy_d.abs().max(1.0),
            "m-term not annihilated: {energy_a} vs {energy_d}"
        );
        let mut disc2 = square_disc(2, 1, 1, 1, None);
        disc2.cfg.delta *= 2.0;
        let sys2 = assemble_local(&disc2, &ext, &|_| 0.0).unwrap();
        let mut av2 = vec![0.0; ext.n_ext];
        sys2.a.matvec(&v, &mut av2);
        let energy_a2: f64 = v.iter().zip(av2.iter()).map(|(x, y)| x * y).sum();
        assert!((energy_a - energy_a2).abs() <= 1e-12 * energy_a.abs().max(1.0));
    }

    #[test]
    fn extended_space_dof_count() {
        // 2x2 grid: each patch has 2 neighbors.
        let disc = square_disc(2, 2, 2, 1, None);
        for k in 0..4 {
            let ext = ExtendedSpace::build(&disc, k);
            assert_eq!(ext.traces.len(), 2);
            let expected: usize = ext.n_patch + ext.traces.iter().map(|t| t.n()).sum::<usize>();
            assert_eq!(ext.n_ext, expected);
            // Neighbor trace on an interior edge of a 2x2 layout: one end
            // is Dirichlet (outer boundary), one is the interior cross.
            for t in &ext.traces {
                assert!(t.drop_first ^ t.drop_last);
                assert_eq!(t.n(), t.kv.num_basis() - 1);
            }
        }
    }

    #[test]
    fn alpha_rule() {
        let disc = square_disc(3, 3, 1, 1, None);
        for k in 0..9 {
            let ext = ExtendedSpace::build(&disc, k);
            let pm = assemble_parameter_matrices(&disc, &ext);
            let floating = disc.mp.topology.dirichlet_sides[k].is_empty();
            assert_eq!(pm.alpha, if floating { 1.0 } else { 0.0 }, "patch {k}");
            if floating {
                assert_eq!(k, 4, "only the center patch floats in a 3x3 grid");
                let d1 = pm.d1_dense();
                let (w, _) = crate::linalg::sym_eig(&d1).unwrap();
                assert!(w[0] > 0.0, "mass shift must make D1 tilde SPD");
            }
        }
    }

    #[test]
    fn d1_dense_matches_direct_parameter_assembly() {
        // Dense reconstruction from Kronecker factors vs direct 2-D
        // quadrature of grad u . grad v + alpha u v on the reduced basis.
        for (nx, ny, k) in [(2usize, 1usize, 0usize), (3, 3, 4)] {
            let disc = square_disc(nx, ny, 2, 1, None);
            let ext = ExtendedSpace::build(&disc, k);
            let pm = assemble_parameter_matrices(&disc, &ext);
            let d1 = pm.d1_dense();
            let basis = &ext.basis;
            let n = basis.num_dofs();
            let mut direct = DenseMatrix::zeros(n, n);
            let rule1 = GaussRule::new(basis.kv1.degree() + 1);
            let rule2 = GaussRule::new(basis.kv2.degree() + 1);
            for w1 in basis.kv1.breakpoints().windows(2) {
                for w2 in basis.kv2.breakpoints().windows(2) {
                    for (x1, q1) in rule1.mapped(w1[0], w1[1]) {
                        for (x2, q2) in rule2.mapped(w2[0], w2[1]) {
                            let wq = q1 * q2;
                            let evals = basis.eval([x1, x2]);
                            for &(i, vi, gi) in &evals {
                                for &(jj, vj, gj) in &evals {
                                    direct[(i, jj)] +=
                                        wq * (gi[0] * gj[0] + gi[1] * gj[1] + pm.alpha * vi * vj);
                                }
                            }
                        }
                    }
                }
            }
            let scale = direct.max_abs();
            for i in 0..n {
                for j in 0..n {
                    assert!(
                        (d1[(i, j)] - direct[(i, j)]).abs() <= 1e-13 * scale,
                        "patch {k} entry ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn d2_equals_dhat_on_trace_block() {
        // D2 tilde must coincide with the trace-trace block of D hat.
        let disc = square_disc(2, 1, 2, 1, None);
        let ext = ExtendedSpace::build(&disc, 0);
        let pm = assemble_parameter_matrices(&disc, &ext);
        let block = &ext.traces[0];
        let (w, mass) = &pm.d2_blocks[0];
        let dhat = pm.dhat.to_dense();
        for a in 0..block.n() {
            for b in 0..block.n() {
                let expect = w * mass[(a, b)];
                let got = dhat[(block.offset + a, block.offset + b)];
                assert!(
                    (got - expect).abs() <= 1e-12 * expect.abs().max(1.0),
                    "({a},{b}): {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn projection_identity_on_matching_spaces() {
        let disc = square_disc(2, 1, 2, 2, None);
        let ext = ExtendedSpace::build(&disc, 0);
        let block = &ext.traces[0];
        let proj = build_edge_projection(&disc, &ext, block).unwrap();
        let p = proj.matrix();
        // Matching spaces on both sides: the projection is the identity up
        // to the orientation-induced reordering.
        assert_eq!(p.rows(), p.cols());
        let n = p.rows();
        for i in 0..n {
            for j in 0..n {
                let expect = if block.reversed {
                    if i + j == n - 1 {
                        1.0
                    } else {
                        0.0
                    }
                } else if i == j {
                    1.0
                } else {
                    0.0
                };
                assert!(
                    (p[(i, j)] - expect).abs() <= 1e-11,
                    "({i},{j}): {}",
                    p[(i, j)]
                );
            }
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let disc = square_disc(2, 1, 2, 1, None);
        let ext = ExtendedSpace::build(&disc, 0);
        let block = &ext.traces[0];
        let own = ext.edge_trace(block.side);
        let proj = build_edge_projection(&disc, &ext, block).unwrap();
        let mut rng = Rng::new(9);
        let v = rng.vec_signed(own.n);
        let once = proj.project(&v);
        // A second projection of something already in the target space must
        // return it unchanged.
        let mut rhs = vec![0.0; once.len()];
        proj.m_edge.matvec(&once, &mut rhs);
        let twice = proj.edge_mass_solve(&rhs);
        for i in 0..once.len() {
            assert!((once[i] - twice[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn projection_exact_on_subspace_and_least_squares() {
        // Refined neighbor: coarse own trace, fine target. Coarse-to-fine
        // projection of a coarse function is exact.
        let mp = unit_square_multipatch(2, 1).unwrap();
        let spaces = build_spaces(&mp, &[(2, 1), (2, 2)]).unwrap();
        let delta = choose_penalty(2, None).unwrap();
        let disc = Discretization::new(mp, spaces, DgConfig::new(delta)).unwrap();
        let ext = ExtendedSpace::build(&disc, 0);
        let block = &ext.traces[0];
        let proj = build_edge_projection(&disc, &ext, block).unwrap();
        let own = ext.edge_trace(block.side);
        let own_kv = ext.basis.kv(block.side.parallel_dir());

        let mut rng = Rng::new(77);
        let coarse = rng.vec_signed(own.n);
        let fine = proj.project(&coarse);
        for i in 0..101 {
            let s = i as f64 / 100.0;
            let mut v_own = 0.0;
            let (first, vals, _) = own_kv.eval_basis(s).unwrap();
            let lo = usize::from(own.drop_first);
            let hi = own_kv.num_basis() - usize::from(own.drop_last);
            for (j, &v) in vals.iter().enumerate() {
                let idx = first + j;
                if idx >= lo && idx < hi {
                    v_own += coarse[idx - lo] * v;
                }
            }
            let mut v_fine = 0.0;
            for (a, va) in block.eval(s) {
                v_fine += fine[a] * va;
            }
            assert!(
                (v_own - v_fine).abs() <= 1e-11,
                "subspace projection not exact at s={s}"
            );
        }

        // Fine-to-coarse: patch 1's own trace is fine, the target coarse.
        // Compare the projection of (an interpolant of) sin(pi s) against a
        // dense normal-equations oracle on an independent quadrature grid.
        let ext1 = ExtendedSpace::build(&disc, 1);
        let block1 = &ext1.traces[0];
        let proj1 = build_edge_projection(&disc, &ext1, block1).unwrap();
        let own1 = ext1.edge_trace(block1.side);
        let own1_kv = ext1.basis.kv(block1.side.parallel_dir());
        let lo1 = usize::from(own1.drop_first);
        let hi1 = own1_kv.num_basis() - usize::from(own1.drop_last);
        let grev = own1_kv.greville();
        let own_coeffs: Vec<f64> = (lo1..hi1)
            .map(|i| (std::f64::consts::PI * grev[i]).sin())
            .collect();
        let result = proj1.project(&own_coeffs);
        let nt = block1.n();
        let mut gram = DenseMatrix::zeros(nt, nt);
        let mut rhs = vec![0.0; nt];
        let nq = 4000;
        for q in 0..=nq {
            let s = q as f64 / nq as f64;
            let w = if q == 0 || q == nq { 0.5 } else { 1.0 } / nq as f64;
            let tvals = block1.eval(s);
            let mut v_own = 0.0;
            let (first, vals, _) = own1_kv.eval_basis(s).unwrap();
            for (j, &v) in vals.iter().enumerate() {
                let idx = first + j;
                if idx >= lo1 && idx < hi1 {
                    v_own += own_coeffs[idx - lo1] * v;
                }
            }
            for &(a, va) in &tvals {
                rhs[a] += w * va * v_own;
                for &(b, vb) in &tvals {
                    gram[(a, b)] += w * va * vb;
                }
            }
        }
        let oracle = gram.cholesky().unwrap().solve(&rhs);
        for a in 0..nt {
            assert!(
                (result[a] - oracle[a]).abs() <= 1e-5,
                "fine-to-coarse projection vs oracle at {a}: {} vs {}",
                result[a],
                oracle[a]
            );
        }
    }

    #[test]
    fn galerkin_orthogonality_of_projection() {
        let mp = unit_square_multipatch(2, 1).unwrap();
        let spaces = build_spaces(&mp, &[(2, 2), (3, 1)]).unwrap();
        let delta = choose_penalty(3, None).unwrap();
        let disc = Discretization::new(mp, spaces, DgConfig::new(delta)).unwrap();
        let ext = ExtendedSpace::build(&disc, 0);
        let block = &ext.traces[0];
        let proj = build_edge_projection(&disc, &ext, block).unwrap();
        let own = ext.edge_trace(block.side);
        let mut rng = Rng::new(123);
        for _ in 0..20 {
            let u = rng.vec_signed(own.n);
            let pu = proj.project(&u);
            let mut a = vec![0.0; pu.len()];
            proj.mixed.matvec(&u, &mut a);
            let mut b = vec![0.0; pu.len()];
            proj.m_edge.matvec(&pu, &mut b);
            for i in 0..a.len() {
                assert!(
                    (a[i] - b[i]).abs() <= 1e-11,
                    "Galerkin orthogonality violated at {i}"
                );
            }
        }
    }
}
