//! Patch geometry maps, multi-patch topology, and experiment domain
//! generators (unit-square grids and the approximated quarter annulus).

use crate::linalg::DenseMatrix;
use crate::splines::{make_open_knot_vector, KnotVector, Side, TensorBasis, SIDES};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("singular Jacobian at parameter point ({0}, {1})")]
    SingularJacobian(f64, f64),
    #[error("degenerate radii: need 0 < r_inner < r_outer, got ({0}, {1})")]
    DegenerateRadii(f64, f64),
    #[error("patch layout must have at least one patch per direction")]
    EmptyLayout,
    #[error("topology violation: {0}")]
    Topology(String),
    #[error("geometry JSON error: {0}")]
    Json(String),
}

/// B-spline geometry map G_k: (0,1)^2 -> physical patch. Control points are
/// stored per tensor dof of the (unreduced) geometry basis. Jacobian
/// regularity and the non-singularity constants are measured at build time.
#[derive(Clone, Debug)]
pub struct GeometryMap {
    basis: TensorBasis,
    control_points: Vec<[f64; 2]>,
    diameter: f64,
    grad_sup: f64,
    inv_grad_sup: f64,
}

impl GeometryMap {
    pub fn new(basis: TensorBasis, control_points: Vec<[f64; 2]>) -> Result<Self, GeometryError> {
        assert_eq!(
            control_points.len(),
            basis.num_dofs(),
            "one control point per geometry dof"
        );
        // Bounding-box diagonal as the patch diameter proxy.
        let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
        for c in &control_points {
            xmin = xmin.min(c[0]);
            xmax = xmax.max(c[0]);
            ymin = ymin.min(c[1]);
            ymax = ymax.max(c[1]);
        }
        let diameter = ((xmax - xmin).powi(2) + (ymax - ymin).powi(2)).sqrt();
        let mut map = GeometryMap {
            basis,
            control_points,
            diameter,
            grad_sup: 0.0,
            inv_grad_sup: 0.0,
        };
        // Jacobian checks on a quadrature-like sample grid per element.
        let p = map.basis.kv1.degree().max(map.basis.kv2.degree());
        let samples = sample_points(&map.basis.kv1, p + 2);
        let samples2 = sample_points(&map.basis.kv2, p + 2);
        let mut grad_sup: f64 = 0.0;
        let mut inv_grad_sup: f64 = 0.0;
        for &x1 in &samples {
            for &x2 in &samples2 {
                let (_, j, det) = map.eval_raw([x1, x2]);
                if det.abs() < 1e-14 * map.diameter.powi(2).max(1e-300) {
                    return Err(GeometryError::SingularJacobian(x1, x2));
                }
                let (smax, smin) = singular_values_2x2(&j);
                grad_sup = grad_sup.max(smax);
                inv_grad_sup = inv_grad_sup.max(1.0 / smin);
            }
        }
        map.grad_sup = grad_sup;
        map.inv_grad_sup = inv_grad_sup;
        Ok(map)
    }

    pub fn basis(&self) -> &TensorBasis {
        &self.basis
    }

    pub fn control_points(&self) -> &[[f64; 2]] {
        &self.control_points
    }

    /// Patch diameter proxy H_k (control-point bounding-box diagonal).
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Measured sup ||grad G|| / H and sup ||(grad G)^-1|| * H.
    pub fn regularity_proxies(&self) -> (f64, f64) {
        (
            self.grad_sup / self.diameter,
            self.inv_grad_sup * self.diameter,
        )
    }

    fn eval_raw(&self, xi: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2], f64) {
        let mut x = [0.0; 2];
        let mut j = [[0.0; 2]; 2];
        for (dof, v, g) in self.basis.eval(xi) {
            let c = self.control_points[dof];
            for d in 0..2 {
                x[d] += c[d] * v;
                j[d][0] += c[d] * g[0];
                j[d][1] += c[d] * g[1];
            }
        }
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        (x, j, det)
    }

    /// Physical point, Jacobian and its determinant at a parameter point.
    pub fn eval(&self, xi: [f64; 2]) -> Result<([f64; 2], [[f64; 2]; 2], f64), GeometryError> {
        let (x, j, det) = self.eval_raw(xi);
        if det == 0.0 {
            return Err(GeometryError::SingularJacobian(xi[0], xi[1]));
        }
        Ok((x, j, det))
    }

    pub fn point(&self, xi: [f64; 2]) -> [f64; 2] {
        self.eval_raw(xi).0
    }

    /// Physical corner of the patch; local corner ids are
    /// 0:(0,0), 1:(1,0), 2:(0,1), 3:(1,1).
    pub fn corner(&self, c: usize) -> [f64; 2] {
        self.point(corner_xi(c))
    }
}

fn sample_points(kv: &KnotVector, per_span: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for w in kv.breakpoints().windows(2) {
        for i in 0..per_span {
            let t = (i as f64 + 0.5) / per_span as f64;
            out.push(w[0] + t * (w[1] - w[0]));
        }
    }
    out.push(0.0);
    out.push(1.0);
    out
}

fn singular_values_2x2(j: &[[f64; 2]; 2]) -> (f64, f64) {
    // Singular values of a 2x2 matrix from the eigenvalues of J^T J.
    let a = j[0][0] * j[0][0] + j[1][0] * j[1][0];
    let b = j[0][0] * j[0][1] + j[1][0] * j[1][1];
    let c = j[0][1] * j[0][1] + j[1][1] * j[1][1];
    let tr = a + c;
    let disc = ((a - c) * (a - c) + 4.0 * b * b).sqrt();
    let l1 = 0.5 * (tr + disc);
    let l2 = 0.5 * (tr - disc);
    (l1.max(0.0).sqrt(), l2.max(0.0).sqrt())
}

pub fn corner_xi(c: usize) -> [f64; 2] {
    match c {
        0 => [0.0, 0.0],
        1 => [1.0, 0.0],
        2 => [0.0, 1.0],
        3 => [1.0, 1.0],
        _ => panic!("local corner id must be 0..4"),
    }
}

/// Sides adjacent to a local corner.
pub fn corner_sides(c: usize) -> [Side; 2] {
    match c {
        0 => [Side::West, Side::South],
        1 => [Side::East, Side::South],
        2 => [Side::West, Side::North],
        3 => [Side::East, Side::North],
        _ => panic!("local corner id must be 0..4"),
    }
}

/// Local corner ids at the ends of a side, in the side's arc direction
/// (s = 0 end first).
pub fn side_corners(side: Side) -> [usize; 2] {
    match side {
        Side::West => [0, 2],
        Side::East => [1, 3],
        Side::South => [0, 1],
        Side::North => [2, 3],
    }
}

/// One shared edge between two patches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interface {
    pub k: usize,
    pub side_k: Side,
    pub l: usize,
    pub side_l: Side,
    /// true when the two side parameterizations traverse the edge in
    /// opposite directions.
    pub reversed: bool,
}

/// A physical corner point with its patch incidences.
#[derive(Clone, Debug)]
pub struct CornerPoint {
    pub point: [f64; 2],
    /// (patch, local corner id)
    pub incidences: Vec<(usize, usize)>,
    pub on_boundary: bool,
}

#[derive(Clone, Debug)]
pub struct PatchTopology {
    pub n_patches: usize,
    pub interfaces: Vec<Interface>,
    pub corners: Vec<CornerPoint>,
    /// Per patch, the sides lying on the domain boundary (all Dirichlet).
    pub dirichlet_sides: Vec<Vec<Side>>,
}

impl PatchTopology {
    /// Interface record at (patch, side), if any.
    pub fn interface_at(&self, k: usize, side: Side) -> Option<&Interface> {
        self.interfaces
            .iter()
            .find(|i| (i.k == k && i.side_k == side) || (i.l == k && i.side_l == side))
    }

    /// Sorted neighbor patch ids of patch k.
    pub fn neighbors(&self, k: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .interfaces
            .iter()
            .filter_map(|i| {
                if i.k == k {
                    Some(i.l)
                } else if i.l == k {
                    Some(i.k)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Interfaces of patch k ordered by local side (W, E, S, N).
    pub fn interfaces_of(&self, k: usize) -> Vec<(Side, &Interface)> {
        let mut out = Vec::new();
        for side in SIDES {
            if let Some(iface) = self.interface_at(k, side) {
                out.push((side, iface));
            }
        }
        out
    }

    pub fn corner_at(&self, p: [f64; 2], tol: f64) -> Option<&CornerPoint> {
        self.corners.iter().find(|c| dist(c.point, p) <= tol)
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Multi-patch geometry: maps plus validated topology.
#[derive(Clone, Debug)]
pub struct MultiPatch {
    pub maps: Vec<GeometryMap>,
    pub topology: PatchTopology,
}

impl MultiPatch {
    pub fn from_maps(maps: Vec<GeometryMap>) -> Result<Self, GeometryError> {
        let topology = build_topology(&maps)?;
        Ok(MultiPatch { maps, topology })
    }

    pub fn n_patches(&self) -> usize {
        self.maps.len()
    }

    pub fn to_json(&self) -> String {
        let doc = MultiPatchJson {
            patches: self
                .maps
                .iter()
                .map(|m| PatchJson {
                    degree: [m.basis().kv1.degree(), m.basis().kv2.degree()],
                    knots1: m.basis().kv1.knots().to_vec(),
                    knots2: m.basis().kv2.knots().to_vec(),
                    control_points: m.control_points().to_vec(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("geometry serialization")
    }

    /// Load a multi-patch geometry; the topology is recomputed and
    /// re-validated.
    pub fn from_json(s: &str) -> Result<Self, GeometryError> {
        let doc: MultiPatchJson =
            serde_json::from_str(s).map_err(|e| GeometryError::Json(e.to_string()))?;
        let mut maps = Vec::new();
        for p in doc.patches {
            let kv1 = KnotVector::from_knots(p.degree[0], p.knots1)
                .map_err(|e| GeometryError::Json(e.to_string()))?;
            let kv2 = KnotVector::from_knots(p.degree[1], p.knots2)
                .map_err(|e| GeometryError::Json(e.to_string()))?;
            let basis = TensorBasis::new(kv1, kv2, &[]);
            maps.push(GeometryMap::new(basis, p.control_points)?);
        }
        Self::from_maps(maps)
    }
}

#[derive(Serialize, Deserialize)]
struct MultiPatchJson {
    patches: Vec<PatchJson>,
}

#[derive(Serialize, Deserialize)]
struct PatchJson {
    degree: [usize; 2],
    knots1: Vec<f64>,
    knots2: Vec<f64>,
    control_points: Vec<[f64; 2]>,
}

const SIDE_SAMPLES: usize = 50;

fn side_samples(map: &GeometryMap, side: Side) -> Vec<[f64; 2]> {
    (0..SIDE_SAMPLES)
        .map(|i| {
            let s = i as f64 / (SIDE_SAMPLES - 1) as f64;
            map.point(side.point(s))
        })
        .collect()
}

fn max_pointwise_dist(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&p, &q)| dist(p, q))
        .fold(0.0, f64::max)
}

/// Distance from a point to a side curve: coarse sampling refined by a
/// ternary search around the nearest sample.
fn point_to_side_distance(map: &GeometryMap, side: Side, p: [f64; 2]) -> f64 {
    let coarse = 64;
    let mut best_s = 0.0;
    let mut best_d = f64::INFINITY;
    for i in 0..=coarse {
        let s = i as f64 / coarse as f64;
        let d = dist(map.point(side.point(s)), p);
        if d < best_d {
            best_d = d;
            best_s = s;
        }
    }
    let mut lo = (best_s - 1.5 / coarse as f64).max(0.0);
    let mut hi = (best_s + 1.5 / coarse as f64).min(1.0);
    for _ in 0..80 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        let d1 = dist(map.point(side.point(m1)), p);
        let d2 = dist(map.point(side.point(m2)), p);
        if d1 < d2 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let s = 0.5 * (lo + hi);
    dist(map.point(side.point(s)), p)
}

/// Derive the topology from patch geometry and validate the
/// common-edge-or-vertex assumption. Patch sides that match no neighbor are
/// classified as Dirichlet boundary.
pub fn build_topology(maps: &[GeometryMap]) -> Result<PatchTopology, GeometryError> {
    let n = maps.len();
    let h_scale = maps
        .iter()
        .map(|m| m.diameter())
        .fold(0.0, f64::max)
        .max(1e-300);
    let tol = 1e-10 * h_scale;

    let samples: Vec<[Vec<[f64; 2]>; 4]> = maps
        .iter()
        .map(|m| {
            [
                side_samples(m, Side::West),
                side_samples(m, Side::East),
                side_samples(m, Side::South),
                side_samples(m, Side::North),
            ]
        })
        .collect();

    let mut matched: Vec<[bool; 4]> = vec![[false; 4]; n];
    let mut interfaces = Vec::new();
    for k in 0..n {
        for sk in SIDES {
            if matched[k][sk.index()] {
                continue;
            }
            'search: for l in (k + 1)..n {
                for sl in SIDES {
                    if matched[l][sl.index()] {
                        continue;
                    }
                    let a = &samples[k][sk.index()];
                    let b = &samples[l][sl.index()];
                    let same = max_pointwise_dist(a, b) <= tol;
                    let mut brev = b.clone();
                    brev.reverse();
                    let rev = max_pointwise_dist(a, &brev) <= tol;
                    if same || rev {
                        interfaces.push(Interface {
                            k,
                            side_k: sk,
                            l,
                            side_l: sl,
                            reversed: rev && !same,
                        });
                        matched[k][sk.index()] = true;
                        matched[l][sl.index()] = true;
                        break 'search;
                    }
                }
            }
        }
    }

    // Partial-overlap rejection: an interior point of an unmatched side pair
    // lying on the other side indicates a T-junction. Bounding boxes of the
    // side samples prefilter the candidate pairs.
    let overlap_tol = 1e-8 * h_scale;
    let bbox = |pts: &[[f64; 2]]| {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in pts {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    };
    let boxes: Vec<[([f64; 2], [f64; 2]); 4]> = samples
        .iter()
        .map(|s| [bbox(&s[0]), bbox(&s[1]), bbox(&s[2]), bbox(&s[3])])
        .collect();
    let boxes_near = |a: &([f64; 2], [f64; 2]), b: &([f64; 2], [f64; 2]), margin: f64| {
        (0..2).all(|d| a.0[d] - margin <= b.1[d] && b.0[d] - margin <= a.1[d])
    };
    for k in 0..n {
        for l in 0..n {
            if k == l {
                continue;
            }
            for sk in SIDES {
                for sl in SIDES {
                    if !boxes_near(
                        &boxes[k][sk.index()],
                        &boxes[l][sl.index()],
                        10.0 * overlap_tol,
                    ) {
                        continue;
                    }
                    let is_iface = interfaces.iter().any(|i| {
                        (i.k == k && i.side_k == sk && i.l == l && i.side_l == sl)
                            || (i.k == l && i.side_k == sl && i.l == k && i.side_l == sk)
                    });
                    if is_iface {
                        continue;
                    }
                    for step in 1..8 {
                        let s = step as f64 / 8.0;
                        let p = maps[k].point(sk.point(s));
                        if point_to_side_distance(&maps[l], sl, p) <= overlap_tol {
                            return Err(GeometryError::Topology(format!(
                                "patches {k} and {l} overlap on part of an edge \
                                 (sides {sk:?}/{sl:?}); T-junctions are not supported"
                            )));
                        }
                    }
                }
            }
        }
    }

    let dirichlet_sides: Vec<Vec<Side>> = (0..n)
        .map(|k| {
            SIDES
                .iter()
                .copied()
                .filter(|s| !matched[k][s.index()])
                .collect()
        })
        .collect();

    // Cluster corner points.
    let mut corners: Vec<CornerPoint> = Vec::new();
    for (k, map) in maps.iter().enumerate() {
        for c in 0..4 {
            let p = map.corner(c);
            match corners.iter_mut().find(|cp| dist(cp.point, p) <= tol) {
                Some(cp) => cp.incidences.push((k, c)),
                None => corners.push(CornerPoint {
                    point: p,
                    incidences: vec![(k, c)],
                    on_boundary: false,
                }),
            }
        }
    }
    for cp in corners.iter_mut() {
        cp.on_boundary = cp.incidences.iter().any(|&(k, c)| {
            corner_sides(c)
                .iter()
                .any(|s| dirichlet_sides[k].contains(s))
        });
    }

    Ok(PatchTopology {
        n_patches: n,
        interfaces,
        corners,
        dirichlet_sides,
    })
}

/// H_k, parametric mesh size and physical grid size of a patch for a given
/// solution basis: h = hhat * H.
pub fn patch_sizes(map: &GeometryMap, basis: &TensorBasis) -> (f64, f64, f64) {
    let h_k = map.diameter();
    let hhat = basis.mesh_size();
    (h_k, hhat, hhat * h_k)
}

/// Degree-2 single-element geometry basis.
fn geometry_basis() -> TensorBasis {
    let kv = make_open_knot_vector(2, 1, 1).expect("valid");
    TensorBasis::new(kv.clone(), kv, &[])
}

/// Greville interpolation of an analytic map on the degree-2 basis.
fn interpolate_map(f: impl Fn(f64, f64) -> [f64; 2]) -> Result<GeometryMap, GeometryError> {
    let basis = geometry_basis();
    let g1 = basis.kv1.greville();
    let g2 = basis.kv2.greville();
    let n1 = g1.len();
    let n2 = g2.len();
    // Univariate collocation matrices B_j(greville_i).
    let coll = |kv: &KnotVector, g: &[f64]| {
        let n = kv.num_basis();
        let mut c = DenseMatrix::zeros(n, n);
        for (i, &x) in g.iter().enumerate() {
            let (first, vals, _) = kv.eval_basis(x).expect("in domain");
            for (j, &v) in vals.iter().enumerate() {
                c[(i, first + j)] = v;
            }
        }
        c
    };
    let c1 = coll(&basis.kv1, &g1).lu().expect("collocation nonsingular");
    let c2 = coll(&basis.kv2, &g2).lu().expect("collocation nonsingular");
    // Solve the tensor interpolation per physical component.
    let mut control = vec![[0.0; 2]; n1 * n2];
    for d in 0..2 {
        let mut vals = DenseMatrix::zeros(n1, n2);
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                vals[(i1, i2)] = f(g1[i1], g2[i2])[d];
            }
        }
        // Solve along direction 2 (rows), then direction 1 (columns).
        let mut tmp = DenseMatrix::zeros(n1, n2);
        for i1 in 0..n1 {
            let x = c2.solve(vals.row(i1));
            tmp.row_mut(i1).copy_from_slice(&x);
        }
        let mut coef = DenseMatrix::zeros(n1, n2);
        for i2 in 0..n2 {
            let col: Vec<f64> = (0..n1).map(|i1| tmp[(i1, i2)]).collect();
            let x = c1.solve(&col);
            for i1 in 0..n1 {
                coef[(i1, i2)] = x[i1];
            }
        }
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                control[i1 * n2 + i2][d] = coef[(i1, i2)];
            }
        }
    }
    GeometryMap::new(geometry_basis(), control)
}

/// Rectangular grid of identity-affine patches covering [0,1]^2; the full
/// outer boundary is Dirichlet.
pub fn unit_square_multipatch(nx: usize, ny: usize) -> Result<MultiPatch, GeometryError> {
    if nx == 0 || ny == 0 {
        return Err(GeometryError::EmptyLayout);
    }
    let mut maps = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (x0, y0) = (i as f64 / nx as f64, j as f64 / ny as f64);
            let (dx, dy) = (1.0 / nx as f64, 1.0 / ny as f64);
            maps.push(interpolate_map(|u, v| [x0 + dx * u, y0 + dy * v])?);
        }
    }
    MultiPatch::from_maps(maps)
}

/// Approximated quarter annulus: n_angular x n_radial patches, each the
/// degree-2 Greville interpolant of the exact polar parameterization on its
/// subrectangle. The full outer boundary is Dirichlet.
pub fn quarter_annulus_multipatch(
    n_angular: usize,
    n_radial: usize,
    r_inner: f64,
    r_outer: f64,
) -> Result<MultiPatch, GeometryError> {
    if n_angular == 0 || n_radial == 0 {
        return Err(GeometryError::EmptyLayout);
    }
    if !(r_inner > 0.0 && r_inner < r_outer) {
        return Err(GeometryError::DegenerateRadii(r_inner, r_outer));
    }
    let mut maps = Vec::with_capacity(n_angular * n_radial);
    for jr in 0..n_radial {
        for ia in 0..n_angular {
            let t0 = ia as f64 / n_angular as f64 * std::f64::consts::FRAC_PI_2;
            let t1 = (ia + 1) as f64 / n_angular as f64 * std::f64::consts::FRAC_PI_2;
            let r0 = r_inner + jr as f64 / n_radial as f64 * (r_outer - r_inner);
            let r1 = r_inner + (jr + 1) as f64 / n_radial as f64 * (r_outer - r_inner);
            maps.push(interpolate_map(|u, v| {
                let theta = t0 + u * (t1 - t0);
                let rho = r0 + v * (r1 - r0);
                [rho * theta.cos(), rho * theta.sin()]
            })?);
        }
    }
    MultiPatch::from_maps(maps)
}
