//! Slow dense reference implementations used by the validation suites:
//! the monolithic dG system without artificial interfaces, and an
//! independently coded per-element assembler for the extended local
//! systems. Everything here is O(dense) and meant for small instances.

use crate::assembly::{Discretization, ExtendedSpace};
use crate::linalg::DenseMatrix;
use crate::splines::GaussRule;

/// Monolithic dG system on the product of the patch spaces.
pub struct MonolithicSystem {
    /// Full SIPG matrix (volume + consistency + penalty).
    pub a: DenseMatrix,
    /// dG scalar product matrix (volume + penalty only).
    pub d: DenseMatrix,
    pub f: Vec<f64>,
    /// Per patch, the offset of its dofs in the global numbering.
    pub offsets: Vec<usize>,
    pub n: usize,
}

impl MonolithicSystem {
    /// Dense direct solve of the dG system.
    pub fn solve(&self, f: &[f64]) -> Vec<f64> {
        self.a.lu().expect("dG matrix nonsingular").solve(f)
    }

    /// dG norm sqrt(e^T D e) of a concatenated coefficient vector.
    pub fn dg_norm(&self, e: &[f64]) -> f64 {
        let mut de = vec![0.0; self.n];
        self.d.matvec(e, &mut de);
        e.iter()
            .zip(de.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    }

    /// Concatenate per-patch coefficient vectors into the global numbering.
    pub fn concat(&self, per_patch: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (k, c) in per_patch.iter().enumerate() {
            out[self.offsets[k]..self.offsets[k] + c.len()].copy_from_slice(c);
        }
        out
    }
}

/// Assemble the monolithic SIPG system: per-patch volume terms and, per
/// interface, both one-sided consistency terms plus the penalty, with the
/// real neighbor traces instead of artificial copies.
pub fn assemble_monolithic(
    disc: &Discretization,
    rhs: &dyn Fn([f64; 2]) -> f64,
) -> MonolithicSystem {
    let npatch = disc.n_patches();
    let mut offsets = Vec::with_capacity(npatch);
    let mut n = 0;
    for k in 0..npatch {
        offsets.push(n);
        n += disc.spaces[k].num_dofs();
    }
    let mut a = DenseMatrix::zeros(n, n);
    let mut d = DenseMatrix::zeros(n, n);
    let mut f = vec![0.0; n];

    // Volume terms and loads.
    for k in 0..npatch {
        let basis = &disc.spaces[k];
        let map = &disc.mp.maps[k];
        let off = offsets[k];
        let rule1 = GaussRule::new(basis.kv1.degree() + 1 + disc.cfg.quad_increment);
        let rule2 = GaussRule::new(basis.kv2.degree() + 1 + disc.cfg.quad_increment);
        for w1 in basis.kv1.breakpoints().windows(2) {
            for w2 in basis.kv2.breakpoints().windows(2) {
                for (x1, q1) in rule1.mapped(w1[0], w1[1]) {
                    for (x2, q2) in rule2.mapped(w2[0], w2[1]) {
                        let (x, j, det) = map.eval([x1, x2]).expect("regular geometry");
                        let wq = q1 * q2 * det.abs();
                        let evals = basis.eval([x1, x2]);
                        let fx = rhs(x);
                        for &(i, vi, gi) in &evals {
                            let gix = (j[1][1] * gi[0] - j[1][0] * gi[1]) / det;
                            let giy = (-j[0][1] * gi[0] + j[0][0] * gi[1]) / det;
                            f[off + i] += wq * fx * vi;
                            for &(jj, _, gj) in &evals {
                                let gjx = (j[1][1] * gj[0] - j[1][0] * gj[1]) / det;
                                let gjy = (-j[0][1] * gj[0] + j[0][0] * gj[1]) / det;
                                let val = wq * (gix * gjx + giy * gjy);
                                a[(off + i, off + jj)] += val;
                                d[(off + i, off + jj)] += val;
                            }
                        }
                    }
                }
            }
        }
    }

    // Interface terms, one-sided per patch, both patches contributing.
    for iface in &disc.mp.topology.interfaces {
        for (k, side_k, l, side_l, flip) in [
            (iface.k, iface.side_k, iface.l, iface.side_l, iface.reversed),
            (iface.l, iface.side_l, iface.k, iface.side_k, iface.reversed),
        ] {
            let basis_k = &disc.spaces[k];
            let basis_l = &disc.spaces[l];
            let map = &disc.mp.maps[k];
            let off_k = offsets[k];
            let off_l = offsets[l];
            let w_pen = disc.cfg.delta / disc.h_kl(k, l);
            // merged breakpoints in k's coordinate
            let mut bp = basis_k.kv(side_k.parallel_dir()).breakpoints();
            for t in basis_l.kv(side_l.parallel_dir()).breakpoints() {
                bp.push(if flip { 1.0 - t } else { t });
            }
            bp.sort_by(|x, y| x.partial_cmp(y).unwrap());
            bp.dedup_by(|x, y| (*x - *y).abs() <= 1e-14);
            let p = basis_k
                .kv(side_k.parallel_dir())
                .degree()
                .max(basis_l.kv(side_l.parallel_dir()).degree());
            let rule = GaussRule::new(p + 1 + disc.cfg.quad_increment);
            for w in bp.windows(2) {
                if w[1] - w[0] <= 1e-14 {
                    continue;
                }
                for (s, q) in rule.mapped(w[0], w[1]) {
                    let xi = side_k.point(s);
                    let (_, j, det) = map.eval(xi).expect("regular geometry");
                    let pd = side_k.parallel_dir();
                    let tangent = [j[0][pd], j[1][pd]];
                    let tlen = (tangent[0] * tangent[0] + tangent[1] * tangent[1]).sqrt();
                    let w_s = q * tlen;
                    let nhat: [f64; 2] = match side_k {
                        crate::splines::Side::West => [-1.0, 0.0],
                        crate::splines::Side::East => [1.0, 0.0],
                        crate::splines::Side::South => [0.0, -1.0],
                        crate::splines::Side::North => [0.0, 1.0],
                    };
                    let mut nv = [
                        (j[1][1] * nhat[0] - j[1][0] * nhat[1]) / det,
                        (-j[0][1] * nhat[0] + j[0][0] * nhat[1]) / det,
                    ];
                    let nl = (nv[0] * nv[0] + nv[1] * nv[1]).sqrt();
                    nv = [nv[0] / nl, nv[1] / nl];
                    // k-side basis values and normal derivatives
                    let evk: Vec<(usize, f64, f64)> = basis_k
                        .eval(xi)
                        .into_iter()
                        .map(|(dof, v, g)| {
                            let gx = (j[1][1] * g[0] - j[1][0] * g[1]) / det;
                            let gy = (-j[0][1] * g[0] + j[0][0] * g[1]) / det;
                            (dof, v, gx * nv[0] + gy * nv[1])
                        })
                        .collect();
                    // l-side values at the matching point
                    let t = if flip { 1.0 - s } else { s };
                    let xil = side_l.point(t);
                    let evl: Vec<(usize, f64)> = basis_l
                        .eval(xil)
                        .into_iter()
                        .filter(|&(_, v, _)| v != 0.0)
                        .map(|(dof, v, _)| (dof, v))
                        .collect();
                    // consistency m^(k), both slots
                    for &(i, vi, dni) in &evk {
                        for &(jj, vj, _) in &evk {
                            let val = -0.5 * w_s * dni * vj;
                            a[(off_k + i, off_k + jj)] += val;
                            a[(off_k + jj, off_k + i)] += val;
                            let _ = vi;
                        }
                        for &(jl, vl) in &evl {
                            let val = 0.5 * w_s * dni * vl;
                            a[(off_k + i, off_l + jl)] += val;
                            a[(off_l + jl, off_k + i)] += val;
                        }
                    }
                    // penalty r^(k)
                    for &(i, vi, _) in &evk {
                        if vi == 0.0 {
                            continue;
                        }
                        for &(jj, vj, _) in &evk {
                            let val = w_s * w_pen * vi * vj;
                            a[(off_k + i, off_k + jj)] += val;
                            d[(off_k + i, off_k + jj)] += val;
                        }
                        for &(jl, vl) in &evl {
                            let val = -w_s * w_pen * vi * vl;
                            a[(off_k + i, off_l + jl)] += val;
                            a[(off_l + jl, off_k + i)] += val;
                            d[(off_k + i, off_l + jl)] += val;
                            d[(off_l + jl, off_k + i)] += val;
                        }
                    }
                    for &(il, vl) in &evl {
                        for &(jl, wl) in &evl {
                            let val = w_s * w_pen * vl * wl;
                            a[(off_l + il, off_l + jl)] += val;
                            d[(off_l + il, off_l + jl)] += val;
                        }
                    }
                }
            }
        }
    }

    MonolithicSystem {
        a,
        d,
        f,
        offsets,
        n,
    }
}

/// Independent per-element dense assembly of one extended local system,
/// coded as a plain full-matrix accumulation for cross-checking the sparse
/// assembler.
pub fn assemble_extended_dense_slow(disc: &Discretization, ext: &ExtendedSpace) -> DenseMatrix {
    let k = ext.patch;
    let basis = &ext.basis;
    let map = &disc.mp.maps[k];
    let n = ext.n_ext;
    let mut a = DenseMatrix::zeros(n, n);

    let rule1 = GaussRule::new(basis.kv1.degree() + 1 + disc.cfg.quad_increment);
    let rule2 = GaussRule::new(basis.kv2.degree() + 1 + disc.cfg.quad_increment);
    for w1 in basis.kv1.breakpoints().windows(2) {
        for w2 in basis.kv2.breakpoints().windows(2) {
            for (x1, q1) in rule1.mapped(w1[0], w1[1]) {
                for (x2, q2) in rule2.mapped(w2[0], w2[1]) {
                    let (_, j, det) = map.eval([x1, x2]).expect("regular geometry");
                    let wq = q1 * q2 * det.abs();
                    let evals = basis.eval([x1, x2]);
                    for &(i, _, gi) in &evals {
                        let gix = (j[1][1] * gi[0] - j[1][0] * gi[1]) / det;
                        let giy = (-j[0][1] * gi[0] + j[0][0] * gi[1]) / det;
                        for &(jj, _, gj) in &evals {
                            let gjx = (j[1][1] * gj[0] - j[1][0] * gj[1]) / det;
                            let gjy = (-j[0][1] * gj[0] + j[0][0] * gj[1]) / det;
                            a[(i, jj)] += wq * (gix * gjx + giy * gjy);
                        }
                    }
                }
            }
        }
    }

    for block in &ext.traces {
        let w_pen = disc.cfg.delta / disc.h_kl(k, block.neighbor);
        let own_kv = basis.kv(block.side.parallel_dir());
        let mut bp = own_kv.breakpoints();
        bp.extend(block.breakpoints_in_k());
        bp.sort_by(|x, y| x.partial_cmp(y).unwrap());
        bp.dedup_by(|x, y| (*x - *y).abs() <= 1e-14);
        let p = own_kv.degree().max(block.kv.degree());
        let rule = GaussRule::new(p + 1 + disc.cfg.quad_increment);
        for w in bp.windows(2) {
            if w[1] - w[0] <= 1e-14 {
                continue;
            }
            for (s, q) in rule.mapped(w[0], w[1]) {
                let xi = block.side.point(s);
                let (_, j, det) = map.eval(xi).expect("regular geometry");
                let pd = block.side.parallel_dir();
                let tangent = [j[0][pd], j[1][pd]];
                let tlen = (tangent[0] * tangent[0] + tangent[1] * tangent[1]).sqrt();
                let w_s = q * tlen;
                let nhat: [f64; 2] = match block.side {
                    crate::splines::Side::West => [-1.0, 0.0],
                    crate::splines::Side::East => [1.0, 0.0],
                    crate::splines::Side::South => [0.0, -1.0],
                    crate::splines::Side::North => [0.0, 1.0],
                };
                let mut nv = [
                    (j[1][1] * nhat[0] - j[1][0] * nhat[1]) / det,
                    (-j[0][1] * nhat[0] + j[0][0] * nhat[1]) / det,
                ];
                let nl = (nv[0] * nv[0] + nv[1] * nv[1]).sqrt();
                nv = [nv[0] / nl, nv[1] / nl];
                let evk: Vec<(usize, f64, f64)> = basis
                    .eval(xi)
                    .into_iter()
                    .map(|(dof, v, g)| {
                        let gx = (j[1][1] * g[0] - j[1][0] * g[1]) / det;
                        let gy = (-j[0][1] * g[0] + j[0][0] * g[1]) / det;
                        (dof, v, gx * nv[0] + gy * nv[1])
                    })
                    .collect();
                let evt: Vec<(usize, f64)> = block
                    .eval(s)
                    .into_iter()
                    .map(|(aa, v)| (block.offset + aa, v))
                    .collect();
                for &(i, vi, dni) in &evk {
                    for &(jj, vj, _) in &evk {
                        a[(i, jj)] += w_s * (w_pen * vi * vj - 0.5 * dni * vj);
                        a[(jj, i)] += w_s * (-0.5 * dni * vj);
                    }
                    for &(ta, va) in &evt {
                        let pen = -w_s * w_pen * vi * va;
                        let con = 0.5 * w_s * dni * va;
                        a[(i, ta)] += pen + con;
                        a[(ta, i)] += pen + con;
                    }
                }
                for &(ta, va) in &evt {
                    for &(tb, vb) in &evt {
                        a[(ta, tb)] += w_s * w_pen * va * vb;
                    }
                }
            }
        }
    }
    a
}
