//! Dof classification into interior/boundary/corner blocks, primal dof
//! identification, and the signed jump matrix.

use crate::assembly::{Discretization, ExtendedSpace};
use crate::geometry::side_corners;

/// Classification of one extended dof.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DofClass {
    /// Patch basis functions vanishing on the whole patch boundary.
    Interior,
    /// Interface and artificial-interface functions vanishing at corners,
    /// plus any boundary function that is not corner-associated.
    Boundary,
    /// Corner-associated functions handled primally.
    Corner,
}

/// I/B/C splitting of one patch's extended dofs. The contiguous ordering is
/// I, then B, then C; delta = I + B and gamma = B + C are both contiguous
/// in it.
#[derive(Clone, Debug)]
pub struct DofPartition {
    pub class_of: Vec<DofClass>,
    /// Extended indices per class, ascending.
    pub i_dofs: Vec<usize>,
    pub b_dofs: Vec<usize>,
    pub c_dofs: Vec<usize>,
    /// Extended dof -> delta ordinal (I first, then B).
    pub delta_of: Vec<Option<usize>>,
    /// Extended dof -> gamma ordinal (B first, then C).
    pub gamma_of: Vec<Option<usize>>,
    /// Extended dof -> C ordinal.
    pub c_of: Vec<Option<usize>>,
    /// For trace-endpoint and patch-corner C dofs: (corner point index in
    /// the topology, owner patch). Aligned with `c_dofs`.
    pub c_corner_owner: Vec<(usize, usize)>,
}

impl DofPartition {
    pub fn n_delta(&self) -> usize {
        self.i_dofs.len() + self.b_dofs.len()
    }

    pub fn n_gamma(&self) -> usize {
        self.b_dofs.len() + self.c_dofs.len()
    }

    pub fn n_c(&self) -> usize {
        self.c_dofs.len()
    }

    /// Extended indices of the delta dofs in delta order.
    pub fn delta_dofs(&self) -> Vec<usize> {
        let mut v = self.i_dofs.clone();
        v.extend_from_slice(&self.b_dofs);
        v
    }

    /// Extended indices of the gamma dofs in gamma order.
    pub fn gamma_dofs(&self) -> Vec<usize> {
        let mut v = self.b_dofs.clone();
        v.extend_from_slice(&self.c_dofs);
        v
    }
}

/// Map (patch, local corner id) -> corner point index in the topology.
fn corner_point_index(disc: &Discretization, patch: usize, local: usize) -> usize {
    disc.mp
        .topology
        .corners
        .iter()
        .position(|c| c.incidences.contains(&(patch, local)))
        .expect("every patch corner appears in the topology")
}

/// Classify the extended dofs of one patch. Corner-associated functions of
/// both the patch basis and the artificial trace blocks are primal (class
/// C) whenever their corner point lies in the domain interior; corner
/// functions at boundary corner points stay in B so the jump matrix keeps
/// constraining them.
pub fn classify_dofs(disc: &Discretization, ext: &ExtendedSpace) -> DofPartition {
    let k = ext.patch;
    let n1 = ext.basis.kv1.num_basis();
    let n2 = ext.basis.kv2.num_basis();
    let mut class_of = vec![DofClass::Boundary; ext.n_ext];
    let mut corner_owner: Vec<Option<(usize, usize)>> = vec![None; ext.n_ext];

    for dof in 0..ext.n_patch {
        let (i1, i2) = ext.basis.tensor_index(dof);
        let end1 = i1 == 0 || i1 + 1 == n1;
        let end2 = i2 == 0 || i2 + 1 == n2;
        class_of[dof] = if end1 && end2 {
            let local = usize::from(i1 + 1 == n1) + 2 * usize::from(i2 + 1 == n2);
            let cp = corner_point_index(disc, k, local);
            if disc.mp.topology.corners[cp].on_boundary {
                DofClass::Boundary
            } else {
                corner_owner[dof] = Some((cp, k));
                DofClass::Corner
            }
        } else if end1 || end2 {
            DofClass::Boundary
        } else {
            DofClass::Interior
        };
    }

    for block in &ext.traces {
        let n_univ = block.kv.num_basis();
        let ends = side_corners(block.neighbor_side);
        for a in 0..block.n() {
            let i = a + usize::from(block.drop_first);
            let dof = block.offset + a;
            let local_corner = if i == 0 {
                Some(ends[0])
            } else if i + 1 == n_univ {
                Some(ends[1])
            } else {
                None
            };
            class_of[dof] = match local_corner {
                Some(c) => {
                    let cp = corner_point_index(disc, block.neighbor, c);
                    if disc.mp.topology.corners[cp].on_boundary {
                        DofClass::Boundary
                    } else {
                        corner_owner[dof] = Some((cp, block.neighbor));
                        DofClass::Corner
                    }
                }
                None => DofClass::Boundary,
            };
        }
    }

    let mut i_dofs = Vec::new();
    let mut b_dofs = Vec::new();
    let mut c_dofs = Vec::new();
    let mut c_corner_owner = Vec::new();
    for (dof, class) in class_of.iter().enumerate() {
        match class {
            DofClass::Interior => i_dofs.push(dof),
            DofClass::Boundary => b_dofs.push(dof),
            DofClass::Corner => {
                c_dofs.push(dof);
                c_corner_owner.push(corner_owner[dof].expect("corner dofs carry an owner"));
            }
        }
    }
    let mut delta_of = vec![None; ext.n_ext];
    let mut gamma_of = vec![None; ext.n_ext];
    let mut c_of = vec![None; ext.n_ext];
    for (ord, &dof) in i_dofs.iter().chain(b_dofs.iter()).enumerate() {
        delta_of[dof] = Some(ord);
    }
    for (ord, &dof) in b_dofs.iter().chain(c_dofs.iter()).enumerate() {
        gamma_of[dof] = Some(ord);
    }
    for (ord, &dof) in c_dofs.iter().enumerate() {
        c_of[dof] = Some(ord);
    }
    DofPartition {
        class_of,
        i_dofs,
        b_dofs,
        c_dofs,
        delta_of,
        gamma_of,
        c_of,
        c_corner_owner,
    }
}

/// Global primal dof identification. One global dof exists per
/// (interior corner point, owner patch) pair: it carries the corner value
/// of the owner's basis and of every artificial copy of the owner's trace
/// held by the neighbors, which is exactly the set of corner constraints
/// the tearing formulation imposes.
#[derive(Clone, Debug)]
pub struct PrimalMap {
    pub n_global: usize,
    /// (corner point, owner) -> global primal index.
    pairs: Vec<((usize, usize), usize)>,
    /// Per patch: global primal index of each local C dof.
    pub local_to_global: Vec<Vec<usize>>,
}

impl PrimalMap {
    pub fn global_of(&self, corner: usize, owner: usize) -> Option<usize> {
        self.pairs
            .iter()
            .find(|((c, o), _)| *c == corner && *o == owner)
            .map(|&(_, g)| g)
    }
}

pub fn build_primal_map(disc: &Discretization, parts: &[DofPartition]) -> PrimalMap {
    let mut pairs: Vec<((usize, usize), usize)> = Vec::new();
    let mut next = 0usize;
    let mut local_to_global = Vec::with_capacity(parts.len());
    for part in parts {
        let mut locals = Vec::with_capacity(part.n_c());
        for &(corner, owner) in &part.c_corner_owner {
            let found = pairs
                .iter()
                .find(|((c, o), _)| *c == corner && *o == owner)
                .map(|&(_, g)| g);
            let g = match found {
                Some(g) => g,
                None => {
                    pairs.push(((corner, owner), next));
                    next += 1;
                    next - 1
                }
            };
            locals.push(g);
        }
        local_to_global.push(locals);
    }
    let _ = disc;
    PrimalMap {
        n_global: next,
        pairs,
        local_to_global,
    }
}

/// One signed constraint row: +1 on the patch-side dof, -1 on the
/// artificial copy held by the neighbor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JumpRow {
    /// (patch, extended dof) carrying +1.
    pub plus: (usize, usize),
    /// (patch, extended dof) carrying -1.
    pub minus: (usize, usize),
}

#[derive(Clone, Debug, Default)]
pub struct JumpMatrix {
    pub rows: Vec<JumpRow>,
}

impl JumpMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

/// Build the jump matrix: per interface and per direction, one row per
/// trace basis function whose patch-side dof is not primal. Corner pairs
/// are handled by the primal constraints instead.
pub fn build_jump_matrix(
    disc: &Discretization,
    exts: &[ExtendedSpace],
    parts: &[DofPartition],
) -> JumpMatrix {
    let mut rows = Vec::new();
    for iface in &disc.mp.topology.interfaces {
        for (k, side_k, l) in [
            (iface.k, iface.side_k, iface.l),
            (iface.l, iface.side_l, iface.k),
        ] {
            let ext_k = &exts[k];
            let own = ext_k.edge_trace(side_k);
            let block = exts[l]
                .traces
                .iter()
                .find(|b| b.neighbor == k)
                .expect("neighbor block exists");
            debug_assert_eq!(block.n(), own.n, "trace copy must mirror the owner");
            debug_assert_eq!(block.drop_first, own.drop_first);
            for a in 0..own.n {
                let e_k = ext_k.edge_dof(&own, a);
                if parts[k].class_of[e_k] == DofClass::Corner {
                    continue;
                }
                let e_l = block.offset + a;
                debug_assert_ne!(parts[l].class_of[e_l], DofClass::Corner);
                rows.push(JumpRow {
                    plus: (k, e_k),
                    minus: (l, e_l),
                });
            }
        }
    }
    JumpMatrix { rows }
}
