//! Rebuilds a crystal from its graph alone and scores the result against the
//! original structure.
//!
//! The invariant path recovers `e1, e2, e3` in a canonical frame (`e1` on +x,
//! `e2` in the upper xy half-plane, `e3` right-handed) from node 0's designated
//! self-edges, then places every node by breadth-first traversal, solving a 3×3
//! system per edge. Redundant edges must agree modulo the lattice.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{kabsch_align, Crystal, GeometryError, Lattice, Mat3, Vec3};
use crate::graph::{CrystalGraph, Edge, GraphKind};
use crate::lattice_repr::build_lattice_representation;

/// Alternative placements of the same node must agree to this distance (Å).
pub const CONSISTENCY_TOL: f64 = 1e-8;
/// Default RMSD threshold for a successful round trip (Å).
pub const SUCCESS_RMSD: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconstructError {
    #[error("node {0} lacks its three designated lattice self-edges")]
    MissingSelfEdges(usize),
    #[error("recorded lattice lengths and angles admit no real right-handed basis")]
    LeftHandedSolution,
    #[error("lattice basis is singular")]
    SingularBasis,
    #[error("graph is disconnected: node {0} is unreachable from node 0")]
    Disconnected(usize),
    #[error("edge {edge} places node {node} {deviation:e} Å away from its other placement")]
    InconsistentPlacement { edge: usize, node: usize, deviation: f64 },
    #[error("expected a {expected:?} graph")]
    KindMismatch { expected: GraphKind },
    #[error("species differ at atom {0}")]
    SpeciesMismatch(usize),
    #[error("structures have {0} and {1} atoms")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub rmsd: f64,
    pub max_pointwise: f64,
    pub lattice_mismatch: f64,
    pub success: bool,
}

fn node0_self_edges(graph: &CrystalGraph) -> Result<[&Edge; 3], ReconstructError> {
    let mut out = [None; 3];
    for e in &graph.edges {
        if e.dst == 0 && e.src == 0 {
            if let Some(m) = e.designated {
                if (m as usize) < 3 {
                    out[m as usize] = Some(e);
                }
            }
        }
    }
    match out {
        [Some(a), Some(b), Some(c)] => Ok([a, b, c]),
        _ => Err(ReconstructError::MissingSelfEdges(0)),
    }
}

/// `e1, e2, e3` in the canonical frame, recovered from node 0's self-edge
/// lengths and angles. The self-edge for `e_m` carries `-e_m`, so its angle
/// to `e_n` is `π - angle(e_m, e_n)`.
pub fn rebuild_lattice_from_graph(graph: &CrystalGraph) -> Result<[Vec3; 3], ReconstructError> {
    if graph.kind != GraphKind::Invariant {
        return Err(ReconstructError::KindMismatch {
            expected: GraphKind::Invariant,
        });
    }
    let selfs = node0_self_edges(graph)?;
    let len: [f64; 3] = std::array::from_fn(|m| selfs[m].dist);
    let angles: [[f64; 3]; 3] = std::array::from_fn(|m| selfs[m].angles.unwrap_or([f64::NAN; 3]));
    let cos = |m: usize, n: usize| -0.5 * (angles[m][n].cos() + angles[n][m].cos());
    let (c12, c13, c23) = (cos(0, 1), cos(0, 2), cos(1, 2));
    if ![c12, c13, c23].iter().all(|c| c.is_finite()) {
        return Err(ReconstructError::SingularBasis);
    }

    let s12 = (1.0 - c12 * c12).max(0.0).sqrt();
    if s12 < 1e-12 {
        return Err(ReconstructError::SingularBasis);
    }
    let a1 = Vec3::new(len[0], 0.0, 0.0);
    let a2 = Vec3::new(len[1] * c12, len[1] * s12, 0.0);
    let x = len[2] * c13;
    let y = (len[2] * c23 - x * c12) / s12;
    let z2 = len[2] * len[2] - x * x - y * y;
    if z2 < -1e-12 * len[2] * len[2] {
        return Err(ReconstructError::LeftHandedSolution);
    }
    let z = z2.max(0.0).sqrt();
    if z <= 1e-12 * len[2] {
        return Err(ReconstructError::SingularBasis);
    }
    Ok([a1, a2, Vec3::new(x, y, z)])
}

/// Relative position `p_center - p_neighbor_image` from invariant edge
/// features: the unique `p` with `p·e_m = dist·|e_m|·cos θ_m`.
pub fn place_neighbor(dist: f64, angles: &[f64; 3], basis: &[Vec3; 3]) -> Result<Vec3, ReconstructError> {
    let m = Mat3::from_rows(&[basis[0].transpose(), basis[1].transpose(), basis[2].transpose()]);
    let rhs = Vec3::from_fn(|i, _| dist * basis[i].norm() * angles[i].cos());
    let lu = m.lu();
    let p = lu.solve(&rhs).ok_or(ReconstructError::SingularBasis)?;
    if p.iter().all(|x| x.is_finite()) {
        Ok(p)
    } else {
        Err(ReconstructError::SingularBasis)
    }
}

fn reduce(lattice: &Lattice, v: &Vec3) -> Vec3 {
    let f = lattice.cart_to_frac(v);
    lattice.frac_to_cart(&f.map(|x| x - x.floor()))
}

fn minimal_image(lattice: &Lattice, v: &Vec3) -> Vec3 {
    let f = lattice.cart_to_frac(v);
    let base = v - lattice.frac_to_cart(&f.map(|x| x.round()));
    let mut best = base;
    for a in -1..=1 {
        for b in -1..=1 {
            for c in -1..=1 {
                let cand = base - lattice.frac_to_cart(&Vec3::new(a as f64, b as f64, c as f64));
                if cand.norm_squared() < best.norm_squared() {
                    best = cand;
                }
            }
        }
    }
    best
}

/// Breadth-first placement from node 0 at the origin. Each edge contributes
/// `p_dst ≡ p_src + rel[edge]` modulo the lattice, in either direction.
fn place_all(graph: &CrystalGraph, lattice: &Lattice, rel: &[Vec3]) -> Result<Vec<Vec3>, ReconstructError> {
    let n = graph.num_nodes();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (idx, e) in graph.edges.iter().enumerate() {
        if e.src != e.dst {
            adj[e.dst].push((e.src, idx));
            adj[e.src].push((e.dst, idx));
        }
    }
    for list in &mut adj {
        list.sort_unstable();
    }

    let mut pos: Vec<Option<Vec3>> = vec![None; n];
    pos[0] = Some(Vec3::zeros());
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        let pu = pos[u].expect("queued nodes are placed");
        for &(v, idx) in &adj[u] {
            if pos[v].is_some() {
                continue;
            }
            let e = &graph.edges[idx];
            let pv = if e.dst == v { pu + rel[idx] } else { pu - rel[idx] };
            pos[v] = Some(reduce(lattice, &pv));
            queue.push_back(v);
        }
    }
    let positions: Vec<Vec3> = pos
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.ok_or(ReconstructError::Disconnected(i)))
        .collect::<Result<_, _>>()?;

    for (idx, e) in graph.edges.iter().enumerate() {
        let miss = positions[e.dst] - positions[e.src] - rel[idx];
        let deviation = minimal_image(lattice, &miss).norm();
        if !(deviation <= CONSISTENCY_TOL) {
            return Err(ReconstructError::InconsistentPlacement {
                edge: idx,
                node: e.dst,
                deviation,
            });
        }
    }
    Ok(positions)
}

pub fn reconstruct_crystal(graph: &CrystalGraph) -> Result<Crystal, ReconstructError> {
    let basis = rebuild_lattice_from_graph(graph)?;
    let lattice = Lattice::from_rows(basis[0], basis[1], basis[2]).map_err(|_| ReconstructError::SingularBasis)?;
    let rel = graph
        .edges
        .iter()
        .map(|e| place_neighbor(e.dist, &e.angles.unwrap_or([f64::NAN; 3]), &basis))
        .collect::<Result<Vec<_>, _>>()?;
    let positions = place_all(graph, &lattice, &rel)?;
    Ok(Crystal::new(lattice, positions, graph.atomic_numbers.clone())?)
}

/// Same traversal, but edge vectors are used directly and the basis is the
/// negated designated self-edge vectors of node 0.
pub fn reconstruct_crystal_equivariant(graph: &CrystalGraph) -> Result<Crystal, ReconstructError> {
    if graph.kind != GraphKind::Equivariant {
        return Err(ReconstructError::KindMismatch {
            expected: GraphKind::Equivariant,
        });
    }
    let selfs = node0_self_edges(graph)?;
    let basis: [Vec3; 3] = std::array::from_fn(|m| -selfs[m].vec.unwrap_or(Vec3::repeat(f64::NAN)));
    let lattice = Lattice::from_rows(basis[0], basis[1], basis[2]).map_err(|_| ReconstructError::SingularBasis)?;
    let rel: Vec<Vec3> = graph
        .edges
        .iter()
        .map(|e| e.vec.unwrap_or(Vec3::repeat(f64::NAN)))
        .collect();
    let positions = place_all(graph, &lattice, &rel)?;
    Ok(Crystal::new(lattice, positions, graph.atomic_numbers.clone())?)
}

/// Scores `reconstructed` against `original` with atoms matched by index.
///
/// Both structures are expressed relative to their atom 0. The reconstructed
/// basis (its lattice rows, or its lattice representation when that fits
/// better) is rotated onto the original's lattice representation by a proper
/// rotation, and each per-atom difference is taken to its nearest periodic image.
pub fn match_structures(original: &Crystal, reconstructed: &Crystal) -> Result<ReconstructionReport, ReconstructError> {
    if original.len() != reconstructed.len() {
        return Err(ReconstructError::LengthMismatch(original.len(), reconstructed.len()));
    }
    if let Some(i) = (0..original.len()).find(|&i| original.species[i] != reconstructed.species[i]) {
        return Err(ReconstructError::SpeciesMismatch(i));
    }
    let target = build_lattice_representation(&original.lattice)
        .map_err(|_| ReconstructError::SingularBasis)?
        .vectors;
    let mut candidates = vec![reconstructed.lattice.rows()];
    if let Ok(r) = build_lattice_representation(&reconstructed.lattice) {
        if r.vectors != candidates[0] {
            candidates.push(r.vectors);
        }
    }

    let origin_o = original.positions[0];
    let origin_r = reconstructed.positions[0];
    let mut best: Option<ReconstructionReport> = None;
    for basis in candidates {
        let x = [Vec3::zeros(), basis[0], basis[1], basis[2]];
        let y = [Vec3::zeros(), target[0], target[1], target[2]];
        let align = kabsch_align(&x, &y)?;
        let rot = align.rotation;
        let lattice_mismatch = (0..3)
            .map(|m| (rot * basis[m] - target[m]).amax())
            .fold(0.0, f64::max);
        let mut sq = 0.0;
        let mut max_pointwise: f64 = 0.0;
        for (p, q) in original.positions.iter().zip(&reconstructed.positions) {
            let delta = rot * (q - origin_r) - (p - origin_o);
            let d = minimal_image(&original.lattice, &delta).norm();
            sq += d * d;
            max_pointwise = max_pointwise.max(d);
        }
        let rmsd = (sq / original.len() as f64).sqrt();
        let report = ReconstructionReport {
            rmsd,
            max_pointwise,
            lattice_mismatch,
            success: rmsd < SUCCESS_RMSD && lattice_mismatch < SUCCESS_RMSD,
        };
        if best.is_none_or(|b| (report.rmsd, report.lattice_mismatch) < (b.rmsd, b.lattice_mismatch)) {
            best = Some(report);
        }
    }
    Ok(best.expect("at least one candidate basis"))
}
