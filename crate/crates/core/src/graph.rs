//! SE(3)-invariant and SO(3)-equivariant multi-edge crystal graphs.
//!
//! Edge `j' -> i` carries `e = p_i - (p_j + image·L)`, pointing from the
//! neighbor image to the center. Every node gets all periodic neighbors within
//! its k-th nearest distance (ties included) plus three designated lattice
//! self-edges whose images are the lattice representation coefficients.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{angle_between, Crystal, ImageCoeff, Vec3};
use crate::lattice_repr::{build_lattice_representation, LatticeReprError, LatticeRepresentation};

/// Neighbors at the k-th distance plus this slack are all included.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("k must be at least 1 (got {0})")]
    InvalidK(usize),
    #[error("graph is disconnected ({components} components at k = {k}); increase k or the cutoff radius")]
    Disconnected { components: usize, k: usize },
    #[error("graph kinds differ: {0:?} vs {1:?}")]
    KindMismatch(GraphKind, GraphKind),
    #[error(transparent)]
    LatticeRepr(#[from] LatticeReprError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Invariant,
    Equivariant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub image: ImageCoeff,
    pub dist: f64,
    /// Angles between the edge vector and `e1, e2, e3` (invariant graphs).
    pub angles: Option<[f64; 3]>,
    /// Edge vector `e_{j'i}` (equivariant graphs).
    pub vec: Option<Vec3>,
    /// `Some(m)` for the designated lattice self-edge `i -> i_{m+1}`.
    pub designated: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrystalGraph {
    pub kind: GraphKind,
    pub atomic_numbers: Vec<u8>,
    pub lattice_repr: LatticeRepresentation,
    pub edges: Vec<Edge>,
    pub per_node_radius: Vec<f64>,
}

impl CrystalGraph {
    pub fn num_nodes(&self) -> usize {
        self.atomic_numbers.len()
    }

    /// Edge indices grouped by destination node.
    pub fn incoming(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for (idx, e) in self.edges.iter().enumerate() {
            if e.dst < adj.len() {
                adj[e.dst].push(idx);
            }
        }
        adj
    }

    /// `designated[i][m]` is the index of node `i`'s m-th lattice self-edge.
    pub fn designated_edges(&self) -> Vec<[Option<usize>; 3]> {
        let mut out = vec![[None; 3]; self.num_nodes()];
        for (idx, e) in self.edges.iter().enumerate() {
            if let Some(m) = e.designated {
                if e.dst < out.len() && (m as usize) < 3 {
                    out[e.dst][m as usize] = Some(idx);
                }
            }
        }
        out
    }

    /// Edge angles, recomputed from `vec` for equivariant graphs.
    pub fn edge_angles(&self, edge: &Edge) -> [f64; 3] {
        match (edge.angles, edge.vec) {
            (Some(a), _) => a,
            (None, Some(v)) => angles_to(&v, &self.lattice_repr),
            (None, None) => [f64::NAN; 3],
        }
    }
}

fn angles_to(v: &Vec3, repr: &LatticeRepresentation) -> [f64; 3] {
    std::array::from_fn(|m| angle_between(v, &repr.vectors[m]).unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub src: usize,
    pub image: ImageCoeff,
    /// `p_i - (p_src + image·L)`
    pub vec: Vec3,
    pub dist: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    pub radius: f64,
    pub neighbors: Vec<Neighbor>,
}

/// Atoms binned on a fractional grid of the cell, used for radius queries
/// that may span any number of periodic images.
struct CellList {
    dims: [usize; 3],
    bins: Vec<Vec<usize>>,
    // wrapped Cartesian positions and the integer shift removed from each atom
    wrapped: Vec<Vec3>,
    shift: Vec<ImageCoeff>,
}

impl CellList {
    fn new(crystal: &Crystal, bin_size: f64) -> Self {
        let lat = &crystal.lattice;
        let widths = lat.frac_widths();
        let mut dims = [1usize; 3];
        for a in 0..3 {
            let height = 1.0 / widths[a];
            dims[a] = ((height / bin_size).floor() as usize).clamp(1, 64);
        }
        let mut bins = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        let mut wrapped = Vec::with_capacity(crystal.len());
        let mut shift = Vec::with_capacity(crystal.len());
        for (j, p) in crystal.positions.iter().enumerate() {
            let f = lat.cart_to_frac(p);
            let mut s = [0i32; 3];
            let mut idx = [0usize; 3];
            for a in 0..3 {
                let mut fl = f[a].floor();
                let mut w = f[a] - fl;
                if w >= 1.0 {
                    w -= 1.0;
                    fl += 1.0;
                }
                s[a] = fl as i32;
                idx[a] = ((w * dims[a] as f64) as usize).min(dims[a] - 1);
            }
            let k = ImageCoeff(s);
            shift.push(k);
            wrapped.push(p - lat.image_vector(k));
            bins[(idx[0] * dims[1] + idx[1]) * dims[2] + idx[2]].push(j);
        }
        CellList {
            dims,
            bins,
            wrapped,
            shift,
        }
    }

    /// Every `(j, image)` within `radius` of `center` except `(center_idx, 0)`.
    fn query(&self, crystal: &Crystal, center_idx: usize, radius: f64, out: &mut Vec<Neighbor>) {
        out.clear();
        let lat = &crystal.lattice;
        let center = crystal.positions[center_idx];
        let f = lat.cart_to_frac(&center);
        let widths = lat.frac_widths();
        let mut lo = [0i64; 3];
        let mut hi = [0i64; 3];
        for a in 0..3 {
            let g = self.dims[a] as f64;
            lo[a] = ((f[a] - radius * widths[a]) * g).floor() as i64;
            hi[a] = ((f[a] + radius * widths[a]) * g).floor() as i64;
        }
        let r2 = radius * radius;
        let dims = self.dims.map(|d| d as i64);
        for b0 in lo[0]..=hi[0] {
            let (c0, m0) = (b0.rem_euclid(dims[0]), b0.div_euclid(dims[0]));
            for b1 in lo[1]..=hi[1] {
                let (c1, m1) = (b1.rem_euclid(dims[1]), b1.div_euclid(dims[1]));
                for b2 in lo[2]..=hi[2] {
                    let (c2, m2) = (b2.rem_euclid(dims[2]), b2.div_euclid(dims[2]));
                    let bin = &self.bins[((c0 * dims[1] + c1) * dims[2] + c2) as usize];
                    if bin.is_empty() {
                        continue;
                    }
                    let m = ImageCoeff([m0 as i32, m1 as i32, m2 as i32]);
                    let offset = lat.image_vector(m);
                    for &j in bin {
                        let image = m - self.shift[j];
                        if j == center_idx && image.is_zero() {
                            continue;
                        }
                        let vec = center - (self.wrapped[j] + offset);
                        let d2 = vec.norm_squared();
                        if d2 <= r2 {
                            out.push(Neighbor {
                                src: j,
                                image,
                                vec,
                                dist: d2.sqrt(),
                            });
                        }
                    }
                }
            }
        }
    }
}

fn sort_neighbors(list: &mut [Neighbor]) {
    list.sort_by(|a, b| a.dist.total_cmp(&b.dist).then(a.src.cmp(&b.src)).then(a.image.cmp(&b.image)));
    let mut start = 0;
    while start < list.len() {
        let limit = list[start].dist + TIE_TOL;
        let mut end = start + 1;
        while end < list.len() && list[end].dist <= limit {
            end += 1;
        }
        list[start..end].sort_by(|a, b| a.src.cmp(&b.src).then(a.image.cmp(&b.image)));
        start = end;
    }
}

/// Per-node periodic neighbor lists with radius equal to the k-th nearest
/// distance. Ties at the radius are all included; the search is exhaustive.
pub fn periodic_knn(crystal: &Crystal, k: usize) -> Result<Vec<NeighborList>, GraphError> {
    if k < 1 {
        return Err(GraphError::InvalidK(k));
    }
    let n = crystal.len();
    let volume_per_atom = crystal.lattice.volume() / n as f64;
    let estimate = (3.0 * k as f64 * volume_per_atom / (4.0 * std::f64::consts::PI)).cbrt() * 1.2;
    let cells = CellList::new(crystal, estimate);

    let mut out = Vec::with_capacity(n);
    let mut buf = Vec::new();
    for i in 0..n {
        let mut radius = estimate;
        loop {
            cells.query(crystal, i, radius, &mut buf);
            if buf.len() >= k {
                let mut dists: Vec<f64> = buf.iter().map(|nb| nb.dist).collect();
                let (_, kth, _) = dists.select_nth_unstable_by(k - 1, f64::total_cmp);
                let r = *kth;
                if r + 1e-6 <= radius {
                    let mut neighbors: Vec<Neighbor> = buf.drain(..).filter(|nb| nb.dist <= r + TIE_TOL).collect();
                    sort_neighbors(&mut neighbors);
                    out.push(NeighborList { radius: r, neighbors });
                    break;
                }
            }
            radius *= 1.5;
        }
    }
    Ok(out)
}

/// Builds a graph without the connectivity check.
pub fn build_graph_unchecked(crystal: &Crystal, k: usize, kind: GraphKind) -> Result<CrystalGraph, GraphError> {
    let repr = build_lattice_representation(&crystal.lattice)?;
    let lists = periodic_knn(crystal, k)?;
    let n = crystal.len();
    let mut edges = Vec::with_capacity(lists.iter().map(|l| l.neighbors.len() + 3).sum());
    let mut per_node_radius = Vec::with_capacity(n);

    let make = |src: usize, dst: usize, image: ImageCoeff, vec: Vec3, dist: f64, designated: Option<u8>| {
        let (angles, vec) = match kind {
            GraphKind::Invariant => (Some(angles_to(&vec, &repr)), None),
            GraphKind::Equivariant => (None, Some(vec)),
        };
        Edge {
            src,
            dst,
            image,
            dist,
            angles,
            vec,
            designated,
        }
    };

    for (i, list) in lists.iter().enumerate() {
        per_node_radius.push(list.radius);
        for nb in &list.neighbors {
            edges.push(make(nb.src, i, nb.image, nb.vec, nb.dist, None));
        }
        for m in 0..3 {
            let v = -repr.vectors[m];
            edges.push(make(i, i, repr.coeffs[m], v, v.norm(), Some(m as u8)));
        }
    }

    Ok(CrystalGraph {
        kind,
        atomic_numbers: crystal.species.clone(),
        lattice_repr: repr,
        edges,
        per_node_radius,
    })
}

pub fn build_graph(crystal: &Crystal, k: usize, kind: GraphKind) -> Result<CrystalGraph, GraphError> {
    let g = build_graph_unchecked(crystal, k, kind)?;
    let components = connected_components(&g);
    if components > 1 {
        return Err(GraphError::Disconnected { components, k });
    }
    Ok(g)
}

pub fn build_invariant_graph(crystal: &Crystal, k: usize) -> Result<CrystalGraph, GraphError> {
    build_graph(crystal, k, GraphKind::Invariant)
}

pub fn build_equivariant_graph(crystal: &Crystal, k: usize) -> Result<CrystalGraph, GraphError> {
    build_graph(crystal, k, GraphKind::Equivariant)
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Number of connected components with edges treated as undirected.
pub fn connected_components(graph: &CrystalGraph) -> usize {
    let n = graph.num_nodes();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut components = n;
    for e in &graph.edges {
        if e.src >= n || e.dst >= n {
            continue;
        }
        let (a, b) = (find(&mut parent, e.src), find(&mut parent, e.dst));
        if a != b {
            parent[a] = b;
            components -= 1;
        }
    }
    components
}

pub fn is_strongly_connected(graph: &CrystalGraph) -> bool {
    connected_components(graph) <= 1
}

#[derive(Debug, Clone, Copy)]
struct Feature {
    designated: Option<u8>,
    dist: f64,
    angles: [f64; 3],
}

impl Feature {
    fn deviation(&self, o: &Feature) -> f64 {
        if self.designated != o.designated {
            return f64::INFINITY;
        }
        let mut d = (self.dist - o.dist).abs();
        for m in 0..3 {
            d = d.max((self.angles[m] - o.angles[m]).abs());
        }
        if d.is_nan() {
            f64::INFINITY
        } else {
            d
        }
    }
}

fn node_features(g: &CrystalGraph) -> Vec<Vec<Feature>> {
    let mut out = vec![Vec::new(); g.num_nodes()];
    for e in &g.edges {
        if e.dst < out.len() {
            out[e.dst].push(Feature {
                designated: e.designated,
                dist: e.dist,
                angles: g.edge_angles(e),
            });
        }
    }
    for list in &mut out {
        list.sort_by(|a, b| a.dist.total_cmp(&b.dist));
    }
    out
}

/// Largest feature difference between index-matched nodes after pairing each
/// node's edges by nearest feature tuple. Infinite when node counts, species
/// multisets or per-node edge counts differ.
pub fn graph_deviation(g1: &CrystalGraph, g2: &CrystalGraph) -> Result<f64, GraphError> {
    if g1.kind != g2.kind {
        return Err(GraphError::KindMismatch(g1.kind, g2.kind));
    }
    if g1.num_nodes() != g2.num_nodes() {
        return Ok(f64::INFINITY);
    }
    let mut s1 = g1.atomic_numbers.clone();
    let mut s2 = g2.atomic_numbers.clone();
    s1.sort_unstable();
    s2.sort_unstable();
    if s1 != s2 {
        return Ok(f64::INFINITY);
    }
    let f1 = node_features(g1);
    let f2 = node_features(g2);
    let mut worst: f64 = 0.0;
    for (a, b) in f1.iter().zip(&f2) {
        if a.len() != b.len() {
            return Ok(f64::INFINITY);
        }
        let mut used = vec![false; b.len()];
        for fa in a {
            let mut best = f64::INFINITY;
            let mut best_idx = None;
            for (j, fb) in b.iter().enumerate() {
                if used[j] {
                    continue;
                }
                let d = fa.deviation(fb);
                if d < best {
                    best = d;
                    best_idx = Some(j);
                }
            }
            match best_idx {
                Some(j) => used[j] = true,
                None => return Ok(f64::INFINITY),
            }
            worst = worst.max(best);
        }
    }
    Ok(worst)
}

/// Fingerprint equality: same nodes and species, and per node the same
/// multiset of `(dist, angles)` within `tol`.
pub fn compare_graphs(g1: &CrystalGraph, g2: &CrystalGraph, tol: f64) -> Result<bool, GraphError> {
    Ok(graph_deviation(g1, g2)? <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Lattice;
    use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

    fn cubic_one() -> Crystal {
        Crystal::new(Lattice::cubic(1.0).unwrap(), vec![Vec3::zeros()], vec![84]).unwrap()
    }

    /// Brute-force neighbor distances over a fixed image box.
    fn brute_distances(c: &Crystal, i: usize, reach: i32) -> Vec<f64> {
        let mut d = Vec::new();
        for j in 0..c.len() {
            for a in -reach..=reach {
                for b in -reach..=reach {
                    for e in -reach..=reach {
                        let k = ImageCoeff::new(a, b, e);
                        if j == i && k.is_zero() {
                            continue;
                        }
                        d.push((c.positions[j] + c.lattice.image_vector(k) - c.positions[i]).norm());
                    }
                }
            }
        }
        d.sort_by(f64::total_cmp);
        d
    }

    #[test]
    fn knn_cubic_six_and_seven() {
        let c = cubic_one();
        let l6 = periodic_knn(&c, 6).unwrap();
        assert_eq!(l6[0].radius, 1.0);
        assert_eq!(l6[0].neighbors.len(), 6);
        let l7 = periodic_knn(&c, 7).unwrap();
        assert!((l7[0].radius - SQRT_2).abs() < 1e-15);
        assert_eq!(l7[0].neighbors.len(), 18);
        let oracle = brute_distances(&c, 0, 3);
        assert_eq!(oracle.iter().filter(|&&d| d <= SQRT_2 + 1e-9).count(), 18);
    }

    #[test]
    fn knn_two_atoms() {
        let l = Lattice::new([[2.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 5.0]]).unwrap();
        let c = Crystal::new(l, vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)], vec![1, 1]).unwrap();
        let lists = periodic_knn(&c, 1).unwrap();
        for (i, list) in lists.iter().enumerate() {
            assert_eq!(list.radius, 1.0);
            // the other atom appears twice at distance 1 (both sides along x)
            assert!(list.neighbors.iter().all(|nb| nb.src == 1 - i && nb.dist == 1.0));
        }
    }

    #[test]
    fn knn_matches_brute_force() {
        let l = Lattice::new([[3.1, 0.2, -0.4], [0.7, 2.6, 0.3], [-0.5, 0.9, 4.2]]).unwrap();
        let frac = [Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.6, 0.5, 0.9), Vec3::new(0.35, 0.8, 0.05)];
        let c = Crystal::from_fractional(l, &frac, vec![8, 14, 26]).unwrap();
        for k in [1, 5, 12, 25] {
            let lists = periodic_knn(&c, k).unwrap();
            for (i, list) in lists.iter().enumerate() {
                let oracle = brute_distances(&c, i, 5);
                assert!((list.radius - oracle[k - 1]).abs() < 1e-12);
                let expect = oracle.iter().filter(|&&d| d <= oracle[k - 1] + TIE_TOL).count();
                assert_eq!(list.neighbors.len(), expect);
            }
        }
    }

    #[test]
    fn invalid_k() {
        assert_eq!(periodic_knn(&cubic_one(), 0).unwrap_err(), GraphError::InvalidK(0));
    }

    #[test]
    fn cubic_invariant_graph() {
        let g = build_invariant_graph(&cubic_one(), 6).unwrap();
        assert_eq!(g.edges.len(), 9);
        let self_x = g.edges.iter().find(|e| e.designated == Some(0)).unwrap();
        assert_eq!(self_x.image, ImageCoeff::new(1, 0, 0));
        assert_eq!(self_x.dist, 1.0);
        let a = self_x.angles.unwrap();
        assert!((a[0] - PI).abs() < 1e-15 && (a[1] - FRAC_PI_2).abs() < 1e-15 && (a[2] - FRAC_PI_2).abs() < 1e-15);

        let from_z = g.edges.iter().find(|e| e.designated.is_none() && e.image == ImageCoeff::new(0, 0, 1)).unwrap();
        let a = from_z.angles.unwrap();
        assert!((a[0] - FRAC_PI_2).abs() < 1e-15 && (a[1] - FRAC_PI_2).abs() < 1e-15 && (a[2] - PI).abs() < 1e-15);
    }

    #[test]
    fn cubic_equivariant_graph() {
        let c = cubic_one();
        let g = build_equivariant_graph(&c, 6).unwrap();
        let gi = build_invariant_graph(&c, 6).unwrap();
        let e = g
            .edges
            .iter()
            .find(|e| e.designated.is_none() && e.image == ImageCoeff::new(1, 0, 0))
            .unwrap();
        assert_eq!(e.vec.unwrap(), Vec3::new(-1.0, 0.0, 0.0));
        assert_eq!(e.dist, 1.0);
        let topo = |g: &CrystalGraph| g.edges.iter().map(|e| (e.src, e.dst, e.image, e.designated)).collect::<Vec<_>>();
        assert_eq!(topo(&g), topo(&gi));
    }

    #[test]
    fn angles_match_definition() {
        let l = Lattice::new([[3.1, 0.2, -0.4], [0.7, 2.6, 0.3], [-0.5, 0.9, 4.2]]).unwrap();
        let frac = [Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.6, 0.5, 0.9)];
        let c = Crystal::from_fractional(l, &frac, vec![8, 14]).unwrap();
        let g = build_invariant_graph(&c, 8).unwrap();
        for e in &g.edges {
            let v = c.positions[e.dst] - c.positions[e.src] - c.lattice.image_vector(e.image);
            assert!((v.norm() - e.dist).abs() < 1e-12);
            for m in 0..3 {
                let expect = angle_between(&v, &g.lattice_repr.vectors[m]).unwrap();
                assert!((expect - e.angles.unwrap()[m]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn compare_identity_and_kind() {
        let c = cubic_one();
        let g = build_invariant_graph(&c, 6).unwrap();
        assert!(compare_graphs(&g, &g, 0.0).unwrap());
        let ge = build_equivariant_graph(&c, 6).unwrap();
        assert!(matches!(compare_graphs(&g, &ge, 1e-9), Err(GraphError::KindMismatch(..))));
        assert!(compare_graphs(&ge, &ge, 0.0).unwrap());
    }

    #[test]
    fn single_node_is_connected() {
        let g = build_invariant_graph(&cubic_one(), 1).unwrap();
        assert!(is_strongly_connected(&g));
    }
}
