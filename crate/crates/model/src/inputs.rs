//! Flattened, validated view of a crystal graph for the dense layers.

use comformer_core::{CrystalGraph, GraphKind, Vec3};

use crate::error::ModelError;

#[derive(Debug, Clone, PartialEq)]
pub struct GraphInputs {
    pub kind: GraphKind,
    pub species: Vec<u8>,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub dist: Vec<f64>,
    /// Edge angles to the lattice representation (invariant graphs).
    pub angles: Option<Vec<[f64; 3]>>,
    /// Unit edge directions (equivariant graphs).
    pub units: Option<Vec<Vec3>>,
    /// Edge index of each node's three designated self-edges.
    pub designated: Vec<[usize; 3]>,
    /// Incoming edge count per node, designated self-edges included.
    pub in_degree: Vec<usize>,
}

impl GraphInputs {
    pub fn from_graph(graph: &CrystalGraph) -> Result<Self, ModelError> {
        let n = graph.num_nodes();
        if n == 0 {
            return Err(ModelError::EmptyGraph);
        }
        let m = graph.edges.len();
        let mut out = GraphInputs {
            kind: graph.kind,
            species: graph.atomic_numbers.clone(),
            src: Vec::with_capacity(m),
            dst: Vec::with_capacity(m),
            dist: Vec::with_capacity(m),
            angles: None,
            units: None,
            designated: Vec::with_capacity(n),
            in_degree: vec![0; n],
        };
        let mut angles = Vec::new();
        let mut units = Vec::new();
        for (idx, e) in graph.edges.iter().enumerate() {
            if e.src >= n || e.dst >= n {
                return Err(ModelError::Format(format!("edge {idx} references a missing node")));
            }
            if !(e.dist.is_finite() && e.dist > 0.0) {
                return Err(ModelError::NonpositiveDistance { edge: idx, dist: e.dist });
            }
            out.src.push(e.src);
            out.dst.push(e.dst);
            out.dist.push(e.dist);
            out.in_degree[e.dst] += 1;
            match graph.kind {
                GraphKind::Invariant => {
                    let a = e.angles.ok_or(ModelError::MissingEdgeData(idx, "angle"))?;
                    if a.iter().any(|x| !x.is_finite()) {
                        return Err(ModelError::NonfiniteInput("edge angles"));
                    }
                    angles.push(a);
                }
                GraphKind::Equivariant => {
                    let v = e.vec.ok_or(ModelError::MissingEdgeData(idx, "vector"))?;
                    let norm = v.norm();
                    if !(norm.is_finite() && norm > 0.0) {
                        return Err(ModelError::NonpositiveDistance { edge: idx, dist: norm });
                    }
                    units.push(v / norm);
                }
            }
        }
        for (i, d) in graph.designated_edges().into_iter().enumerate() {
            match d {
                [Some(a), Some(b), Some(c)] => out.designated.push([a, b, c]),
                _ => return Err(ModelError::MissingSelfEdges(i)),
            }
        }
        match graph.kind {
            GraphKind::Invariant => out.angles = Some(angles),
            GraphKind::Equivariant => out.units = Some(units),
        }
        Ok(out)
    }

    pub fn num_nodes(&self) -> usize {
        self.species.len()
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use comformer_core::graph::{build_equivariant_graph, build_invariant_graph};
    use comformer_core::{Crystal, Lattice};

    fn po() -> Crystal {
        Crystal::new(Lattice::cubic(3.35).unwrap(), vec![Vec3::zeros()], vec![84]).unwrap()
    }

    #[test]
    fn flattens_both_kinds() {
        let g = build_invariant_graph(&po(), 6).unwrap();
        let inp = GraphInputs::from_graph(&g).unwrap();
        assert_eq!(inp.num_edges(), 9);
        assert_eq!(inp.in_degree, vec![9]);
        assert!(inp.angles.is_some() && inp.units.is_none());
        let ge = build_equivariant_graph(&po(), 6).unwrap();
        let inp = GraphInputs::from_graph(&ge).unwrap();
        assert!(inp.units.unwrap().iter().all(|u| (u.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn rejects_missing_self_edges() {
        let mut g = build_invariant_graph(&po(), 6).unwrap();
        g.edges.retain(|e| e.designated != Some(1));
        assert!(matches!(GraphInputs::from_graph(&g), Err(ModelError::MissingSelfEdges(0))));
    }

    #[test]
    fn rejects_nonpositive_distance() {
        let mut g = build_invariant_graph(&po(), 6).unwrap();
        g.edges[0].dist = 0.0;
        assert!(matches!(GraphInputs::from_graph(&g), Err(ModelError::NonpositiveDistance { edge: 0, .. })));
    }
}
