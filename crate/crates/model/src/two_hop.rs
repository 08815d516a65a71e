//! Two-hop angle identity of the stacked tensor products.
//!
//! With one channel per order and unit path weights, the order-1 branch of
//! the second stage at node `i` is
//! `(1/|N_i|) Σ_{j→i} (1/|N_j|) Σ_{m→j} v_m c1² cos(angle(e_mj, e_ji))`,
//! where `v_m` is the scalar fed into node `m`. One factor `c1` comes from each
//! of the two order-1 harmonics.

use comformer_core::geometry::angle_between;
use comformer_core::{CrystalGraph, GraphKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::ModelError;
use crate::inputs::GraphInputs;
use crate::layers::{EquivariantEdges, EquivariantLayer, EquivariantShape};
use crate::nn::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoHopReport {
    /// Order-1 branch of the layer per node.
    pub tp_values: Vec<f64>,
    /// Direct double sum over two-hop paths per node.
    pub oracle: Vec<f64>,
}

impl TwoHopReport {
    /// `max_i |tp_i − oracle_i| / max(1, |oracle_i|)`
    pub fn max_relative_error(&self) -> f64 {
        self.tp_values
            .iter()
            .zip(&self.oracle)
            .map(|(t, o)| (t - o).abs() / o.abs().max(1.0))
            .fold(0.0, f64::max)
    }
}

/// Runs a single-channel equivariant layer with unit weights on
/// `node_scalars` and compares its order-1 branch with the path sum.
pub fn two_hop_angle_check(graph: &CrystalGraph, c1: f64, node_scalars: &[f64]) -> Result<TwoHopReport, ModelError> {
    if graph.kind != GraphKind::Equivariant {
        return Err(ModelError::WrongGraphKind { expected: GraphKind::Equivariant, found: graph.kind });
    }
    let inp = GraphInputs::from_graph(graph)?;
    let n = inp.num_nodes();
    if node_scalars.len() != n {
        return Err(ModelError::ShapeMismatch { name: "node scalars".into(), expected: (n, 1), found: (node_scalars.len(), 1) });
    }
    let shape = EquivariantShape {
        hidden: 1,
        order0: 1,
        order12: 1,
        max_order: 1,
        c0: 1.0,
        c1,
        eps: 1e-5,
        momentum: 0.1,
    };
    let mut layer = EquivariantLayer::new(&shape, &mut ChaCha8Rng::seed_from_u64(0));
    layer.lift_scalar.fill(1.0);
    layer.lift_vector.fill(1.0);
    layer.contract_scalar.fill(1.0);
    layer.contract_vector.fill(1.0);
    let units = inp.units.as_deref().expect("equivariant inputs carry directions");
    let geo = EquivariantEdges { src: &inp.src, dst: &inp.dst, units, in_degree: &inp.in_degree };
    let state = layer.aggregate(&Matrix::from_column_slice(n, 1, node_scalars), geo);
    let tp_values = (0..n).map(|i| state.branches[1][(i, 0)]).collect();

    // oracle straight from the stored edge vectors
    let vecs: Vec<_> = graph.edges.iter().map(|e| e.vec.expect("checked by GraphInputs")).collect();
    let incoming = graph.incoming();
    let mut oracle = vec![0.0; n];
    for (i, into_i) in incoming.iter().enumerate() {
        let mut total = 0.0;
        for &e in into_i {
            let j = graph.edges[e].src;
            let mut inner = 0.0;
            for &f in &incoming[j] {
                let m = graph.edges[f].src;
                let theta = angle_between(&vecs[f], &vecs[e]).map_err(|_| ModelError::NonfiniteInput("edge vector"))?;
                inner += node_scalars[m] * c1 * c1 * theta.cos();
            }
            total += inner / incoming[j].len() as f64;
        }
        oracle[i] = total / into_i.len() as f64;
    }
    Ok(TwoHopReport { tp_values, oracle })
}
