use rand::Rng;

use crate::nn::{gather_rows, hcat, join, scatter_add_rows, sigmoid, softplus, BatchNorm, Linear, Matrix, Mlp, NormMode, VisitParams};

/// Node-wise attention: the query is the center alone, keys and values
/// concatenate center, neighbor and edge projections.
///
/// `f_i' = softplus(f_i + BN(Σ_j sigmoid(BN(α_ji)) ∘ σ_V(v_ji)))` with
/// `α_ji = q_i ∘ σ_K(k_ji) / √d`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub edge: Linear,
    pub key_mlp: Mlp,
    pub value_mlp: Mlp,
    pub attn_norm: BatchNorm,
    pub msg_norm: BatchNorm,
}

impl NodeLayer {
    pub fn new<R: Rng + ?Sized>(dim: usize, eps: f64, momentum: f64, rng: &mut R) -> Self {
        NodeLayer {
            query: Linear::new(dim, dim, rng),
            key: Linear::new(dim, dim, rng),
            value: Linear::new(dim, dim, rng),
            edge: Linear::new(dim, dim, rng),
            key_mlp: Mlp::new(3 * dim, dim, dim, rng),
            value_mlp: Mlp::new(3 * dim, dim, dim, rng),
            attn_norm: BatchNorm::new(dim, eps, momentum),
            msg_norm: BatchNorm::new(dim, eps, momentum),
        }
    }

    pub fn dim(&self) -> usize {
        self.query.output_dim()
    }

    /// Messages for every edge `src -> dst`, before aggregation.
    pub fn messages(&self, nodes: &Matrix, edges: &Matrix, src: &[usize], dst: &[usize], mode: &mut NormMode) -> Matrix {
        let d = self.dim();
        let q = gather_rows(&self.query.forward(nodes), dst);
        let kn = self.key.forward(nodes);
        let vn = self.value.forward(nodes);
        let ee = self.edge.forward(edges);
        let k = hcat(&[&gather_rows(&kn, dst), &gather_rows(&kn, src), &ee]);
        let v = hcat(&[&gather_rows(&vn, dst), &gather_rows(&vn, src), &ee]);
        let alpha = q.component_mul(&self.key_mlp.forward(&k)) / (d as f64).sqrt();
        let gate = self.attn_norm.forward(&alpha, mode).map(sigmoid);
        gate.component_mul(&self.value_mlp.forward(&v))
    }

    pub fn forward(&self, nodes: &Matrix, edges: &Matrix, src: &[usize], dst: &[usize], mode: &mut NormMode) -> Matrix {
        let msg = scatter_add_rows(&self.messages(nodes, edges, src, dst, mode), dst, nodes.nrows());
        (nodes + self.msg_norm.forward(&msg, mode)).map(softplus)
    }

    pub fn batch_norms_mut(&mut self) -> Vec<&mut BatchNorm> {
        vec![&mut self.attn_norm, &mut self.msg_norm]
    }

    pub fn set_zero(&mut self) {
        for l in [&mut self.query, &mut self.key, &mut self.value, &mut self.edge] {
            l.set_zero();
        }
        self.key_mlp.set_zero();
        self.value_mlp.set_zero();
    }
}

impl VisitParams for NodeLayer {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        self.query.visit(&join(prefix, "query"), f);
        self.key.visit(&join(prefix, "key"), f);
        self.value.visit(&join(prefix, "value"), f);
        self.edge.visit(&join(prefix, "edge"), f);
        self.key_mlp.visit(&join(prefix, "key_mlp"), f);
        self.value_mlp.visit(&join(prefix, "value_mlp"), f);
        self.attn_norm.visit(&join(prefix, "attn_norm"), f);
        self.msg_norm.visit(&join(prefix, "msg_norm"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(dim: usize) -> (NodeLayer, Matrix, Matrix, Vec<usize>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layer = NodeLayer::new(dim, 1e-5, 0.1, &mut rng);
        let nodes = Matrix::from_fn(3, dim, |r, c| ((r * 7 + c) as f64 * 0.37).sin());
        let edges = Matrix::from_fn(5, dim, |r, c| ((r * 3 + c) as f64 * 0.21).cos());
        (layer, nodes, edges, vec![1, 2, 0, 0, 1], vec![0, 0, 1, 2, 2])
    }

    #[test]
    fn zero_weights_reduce_to_residual() {
        let (mut layer, nodes, edges, src, dst) = setup(4);
        layer.set_zero();
        let out = layer.forward(&nodes, &edges, &src, &dst, &mut NormMode::Running);
        // BN(0) with running stats (0, 1) is 0
        assert_eq!(out, nodes.map(softplus));
    }

    #[test]
    fn edge_order_does_not_matter() {
        let (layer, nodes, edges, src, dst) = setup(4);
        let out = layer.forward(&nodes, &edges, &src, &dst, &mut NormMode::Running);
        let perm = [4, 2, 0, 3, 1];
        let e2 = gather_rows(&edges, &perm);
        let s2: Vec<usize> = perm.iter().map(|&p| src[p]).collect();
        let d2: Vec<usize> = perm.iter().map(|&p| dst[p]).collect();
        let out2 = layer.forward(&nodes, &e2, &s2, &d2, &mut NormMode::Running);
        assert!((out - out2).amax() < 1e-14);
    }

    #[test]
    fn matches_per_edge_formula() {
        let (layer, nodes, edges, src, dst) = setup(3);
        let out = layer.forward(&nodes, &edges, &src, &dst, &mut NormMode::Running);
        let d = 3usize;
        let scale = 1.0 / (1.0f64 + 1e-5).sqrt();
        let row = |m: &Matrix, i: usize| Matrix::from_row_slice(1, m.ncols(), m.row(i).transpose().as_slice());
        let mut agg = Matrix::zeros(3, d);
        for e in 0..src.len() {
            let (i, j) = (dst[e], src[e]);
            let q = layer.query.forward(&row(&nodes, i));
            let k = hcat(&[
                &layer.key.forward(&row(&nodes, i)),
                &layer.key.forward(&row(&nodes, j)),
                &layer.edge.forward(&row(&edges, e)),
            ]);
            let v = hcat(&[
                &layer.value.forward(&row(&nodes, i)),
                &layer.value.forward(&row(&nodes, j)),
                &layer.edge.forward(&row(&edges, e)),
            ]);
            let alpha = q.component_mul(&layer.key_mlp.forward(&k)) / (d as f64).sqrt();
            let msg = (alpha * scale).map(sigmoid).component_mul(&layer.value_mlp.forward(&v));
            let mut r = agg.row_mut(i);
            r += msg.row(0);
        }
        let want = (nodes + agg * scale).map(softplus);
        assert!((out - want).amax() < 1e-13);
    }
}
