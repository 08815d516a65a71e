use rand::Rng;

use crate::nn::{gather_rows, hcat, join, sigmoid, softplus, vcat, BatchNorm, Linear, Matrix, Mlp, NormMode, VisitParams};

/// Edge-wise attention over the three lattice self-edges of the center.
///
/// Edge `ji` receives one message per lattice direction `m`, built from its
/// own feature, the feature of the center's m-th self-edge (through a
/// direction-specific projection) and the m-th angle feature.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub lattice_key: [Linear; 3],
    pub lattice_value: [Linear; 3],
    pub angle: Linear,
    pub key_mlp: Mlp,
    pub value_mlp: Mlp,
    pub attn_norm: BatchNorm,
    pub msg_norm: BatchNorm,
}

/// Geometry an edge layer needs: the destination of each edge and the
/// designated self-edge indices of each node.
#[derive(Debug, Clone, Copy)]
pub struct EdgeContext<'a> {
    pub dst: &'a [usize],
    pub designated: &'a [[usize; 3]],
}

impl EdgeLayer {
    pub fn new<R: Rng + ?Sized>(dim: usize, eps: f64, momentum: f64, rng: &mut R) -> Self {
        EdgeLayer {
            query: Linear::new(dim, dim, rng),
            key: Linear::new(dim, dim, rng),
            value: Linear::new(dim, dim, rng),
            lattice_key: std::array::from_fn(|_| Linear::new(dim, dim, rng)),
            lattice_value: std::array::from_fn(|_| Linear::new(dim, dim, rng)),
            angle: Linear::new(dim, dim, rng),
            key_mlp: Mlp::new(3 * dim, dim, dim, rng),
            value_mlp: Mlp::new(3 * dim, dim, dim, rng),
            attn_norm: BatchNorm::new(dim, eps, momentum),
            msg_norm: BatchNorm::new(dim, eps, momentum),
        }
    }

    pub fn dim(&self) -> usize {
        self.query.output_dim()
    }

    /// The three message blocks, direction-major: rows `m·E .. (m+1)·E`.
    pub fn messages(&self, edges: &Matrix, angles: &[Matrix; 3], ctx: EdgeContext<'_>, mode: &mut NormMode) -> Matrix {
        let d = self.dim();
        let q = self.query.forward(edges);
        let ke = self.key.forward(edges);
        let ve = self.value.forward(edges);
        let mut keys = Vec::with_capacity(3);
        let mut values = Vec::with_capacity(3);
        for m in 0..3 {
            let lattice_rows: Vec<usize> = ctx.dst.iter().map(|&i| ctx.designated[i][m]).collect();
            let lattice = gather_rows(edges, &lattice_rows);
            let a = self.angle.forward(&angles[m]);
            keys.push(hcat(&[&ke, &self.lattice_key[m].forward(&lattice), &a]));
            values.push(hcat(&[&ve, &self.lattice_value[m].forward(&lattice), &a]));
        }
        let q3 = vcat(&[q.clone(), q.clone(), q]);
        let alpha = q3.component_mul(&self.key_mlp.forward(&vcat(&keys))) / (d as f64).sqrt();
        let gate = self.attn_norm.forward(&alpha, mode).map(sigmoid);
        gate.component_mul(&self.value_mlp.forward(&vcat(&values)))
    }

    pub fn forward(&self, edges: &Matrix, angles: &[Matrix; 3], ctx: EdgeContext<'_>, mode: &mut NormMode) -> Matrix {
        let n = edges.nrows();
        let msg = self.messages(edges, angles, ctx, mode);
        let sum = msg.rows(0, n) + msg.rows(n, n) + msg.rows(2 * n, n);
        (edges + self.msg_norm.forward(&sum, mode)).map(softplus)
    }

    pub fn batch_norms_mut(&mut self) -> Vec<&mut BatchNorm> {
        vec![&mut self.attn_norm, &mut self.msg_norm]
    }

    pub fn set_zero(&mut self) {
        for l in [&mut self.query, &mut self.key, &mut self.value, &mut self.angle] {
            l.set_zero();
        }
        for l in self.lattice_key.iter_mut().chain(self.lattice_value.iter_mut()) {
            l.set_zero();
        }
        self.key_mlp.set_zero();
        self.value_mlp.set_zero();
    }
}

impl VisitParams for EdgeLayer {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        self.query.visit(&join(prefix, "query"), f);
        self.key.visit(&join(prefix, "key"), f);
        self.value.visit(&join(prefix, "value"), f);
        for m in 0..3 {
            self.lattice_key[m].visit(&join(prefix, &format!("lattice_key{m}")), f);
            self.lattice_value[m].visit(&join(prefix, &format!("lattice_value{m}")), f);
        }
        self.angle.visit(&join(prefix, "angle"), f);
        self.key_mlp.visit(&join(prefix, "key_mlp"), f);
        self.value_mlp.visit(&join(prefix, "value_mlp"), f);
        self.attn_norm.visit(&join(prefix, "attn_norm"), f);
        self.msg_norm.visit(&join(prefix, "msg_norm"), f);
    }
}
