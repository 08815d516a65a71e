use comformer_core::Vec3;
use rand::Rng;

use crate::harmonics::{harmonics_unchecked, SphericalHarmonics};
use crate::nn::{join, softplus, uniform_init, BatchNorm, Linear, Matrix, NormMode, VisitParams};

/// Node-wise equivariant update built from two stacked tensor products.
///
/// The first stage lifts reduced node scalars `f'` onto each incoming edge
/// direction and averages per node, giving order-0, order-1 and order-2
/// features. The second stage contracts those features with the same edge
/// harmonics back to scalars, so the order-1 branch carries
/// `cos(angle(e_mj, e_ji))` for every two-hop path `m -> j -> i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivariantLayer {
    /// Hidden width to order-0 channels.
    pub reduce: Linear,
    /// First stage, scalars to scalars (`order0 × order0`).
    pub lift_scalar: Matrix,
    /// First stage, scalars to order-1 channels (`order0 × order12`).
    pub lift_vector: Matrix,
    /// First stage, scalars to order-2 channels; absent at max order 1.
    pub lift_tensor: Option<Matrix>,
    /// Second stage contractions back to `order0` scalars.
    pub contract_scalar: Matrix,
    pub contract_vector: Matrix,
    pub contract_tensor: Option<Matrix>,
    pub norm: BatchNorm,
    pub expand: Linear,
    pub skip: Linear,
    pub c0: f64,
    pub c1: f64,
}

/// Edge geometry for the equivariant layer. `units[e]` points from the
/// neighbor image `src[e]` to the center `dst[e]`.
#[derive(Debug, Clone, Copy)]
pub struct EquivariantEdges<'a> {
    pub src: &'a [usize],
    pub dst: &'a [usize],
    pub units: &'a [Vec3],
    pub in_degree: &'a [usize],
}

/// Intermediate features of one equivariant layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivariantState {
    /// `f_{i,0}`: reduced features plus the averaged order-0 lift.
    pub scalar: Matrix,
    /// `f_{i,1}`, column `3c + k` is component `k` of channel `c`.
    pub vector: Matrix,
    /// `f_{i,2}`, column `5c + k`; absent at max order 1.
    pub tensor: Option<Matrix>,
    /// Contribution of each order to the averaged second-stage output.
    pub branches: [Matrix; 3],
}

impl EquivariantState {
    pub fn combined(&self) -> Matrix {
        &self.branches[0] + &self.branches[1] + &self.branches[2]
    }

    /// Order-1 channel `c` of node `i` as a vector.
    pub fn vector_channel(&self, i: usize, c: usize) -> Vec3 {
        Vec3::new(self.vector[(i, 3 * c)], self.vector[(i, 3 * c + 1)], self.vector[(i, 3 * c + 2)])
    }
}

pub struct EquivariantShape {
    pub hidden: usize,
    pub order0: usize,
    pub order12: usize,
    pub max_order: u8,
    pub c0: f64,
    pub c1: f64,
    pub eps: f64,
    pub momentum: f64,
}

impl EquivariantLayer {
    pub fn new<R: Rng + ?Sized>(s: &EquivariantShape, rng: &mut R) -> Self {
        let (c0, c12) = (s.order0, s.order12);
        let reduce = Linear::new(s.hidden, c0, rng);
        let lift_scalar = uniform_init(c0, c0, c0, rng);
        let lift_vector = uniform_init(c0, c12, c0, rng);
        let lift_tensor = (s.max_order >= 2).then(|| uniform_init(c0, c12, c0, rng));
        let contract_scalar = uniform_init(c0, c0, c0, rng);
        let contract_vector = uniform_init(c12, c0, c12, rng);
        let contract_tensor = (s.max_order >= 2).then(|| uniform_init(c12, c0, c12, rng));
        EquivariantLayer {
            reduce,
            lift_scalar,
            lift_vector,
            lift_tensor,
            contract_scalar,
            contract_vector,
            contract_tensor,
            norm: BatchNorm::new(c0, s.eps, s.momentum),
            expand: Linear::new(c0, s.hidden, rng),
            skip: Linear::new(s.hidden, s.hidden, rng),
            c0: s.c0,
            c1: s.c1,
        }
    }

    pub fn order0_channels(&self) -> usize {
        self.lift_scalar.nrows()
    }

    pub fn order12_channels(&self) -> usize {
        self.lift_vector.ncols()
    }

    pub fn max_order(&self) -> u8 {
        if self.lift_tensor.is_some() {
            2
        } else {
            1
        }
    }

    /// Both tensor-product stages applied to already reduced scalars `f'`.
    pub fn aggregate(&self, reduced: &Matrix, edges: EquivariantEdges<'_>) -> EquivariantState {
        let n = reduced.nrows();
        let c0 = self.order0_channels();
        let c12 = self.order12_channels();
        let sh: Vec<SphericalHarmonics> = edges.units.iter().map(|u| harmonics_unchecked(u, self.c0, self.c1)).collect();
        let inv: Vec<f64> = edges.in_degree.iter().map(|&d| 1.0 / d.max(1) as f64).collect();

        let lifted0 = reduced * &self.lift_scalar;
        let lifted1 = reduced * &self.lift_vector;
        let lifted2 = self.lift_tensor.as_ref().map(|w| reduced * w);

        let mut scalar = reduced.clone();
        let mut vector = Matrix::zeros(n, 3 * c12);
        let mut tensor = lifted2.as_ref().map(|_| Matrix::zeros(n, 5 * c12));
        for (e, y) in sh.iter().enumerate() {
            let (j, i) = (edges.src[e], edges.dst[e]);
            let w = inv[i];
            for c in 0..c0 {
                scalar[(i, c)] += w * y.y0 * lifted0[(j, c)];
            }
            for c in 0..c12 {
                let v = w * lifted1[(j, c)];
                for k in 0..3 {
                    vector[(i, 3 * c + k)] += v * y.y1[k];
                }
            }
            if let (Some(t), Some(l2)) = (tensor.as_mut(), lifted2.as_ref()) {
                for c in 0..c12 {
                    let v = w * l2[(j, c)];
                    for k in 0..5 {
                        t[(i, 5 * c + k)] += v * y.y2[k];
                    }
                }
            }
        }

        // second stage is linear in the contracted features, so contract per
        // edge, average per node, then apply the channel weights once
        let gathered0 = &scalar * &self.contract_scalar;
        let mut branch0 = Matrix::zeros(n, c0);
        let mut dot1 = Matrix::zeros(n, c12);
        let mut dot2 = Matrix::zeros(n, c12);
        for (e, y) in sh.iter().enumerate() {
            let (j, i) = (edges.src[e], edges.dst[e]);
            let w = inv[i];
            for c in 0..c0 {
                branch0[(i, c)] += w * y.y0 * gathered0[(j, c)];
            }
            for c in 0..c12 {
                let d: f64 = (0..3).map(|k| vector[(j, 3 * c + k)] * y.y1[k]).sum();
                dot1[(i, c)] += w * d;
            }
            if let Some(t) = tensor.as_ref() {
                for c in 0..c12 {
                    let d: f64 = (0..5).map(|k| t[(j, 5 * c + k)] * y.y2[k]).sum();
                    dot2[(i, c)] += w * d;
                }
            }
        }
        let branch1 = dot1 * &self.contract_vector;
        let branch2 = match &self.contract_tensor {
            Some(wt) if tensor.is_some() => dot2 * wt,
            _ => Matrix::zeros(n, c0),
        };
        EquivariantState { scalar, vector, tensor, branches: [branch0, branch1, branch2] }
    }

    /// `softplus(expand(softplus(BN(f*)))) + skip(f)`
    pub fn forward_with_state(
        &self,
        nodes: &Matrix,
        edges: EquivariantEdges<'_>,
        mode: &mut NormMode,
    ) -> (Matrix, EquivariantState) {
        let state = self.aggregate(&self.reduce.forward(nodes), edges);
        let normed = self.norm.forward(&state.combined(), mode).map(softplus);
        let out = self.expand.forward(&normed).map(softplus) + self.skip.forward(nodes);
        (out, state)
    }

    pub fn forward(&self, nodes: &Matrix, edges: EquivariantEdges<'_>, mode: &mut NormMode) -> Matrix {
        self.forward_with_state(nodes, edges, mode).0
    }

    pub fn batch_norms_mut(&mut self) -> Vec<&mut BatchNorm> {
        vec![&mut self.norm]
    }

    /// Zeroes the first-stage path weights, so `f_{i,0} = f'_i`, the
    /// higher orders vanish and only the residual reaches `f*`.
    pub fn zero_lift_weights(&mut self) {
        self.lift_scalar.fill(0.0);
        self.lift_vector.fill(0.0);
        if let Some(w) = self.lift_tensor.as_mut() {
            w.fill(0.0);
        }
    }
}

impl VisitParams for EquivariantLayer {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        self.reduce.visit(&join(prefix, "reduce"), f);
        f(join(prefix, "lift_scalar"), &mut self.lift_scalar);
        f(join(prefix, "lift_vector"), &mut self.lift_vector);
        if let Some(w) = self.lift_tensor.as_mut() {
            f(join(prefix, "lift_tensor"), w);
        }
        f(join(prefix, "contract_scalar"), &mut self.contract_scalar);
        f(join(prefix, "contract_vector"), &mut self.contract_vector);
        if let Some(w) = self.contract_tensor.as_mut() {
            f(join(prefix, "contract_tensor"), w);
        }
        self.norm.visit(&join(prefix, "norm"), f);
        self.expand.visit(&join(prefix, "expand"), f);
        self.skip.visit(&join(prefix, "skip"), f);
    }
}
