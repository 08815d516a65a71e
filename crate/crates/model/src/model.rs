//! Full forward passes of the invariant (edge-wise attention) and
//! equivariant (tensor-product) variants.
//!
//! Invariant variant: node layer, edge layers, remaining node layers.
//! Equivariant variant: node layer, equivariant layers, remaining node layers.
//! Both mean-pool node features and read out through linear, SiLU, linear.

use std::fmt;
use std::str::FromStr;

use comformer_core::{CrystalGraph, GraphKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::embed::{EdgeEmbedding, SpeciesEmbedding};
use crate::error::ModelError;
use crate::inputs::GraphInputs;
use crate::layers::{EdgeContext, EdgeLayer, EquivariantEdges, EquivariantLayer, EquivariantShape, EquivariantState, NodeLayer};
use crate::nn::{join, silu, BatchNorm, Linear, Matrix, NormMode, VisitParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "icomformer")]
    Invariant,
    #[serde(rename = "ecomformer")]
    Equivariant,
}

impl Variant {
    pub fn graph_kind(self) -> GraphKind {
        match self {
            Variant::Invariant => GraphKind::Invariant,
            Variant::Equivariant => GraphKind::Equivariant,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Invariant => "icomformer",
            Variant::Equivariant => "ecomformer",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "icomformer" | "invariant" => Ok(Variant::Invariant),
            "ecomformer" | "equivariant" => Ok(Variant::Equivariant),
            other => Err(format!("unknown variant {other:?} (expected icomformer or ecomformer)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub species: SpeciesEmbedding,
    pub edge_embedding: EdgeEmbedding,
    pub node_layers: Vec<NodeLayer>,
    pub edge_layers: Vec<EdgeLayer>,
    pub equivariant_layers: Vec<EquivariantLayer>,
    pub head_hidden: Linear,
    pub head_out: Linear,
}

impl Parameters {
    /// Deterministic initialization from `config.seed`.
    pub fn init(config: &ModelConfig, variant: Variant) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.hidden_dim;
        let (eps, mom) = (config.bn_eps, config.bn_momentum);
        let species = SpeciesEmbedding::new(config, &mut rng);
        let edge_embedding = EdgeEmbedding::new(config, &mut rng);
        let node_layers = (0..config.n_node_layers).map(|_| NodeLayer::new(d, eps, mom, &mut rng)).collect();
        let (edge_layers, equivariant_layers) = match variant {
            Variant::Invariant => {
                ((0..config.n_edge_layers).map(|_| EdgeLayer::new(d, eps, mom, &mut rng)).collect(), Vec::new())
            }
            Variant::Equivariant => {
                let shape = EquivariantShape {
                    hidden: d,
                    order0: config.tp_channels.order0,
                    order12: config.tp_channels.order12,
                    max_order: config.max_rotation_order,
                    c0: config.sh_constants.c0,
                    c1: config.sh_constants.c1,
                    eps,
                    momentum: mom,
                };
                (Vec::new(), (0..config.n_equivariant_layers).map(|_| EquivariantLayer::new(&shape, &mut rng)).collect())
            }
        };
        Parameters {
            species,
            edge_embedding,
            node_layers,
            edge_layers,
            equivariant_layers,
            head_hidden: Linear::new(d, d, &mut rng),
            head_out: Linear::new(d, 1, &mut rng),
        }
    }

    /// Batch norms in the order a forward pass applies them.
    fn norms_in_order(&mut self) -> Vec<&mut BatchNorm> {
        let (first, rest) = self.node_layers.split_at_mut(1);
        let mut out = Vec::new();
        for l in first.iter_mut() {
            out.extend(l.batch_norms_mut());
        }
        for l in self.edge_layers.iter_mut() {
            out.extend(l.batch_norms_mut());
        }
        for l in self.equivariant_layers.iter_mut() {
            out.extend(l.batch_norms_mut());
        }
        for l in rest.iter_mut() {
            out.extend(l.batch_norms_mut());
        }
        out
    }
}

impl VisitParams for Parameters {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        self.species.visit(&join(prefix, "species"), f);
        self.edge_embedding.visit(&join(prefix, "edge_embedding"), f);
        for (i, l) in self.node_layers.iter_mut().enumerate() {
            l.visit(&join(prefix, &format!("node{i}")), f);
        }
        for (i, l) in self.edge_layers.iter_mut().enumerate() {
            l.visit(&join(prefix, &format!("edge{i}")), f);
        }
        for (i, l) in self.equivariant_layers.iter_mut().enumerate() {
            l.visit(&join(prefix, &format!("equivariant{i}")), f);
        }
        self.head_hidden.visit(&join(prefix, "head.hidden"), f);
        self.head_out.visit(&join(prefix, "head.out"), f);
    }
}

/// Everything one forward pass produces besides the scalar prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub node_features: Matrix,
    pub pooled: Vec<f64>,
    pub equivariant_states: Vec<EquivariantState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub variant: Variant,
    pub params: Parameters,
}

impl Model {
    pub fn new(config: ModelConfig, variant: Variant) -> Result<Self, ModelError> {
        config.validate()?;
        let params = Parameters::init(&config, variant);
        Ok(Model { config, variant, params })
    }

    fn check_kind(&self, graph: &CrystalGraph) -> Result<(), ModelError> {
        let expected = self.variant.graph_kind();
        if graph.kind != expected {
            return Err(ModelError::WrongGraphKind { expected, found: graph.kind });
        }
        Ok(())
    }

    fn run(&self, graph: &CrystalGraph, mode: &mut NormMode, keep_states: bool) -> Result<ForwardTrace, ModelError> {
        self.check_kind(graph)?;
        let inp = GraphInputs::from_graph(graph)?;
        let p = &self.params;
        let mut nodes = p.species.embed(&inp.species)?;
        let mut edges = p.edge_embedding.distances(&inp.dist)?;
        let mut states = Vec::new();

        let (first, rest) = p.node_layers.split_at(1);
        for l in first {
            nodes = l.forward(&nodes, &edges, &inp.src, &inp.dst, mode);
        }
        if !p.edge_layers.is_empty() {
            let angles = p.edge_embedding.angles(inp.angles.as_deref().ok_or(ModelError::MissingEdgeData(0, "angle"))?);
            let ctx = EdgeContext { dst: &inp.dst, designated: &inp.designated };
            for l in &p.edge_layers {
                edges = l.forward(&edges, &angles, ctx, mode);
            }
        }
        if !p.equivariant_layers.is_empty() {
            let units = inp.units.as_deref().ok_or(ModelError::MissingEdgeData(0, "vector"))?;
            let geo = EquivariantEdges { src: &inp.src, dst: &inp.dst, units, in_degree: &inp.in_degree };
            for l in &p.equivariant_layers {
                let (out, st) = l.forward_with_state(&nodes, geo, mode);
                nodes = out;
                if keep_states {
                    states.push(st);
                }
            }
        }
        for l in rest {
            nodes = l.forward(&nodes, &edges, &inp.src, &inp.dst, mode);
        }

        let n = nodes.nrows() as f64;
        let pooled: Vec<f64> = nodes.column_iter().map(|c| c.sum() / n).collect();
        if pooled.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonfiniteInput("pooled features"));
        }
        Ok(ForwardTrace { node_features: nodes, pooled, equivariant_states: states })
    }

    /// Full pass with running batch-norm statistics, keeping intermediates.
    pub fn trace(&self, graph: &CrystalGraph) -> Result<ForwardTrace, ModelError> {
        self.run(graph, &mut NormMode::Running, true)
    }

    /// Mean-pooled final node features.
    pub fn featurize(&self, graph: &CrystalGraph) -> Result<Vec<f64>, ModelError> {
        Ok(self.run(graph, &mut NormMode::Running, false)?.pooled)
    }

    pub fn readout(&self, pooled: &[f64]) -> f64 {
        let x = Matrix::from_row_slice(1, pooled.len(), pooled);
        let h = self.params.head_hidden.forward(&x).map(silu);
        self.params.head_out.forward(&h)[(0, 0)]
    }

    pub fn forward(&self, graph: &CrystalGraph) -> Result<f64, ModelError> {
        Ok(self.readout(&self.featurize(graph)?))
    }

    /// Updates running batch-norm statistics by passing each graph in batch
    /// mode, normalizing over the rows (edges or nodes) of that graph.
    pub fn calibrate(&mut self, graphs: &[CrystalGraph]) -> Result<(), ModelError> {
        for g in graphs {
            let mut mode = NormMode::Batch(Vec::new());
            self.run(g, &mut mode, false)?;
            let NormMode::Batch(log) = mode else { unreachable!() };
            let norms = self.params.norms_in_order();
            debug_assert_eq!(norms.len(), log.len());
            for (bn, m) in norms.into_iter().zip(&log) {
                bn.update_running(m);
            }
        }
        Ok(())
    }

    /// Same weights with the edge-wise and equivariant layers removed, so
    /// only edge lengths reach the node features.
    pub fn distance_only(&self) -> Model {
        let mut m = self.clone();
        m.params.edge_layers.clear();
        m.params.equivariant_layers.clear();
        m.config.n_edge_layers = 0;
        m.config.n_equivariant_layers = 0;
        m
    }

    /// Number of scalars across all parameter arrays.
    pub fn parameter_count(&self) -> usize {
        let mut p = self.params.clone();
        let mut total = 0;
        p.visit("", &mut |_, m| total += m.len());
        total
    }
}
