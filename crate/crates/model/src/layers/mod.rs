//! Message-passing layers. Each takes row-per-item feature matrices and a
//! [`NormMode`](crate::nn::NormMode) that selects running or batch statistics.

mod edge;
mod equivariant;
mod node;

pub use edge::{EdgeContext, EdgeLayer};
pub use equivariant::{EquivariantEdges, EquivariantLayer, EquivariantShape, EquivariantState};
pub use node::NodeLayer;
