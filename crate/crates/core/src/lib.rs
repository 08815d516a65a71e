//! Periodic crystal geometry, lattice representations and multi-edge crystal graphs.

pub mod elements;
pub mod fixtures;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod lattice_repr;
pub mod reconstruct;
pub mod symmetry;

pub use geometry::{Crystal, GeometryError, ImageCoeff, Lattice, Mat3, Vec3};
pub use graph::{CrystalGraph, Edge, GraphError, GraphKind};
pub use lattice_repr::{build_lattice_representation, LatticeRepresentation};
