use comformer_core::GraphKind;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("edge {edge} has non-positive length {dist}")]
    NonpositiveDistance { edge: usize, dist: f64 },
    #[error("unknown species Z = {0}")]
    UnknownSpecies(u8),
    #[error("shape mismatch for {name}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("node {0} lacks its three designated lattice self-edges")]
    MissingSelfEdges(usize),
    #[error("direction is not a unit vector (norm {0})")]
    NotUnit(f64),
    #[error("tensor product order mismatch: expected {expected} components, found {found}")]
    OrderMismatch { expected: usize, found: usize },
    #[error("model expects a {expected:?} graph, got {found:?}")]
    WrongGraphKind { expected: GraphKind, found: GraphKind },
    #[error("non-finite value in {0}")]
    NonfiniteInput(&'static str),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("edge {0} is missing its {1} data")]
    MissingEdgeData(usize, &'static str),
    #[error("parameter file is missing array {0}")]
    MissingParameter(String),
    #[error("parameter file has unexpected array {0}")]
    UnknownParameter(String),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
