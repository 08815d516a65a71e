//! Text formats for crystals (POSCAR, JSON) and serialized graphs (JSON).

mod json;
mod poscar;

use thiserror::Error;

use crate::geometry::{Crystal, GeometryError};

pub use json::{parse_crystal_json, parse_graph_json, write_crystal_json, write_graph_json};
pub use poscar::{parse_poscar, parse_poscar_bytes, write_poscar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unknown species: {0}")]
    UnknownSpecies(String),
    #[error("count mismatch: counts sum to {expected} but found {found} coordinate lines")]
    CountMismatch { expected: usize, found: usize },
    #[error("singular lattice: |det L| = {0:e}")]
    SingularLattice(f64),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("kind mismatch: {0}")]
    KindMismatch(String),
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
}

impl From<GeometryError> for IoError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::SingularLattice(d) => IoError::SingularLattice(d),
            other => IoError::InvalidStructure(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureDocument {
    pub crystal: Crystal,
    pub comment: String,
    pub source_path: Option<String>,
}

impl StructureDocument {
    pub fn new(crystal: Crystal, comment: impl Into<String>) -> Self {
        StructureDocument {
            crystal,
            comment: comment.into(),
            source_path: None,
        }
    }
}

/// Parses a structure file, choosing JSON when the first non-blank byte is `{`.
pub fn parse_structure(text: &str) -> Result<StructureDocument, IoError> {
    if text.trim_start().starts_with('{') {
        parse_crystal_json(text)
    } else {
        parse_poscar(text)
    }
}
