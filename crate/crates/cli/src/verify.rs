//! Reconstruction round trips for batches of structures or graphs.

use comformer_core::graph::{build_graph, graph_deviation};
use comformer_core::reconstruct::{match_structures, reconstruct_crystal, reconstruct_crystal_equivariant};
use comformer_core::{Crystal, CrystalGraph, GraphKind};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct StructureCheck {
    pub source: String,
    pub n_atoms: usize,
    pub kind: GraphKind,
    /// Present when the input was a structure.
    pub rmsd: Option<f64>,
    pub max_pointwise: Option<f64>,
    /// Largest difference between the input graph and the graph rebuilt
    /// from its reconstruction (graph inputs only).
    pub graph_deviation: Option<f64>,
    pub passed: bool,
    pub error: Option<String>,
    pub exit_code: i32,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifySummary {
    pub count: usize,
    pub passed: usize,
    pub failed: usize,
    pub mean_rmsd: Option<f64>,
    pub max_rmsd: Option<f64>,
    pub max_pointwise: Option<f64>,
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub structures: Vec<StructureCheck>,
    pub summary: VerifySummary,
}

pub fn reconstruct(graph: &CrystalGraph) -> Result<Crystal, CliError> {
    Ok(match graph.kind {
        GraphKind::Invariant => reconstruct_crystal(graph)?,
        GraphKind::Equivariant => reconstruct_crystal_equivariant(graph)?,
    })
}

fn failed(source: String, n_atoms: usize, kind: GraphKind, e: CliError) -> StructureCheck {
    StructureCheck {
        source,
        n_atoms,
        kind,
        rmsd: None,
        max_pointwise: None,
        graph_deviation: None,
        passed: false,
        error: Some(e.to_string()),
        exit_code: e.exit_code(),
    }
}

/// Structure → graph → structure, compared up to a proper rigid motion.
pub fn check_structure(source: String, crystal: &Crystal, k: usize, kind: GraphKind, tol: f64) -> StructureCheck {
    let run = || -> Result<(f64, f64), CliError> {
        let g = build_graph(crystal, k, kind)?;
        let rebuilt = reconstruct(&g)?;
        let rep = match_structures(crystal, &rebuilt)?;
        Ok((rep.rmsd, rep.max_pointwise))
    };
    match run() {
        Ok((rmsd, max_pointwise)) => StructureCheck {
            source,
            n_atoms: crystal.len(),
            kind,
            rmsd: Some(rmsd),
            max_pointwise: Some(max_pointwise),
            graph_deviation: None,
            passed: rmsd < tol,
            error: None,
            exit_code: if rmsd < tol { 0 } else { 2 },
        },
        Err(e) => failed(source, crystal.len(), kind, e),
    }
}

/// Graph → structure → graph. `k` must be the neighbor count the input was
/// built with, or the rebuilt edge set will differ.
pub fn check_graph(source: String, graph: &CrystalGraph, k: usize, tol: f64) -> StructureCheck {
    let n = graph.num_nodes();
    let run = || -> Result<f64, CliError> {
        let rebuilt = reconstruct(graph)?;
        let g2 = build_graph(&rebuilt, k, graph.kind)?;
        graph_deviation(graph, &g2).map_err(CliError::from)
    };
    match run() {
        Ok(dev) => StructureCheck {
            source,
            n_atoms: n,
            kind: graph.kind,
            rmsd: None,
            max_pointwise: None,
            graph_deviation: Some(dev),
            passed: dev < tol,
            error: None,
            exit_code: if dev < tol { 0 } else { 2 },
        },
        Err(e) => failed(source, n, graph.kind, e),
    }
}

pub fn summarize(structures: Vec<StructureCheck>, tol: f64) -> VerifyReport {
    let rmsds: Vec<f64> = structures.iter().filter_map(|s| s.rmsd).collect();
    let passed = structures.iter().filter(|s| s.passed).count();
    let summary = VerifySummary {
        count: structures.len(),
        passed,
        failed: structures.len() - passed,
        mean_rmsd: (!rmsds.is_empty()).then(|| rmsds.iter().sum::<f64>() / rmsds.len() as f64),
        max_rmsd: rmsds.iter().cloned().reduce(f64::max),
        max_pointwise: structures.iter().filter_map(|s| s.max_pointwise).reduce(f64::max),
        tol,
    };
    VerifyReport { structures, summary }
}

impl VerifyReport {
    /// 0 when everything passed, else the most severe per-item code.
    pub fn exit_code(&self) -> i32 {
        self.structures.iter().map(|s| s.exit_code).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use comformer_core::fixtures::{generate, Family, FixtureSpec};

    #[test]
    fn both_paths_round_trip() {
        let c = generate(&FixtureSpec::new(Family::TriclinicRandom, 6, 1)).unwrap();
        for kind in [GraphKind::Invariant, GraphKind::Equivariant] {
            let s = check_structure("t".into(), &c, 12, kind, 1e-6);
            assert!(s.passed, "{s:?}");
            let g = build_graph(&c, 12, kind).unwrap();
            assert!(check_graph("g".into(), &g, 12, 1e-6).passed);
        }
    }

    #[test]
    fn disconnected_input_is_a_domain_failure() {
        let c = generate(&FixtureSpec::new(Family::TwoCluster, 6, 0)).unwrap();
        let s = check_structure("two".into(), &c, 2, GraphKind::Invariant, 1e-6);
        assert!(!s.passed);
        assert_eq!(s.exit_code, 2);
        let rep = summarize(vec![s], 1e-6);
        assert_eq!(rep.summary.failed, 1);
        assert_eq!(rep.exit_code(), 2);
        assert!(rep.summary.mean_rmsd.is_none());
    }
}
