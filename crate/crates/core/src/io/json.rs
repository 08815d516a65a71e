use serde::{Deserialize, Serialize};

use super::{IoError, StructureDocument};
use crate::geometry::{angle_between, Crystal, ImageCoeff, Lattice, Vec3};
use crate::graph::{CrystalGraph, Edge, GraphKind};
use crate::lattice_repr::{LatticeRepresentation, TieDiagnostics};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CrystalDoc {
    lattice: [[f64; 3]; 3],
    cart_positions: Vec<[f64; 3]>,
    atomic_numbers: Vec<u8>,
    #[serde(default)]
    comment: String,
}

fn schema(msg: impl std::fmt::Display) -> IoError {
    IoError::SchemaViolation(msg.to_string())
}

pub fn parse_crystal_json(text: &str) -> Result<StructureDocument, IoError> {
    let doc: CrystalDoc = serde_json::from_str(text).map_err(schema)?;
    if doc.cart_positions.is_empty() {
        return Err(schema("crystal must contain at least one atom"));
    }
    if doc.cart_positions.len() != doc.atomic_numbers.len() {
        return Err(schema("cart_positions and atomic_numbers differ in length"));
    }
    let lattice = Lattice::new(doc.lattice).map_err(schema)?;
    let positions = doc.cart_positions.iter().map(|p| Vec3::from(*p)).collect();
    let crystal = Crystal::new(lattice, positions, doc.atomic_numbers).map_err(schema)?;
    Ok(StructureDocument::new(crystal, doc.comment))
}

pub fn write_crystal_json(doc: &StructureDocument) -> String {
    let c = &doc.crystal;
    let out = CrystalDoc {
        lattice: c.lattice.to_array(),
        cart_positions: c.positions.iter().map(|p| [p.x, p.y, p.z]).collect(),
        atomic_numbers: c.species.clone(),
        comment: doc.comment.clone(),
    };
    serde_json::to_string_pretty(&out).expect("finite crystal serializes")
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReprDoc {
    e1: [f64; 3],
    e2: [f64; 3],
    e3: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c1: Option<[i32; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c2: Option<[i32; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c3: Option<[i32; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diagnostics: Option<TieDiagnostics>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    src: usize,
    dst: usize,
    image: [i32; 3],
    dist: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    angles: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vec: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    designated: Option<u8>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    kind: GraphKind,
    atomic_numbers: Vec<u8>,
    lattice_repr: ReprDoc,
    edges: Vec<EdgeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    per_node_radius: Option<Vec<f64>>,
}

pub fn write_graph_json(graph: &CrystalGraph) -> String {
    let r = &graph.lattice_repr;
    let arr = |v: &Vec3| [v.x, v.y, v.z];
    let doc = GraphDoc {
        kind: graph.kind,
        atomic_numbers: graph.atomic_numbers.clone(),
        lattice_repr: ReprDoc {
            e1: arr(&r.vectors[0]),
            e2: arr(&r.vectors[1]),
            e3: arr(&r.vectors[2]),
            c1: Some(r.coeffs[0].0),
            c2: Some(r.coeffs[1].0),
            c3: Some(r.coeffs[2].0),
            diagnostics: Some(r.diagnostics),
        },
        edges: graph
            .edges
            .iter()
            .map(|e| EdgeDoc {
                src: e.src,
                dst: e.dst,
                image: e.image.0,
                dist: e.dist,
                angles: e.angles,
                vec: e.vec.as_ref().map(arr),
                designated: e.designated,
            })
            .collect(),
        per_node_radius: Some(graph.per_node_radius.clone()),
    };
    serde_json::to_string(&doc).expect("finite graph serializes")
}

fn finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

/// Parses a graph document. Untagged files get their designated self-edges
/// inferred: the last `i -> i` edge whose vector equals `-e_m`.
pub fn parse_graph_json(text: &str) -> Result<CrystalGraph, IoError> {
    let doc: GraphDoc = serde_json::from_str(text).map_err(schema)?;
    let n = doc.atomic_numbers.len();
    if n == 0 {
        return Err(schema("graph has no nodes"));
    }
    if let Some(&z) = doc.atomic_numbers.iter().find(|&&z| z == 0 || z > 118) {
        return Err(schema(format!("atomic number {z} outside 1..=118")));
    }
    let lr = &doc.lattice_repr;
    let vectors = [Vec3::from(lr.e1), Vec3::from(lr.e2), Vec3::from(lr.e3)];
    if Lattice::from_rows(vectors[0], vectors[1], vectors[2]).is_err() {
        return Err(schema("lattice_repr vectors are not a valid basis"));
    }

    let mut edges = Vec::with_capacity(doc.edges.len());
    for (idx, e) in doc.edges.iter().enumerate() {
        if e.src >= n || e.dst >= n {
            return Err(schema(format!("edge {idx} references a node outside 0..{n}")));
        }
        if !(e.dist.is_finite() && e.dist > 0.0) {
            return Err(schema(format!("edge {idx} has invalid dist")));
        }
        if e.designated.is_some_and(|m| m > 2 || e.src != e.dst) {
            return Err(schema(format!("edge {idx} has an invalid designated tag")));
        }
        let (angles, vec) = match doc.kind {
            GraphKind::Invariant => {
                if e.vec.is_some() {
                    return Err(IoError::KindMismatch(format!("invariant edge {idx} carries vec")));
                }
                let a = e.angles.ok_or_else(|| schema(format!("invariant edge {idx} lacks angles")))?;
                if !finite(&a) {
                    return Err(schema(format!("edge {idx} has non-finite angles")));
                }
                (Some(a), None)
            }
            GraphKind::Equivariant => {
                if e.angles.is_some() {
                    return Err(IoError::KindMismatch(format!("equivariant edge {idx} carries angles")));
                }
                let v = e.vec.ok_or_else(|| schema(format!("equivariant edge {idx} lacks vec")))?;
                if !finite(&v) || Vec3::from(v).norm() == 0.0 {
                    return Err(schema(format!("edge {idx} has an invalid vec")));
                }
                (None, Some(Vec3::from(v)))
            }
        };
        edges.push(Edge {
            src: e.src,
            dst: e.dst,
            image: ImageCoeff(e.image),
            dist: e.dist,
            angles,
            vec,
            designated: e.designated,
        });
    }

    if !edges.iter().any(|e| e.designated.is_some()) {
        infer_designated(&mut edges, &vectors, n);
    }
    let inferred_coeff = |m: usize| {
        edges
            .iter()
            .find(|e| e.designated == Some(m as u8))
            .map(|e| e.image)
            .unwrap_or_default()
    };
    let coeffs = [
        lr.c1.map(ImageCoeff).unwrap_or_else(|| inferred_coeff(0)),
        lr.c2.map(ImageCoeff).unwrap_or_else(|| inferred_coeff(1)),
        lr.c3.map(ImageCoeff).unwrap_or_else(|| inferred_coeff(2)),
    ];

    let per_node_radius = match doc.per_node_radius {
        Some(r) if r.len() == n && finite(&r) => r,
        Some(_) => return Err(schema("per_node_radius must have one finite entry per node")),
        None => {
            let mut r = vec![0.0f64; n];
            for e in edges.iter().filter(|e| e.designated.is_none()) {
                r[e.dst] = r[e.dst].max(e.dist);
            }
            r
        }
    };

    Ok(CrystalGraph {
        kind: doc.kind,
        atomic_numbers: doc.atomic_numbers,
        lattice_repr: LatticeRepresentation {
            diagnostics: lr.diagnostics.unwrap_or_default(),
            ..LatticeRepresentation::from_parts(vectors, coeffs)
        },
        edges,
        per_node_radius,
    })
}

fn infer_designated(edges: &mut [Edge], basis: &[Vec3; 3], n: usize) {
    let matches = |e: &Edge, m: usize| -> bool {
        let target = -basis[m];
        if (e.dist - target.norm()).abs() > 1e-9 * target.norm().max(1.0) {
            return false;
        }
        match (e.vec, e.angles) {
            (Some(v), _) => (v - target).norm() <= 1e-9 * target.norm().max(1.0),
            (None, Some(a)) => (0..3).all(|q| {
                angle_between(&target, &basis[q]).is_ok_and(|expect| (expect - a[q]).abs() <= 1e-9)
            }),
            _ => false,
        }
    };
    let mut chosen = vec![[None::<usize>; 3]; n];
    for (idx, e) in edges.iter().enumerate() {
        if e.src != e.dst {
            continue;
        }
        for (m, slot) in chosen[e.dst].iter_mut().enumerate() {
            if matches(e, m) {
                *slot = Some(idx);
            }
        }
    }
    for per_node in chosen {
        for (m, idx) in per_node.into_iter().enumerate() {
            if let Some(idx) = idx {
                edges[idx].designated = Some(m as u8);
            }
        }
    }
}
