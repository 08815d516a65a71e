//! Passive symmetries of periodic crystals, mirror images, and randomized
//! invariance checks of the graph construction.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{is_proper_rotation, random_rotation_with, Crystal, GeometryError, Lattice, Mat3, Vec3};
use crate::graph::{build_graph_unchecked, graph_deviation, GraphError, GraphKind};

pub type IntMatrix = [[i32; 3]; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymmetryError {
    #[error("rotation is not proper orthogonal")]
    ImproperRotation,
    #[error("integer matrix has determinant {0}, expected +1")]
    NonUnimodular(i64),
    #[error("mirror normal has zero length")]
    ZeroNormal,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    Isometry,
    OriginShift,
    Unimodular,
    Mirror,
}

impl TransformKind {
    pub const PASSIVE: [TransformKind; 3] = [TransformKind::Isometry, TransformKind::OriginShift, TransformKind::Unimodular];
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransformSpec {
    Isometry { rotation: Mat3, translation: Vec3 },
    OriginShift(Vec3),
    Unimodular(IntMatrix),
    Mirror(Vec3),
}

impl TransformSpec {
    pub fn kind(&self) -> TransformKind {
        match self {
            TransformSpec::Isometry { .. } => TransformKind::Isometry,
            TransformSpec::OriginShift(_) => TransformKind::OriginShift,
            TransformSpec::Unimodular(_) => TransformKind::Unimodular,
            TransformSpec::Mirror(_) => TransformKind::Mirror,
        }
    }

    pub fn apply(&self, crystal: &Crystal) -> Result<Crystal, SymmetryError> {
        match self {
            TransformSpec::Isometry { rotation, translation } => apply_isometry(crystal, rotation, translation),
            TransformSpec::OriginShift(t) => Ok(shift_origin(crystal, t)),
            TransformSpec::Unimodular(u) => apply_unimodular(crystal, u),
            TransformSpec::Mirror(n) => mirror(crystal, n),
        }
    }

    pub fn sample<R: Rng + ?Sized>(kind: TransformKind, rng: &mut R) -> TransformSpec {
        match kind {
            TransformKind::Isometry => TransformSpec::Isometry {
                rotation: random_rotation_with(rng),
                translation: Vec3::from_fn(|_, _| rng.random_range(-5.0..5.0)),
            },
            TransformKind::OriginShift => TransformSpec::OriginShift(Vec3::from_fn(|_, _| rng.random_range(0.0..1.0))),
            TransformKind::Unimodular => TransformSpec::Unimodular(random_unimodular(rng)),
            TransformKind::Mirror => TransformSpec::Mirror(random_unit_vector(rng)),
        }
    }
}

/// `(A, R·P + b, R·L)`: lattice rows and positions rotated, then translated.
pub fn apply_isometry(crystal: &Crystal, rotation: &Mat3, translation: &Vec3) -> Result<Crystal, SymmetryError> {
    if !is_proper_rotation(rotation, 1e-9) {
        return Err(SymmetryError::ImproperRotation);
    }
    let lattice = crystal.lattice.transformed(rotation)?;
    let positions = crystal.positions.iter().map(|p| rotation * p + translation).collect();
    Ok(Crystal::new(lattice, positions, crystal.species.clone())?)
}

/// Moves every atom by `t_frac·L` and wraps back into the cell.
pub fn shift_origin(crystal: &Crystal, t_frac: &Vec3) -> Crystal {
    let offset = crystal.lattice.frac_to_cart(t_frac);
    Crystal {
        lattice: crystal.lattice.clone(),
        positions: crystal.positions.iter().map(|p| p + offset).collect(),
        species: crystal.species.clone(),
    }
    .wrap_to_cell()
}

pub fn int_det(u: &IntMatrix) -> i64 {
    let m = u.map(|r| r.map(i64::from));
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Re-describes the same lattice with rows `U·L` and rewraps atoms into the new cell.
pub fn apply_unimodular(crystal: &Crystal, u: &IntMatrix) -> Result<Crystal, SymmetryError> {
    let det = int_det(u);
    if det != 1 {
        return Err(SymmetryError::NonUnimodular(det));
    }
    let um = Mat3::from_fn(|i, j| u[i][j] as f64);
    let lattice = Lattice::from_matrix(um * crystal.lattice.matrix())?;
    Ok(Crystal::new(lattice, crystal.positions.clone(), crystal.species.clone())?.wrap_to_cell())
}

/// Householder reflection `I - 2nnᵀ` applied to positions and lattice rows.
pub fn mirror(crystal: &Crystal, normal: &Vec3) -> Result<Crystal, SymmetryError> {
    let norm = normal.norm();
    if !(norm > 1e-12) {
        return Err(SymmetryError::ZeroNormal);
    }
    let n = normal / norm;
    let s = Mat3::identity() - 2.0 * n * n.transpose();
    let lattice = crystal.lattice.transformed(&s)?;
    let positions = crystal.positions.iter().map(|p| s * p).collect();
    Ok(Crystal::new(lattice, positions, crystal.species.clone())?)
}

pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::from_fn(|_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-8 {
            return v / n;
        }
    }
}

/// Product of random row shears and determinant-preserving swaps
/// (swap two rows, negate one), with every entry kept in `[-2, 2]`.
pub fn random_unimodular<R: Rng + ?Sized>(rng: &mut R) -> IntMatrix {
    let mut u: IntMatrix = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];
    let steps = rng.random_range(2..=6);
    let mut done = 0;
    let mut attempts = 0;
    while done < steps && attempts < 100 {
        attempts += 1;
        let a = rng.random_range(0..3);
        let b = (a + rng.random_range(1..3)) % 3;
        let mut next = u;
        if rng.random_bool(0.7) {
            let s = if rng.random_bool(0.5) { 1 } else { -1 };
            for j in 0..3 {
                next[a][j] += s * u[b][j];
            }
        } else {
            next.swap(a, b);
            for j in 0..3 {
                next[a][j] = -next[a][j];
            }
        }
        if next.iter().flatten().all(|x| x.abs() <= 2) {
            u = next;
            done += 1;
        }
    }
    u
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindReport {
    pub kind: TransformKind,
    pub passed: usize,
    pub failed: usize,
    pub worst_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzReport {
    pub passed: usize,
    pub failed: usize,
    pub worst_deviation: f64,
    pub per_kind: Vec<KindReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzOptions {
    pub kinds: Vec<TransformKind>,
    pub tol: f64,
    pub graph_kind: GraphKind,
}

impl Default for FuzzOptions {
    fn default() -> Self {
        FuzzOptions {
            kinds: TransformKind::PASSIVE.to_vec(),
            tol: 1e-9,
            graph_kind: GraphKind::Invariant,
        }
    }
}

impl FuzzOptions {
    pub fn with_mirror(mut self) -> Self {
        if !self.kinds.contains(&TransformKind::Mirror) {
            self.kinds.push(TransformKind::Mirror);
        }
        self
    }
}

/// Applies `trials` random transforms of each kind in `opts.kinds` and
/// compares graph fingerprints against the untransformed crystal. Build
/// failures on a transformed copy count as failures with infinite deviation.
pub fn fuzz_invariance(
    crystal: &Crystal,
    k: usize,
    trials: usize,
    seed: u64,
    opts: &FuzzOptions,
) -> Result<FuzzReport, GraphError> {
    let reference = build_graph_unchecked(crystal, k, opts.graph_kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_kind = Vec::new();
    for &kind in &opts.kinds {
        let mut rep = KindReport {
            kind,
            passed: 0,
            failed: 0,
            worst_deviation: 0.0,
        };
        for _ in 0..trials {
            let spec = TransformSpec::sample(kind, &mut rng);
            let dev = spec
                .apply(crystal)
                .ok()
                .and_then(|c| build_graph_unchecked(&c, k, opts.graph_kind).ok())
                .and_then(|g| graph_deviation(&reference, &g).ok())
                .unwrap_or(f64::INFINITY);
            if dev <= opts.tol {
                rep.passed += 1;
            } else {
                rep.failed += 1;
            }
            rep.worst_deviation = rep.worst_deviation.max(dev);
        }
        per_kind.push(rep);
    }
    Ok(FuzzReport {
        passed: per_kind.iter().map(|r| r.passed).sum(),
        failed: per_kind.iter().map(|r| r.failed).sum(),
        worst_deviation: per_kind.iter().map(|r| r.worst_deviation).fold(0.0, f64::max),
        per_kind,
    })
}

fn lattice_points_within(lattice: &Lattice, radius: f64) -> Vec<Vec3> {
    let widths = lattice.frac_widths();
    let reach: [i32; 3] = std::array::from_fn(|a| (radius * widths[a]).ceil() as i32);
    let mut out = Vec::new();
    for i in -reach[0]..=reach[0] {
        for j in -reach[1]..=reach[1] {
            for k in -reach[2]..=reach[2] {
                let v = lattice.frac_to_cart(&Vec3::new(i as f64, j as f64, k as f64));
                let n = v.norm();
                if n > 1e-12 && n <= radius {
                    out.push(v);
                }
            }
        }
    }
    out
}

fn congruent_mod_lattice(lattice: &Lattice, d: &Vec3, tol: f64) -> bool {
    let f = lattice.cart_to_frac(d);
    let base = d - lattice.frac_to_cart(&f.map(|x| x.round()));
    for a in -1..=1 {
        for b in -1..=1 {
            for c in -1..=1 {
                let v = base - lattice.frac_to_cart(&Vec3::new(a as f64, b as f64, c as f64));
                if v.norm() <= tol {
                    return true;
                }
            }
        }
    }
    false
}

/// Brute-force search for a proper rigid motion `x ↦ R·x + t` mapping the
/// infinite structure of `a` onto that of `b` within `tol` (Å).
///
/// Every basis of `b`'s lattice drawn from short vectors whose Gram matrix
/// matches the rows of `a` fixes a candidate `R`; each same-species atom of
/// `b` then fixes `t`. Independent of the graph code.
pub fn find_proper_isometry(a: &Crystal, b: &Crystal, tol: f64) -> Option<(Mat3, Vec3)> {
    if a.len() != b.len() || (a.lattice.volume() - b.lattice.volume()).abs() > tol * a.lattice.volume() {
        return None;
    }
    let mut sa = a.species.clone();
    let mut sb = b.species.clone();
    sa.sort_unstable();
    sb.sort_unstable();
    if sa != sb {
        return None;
    }

    let rows = a.lattice.rows();
    let lens = rows.map(|r| r.norm());
    let max_len = lens.iter().cloned().fold(0.0, f64::max);
    let pts = lattice_points_within(&b.lattice, max_len + tol);
    let pick = |m: usize| -> Vec<Vec3> { pts.iter().copied().filter(|v| (v.norm() - lens[m]).abs() <= tol).collect() };
    let (c0, c1, c2) = (pick(0), pick(1), pick(2));
    let ea = Mat3::from_columns(&rows);
    let ea_inv = ea.try_inverse()?;

    for f0 in &c0 {
        for f1 in &c1 {
            if (f0.dot(f1) - rows[0].dot(&rows[1])).abs() > tol * max_len {
                continue;
            }
            for f2 in &c2 {
                if (f0.dot(f2) - rows[0].dot(&rows[2])).abs() > tol * max_len
                    || (f1.dot(f2) - rows[1].dot(&rows[2])).abs() > tol * max_len
                {
                    continue;
                }
                let rot = Mat3::from_columns(&[*f0, *f1, *f2]) * ea_inv;
                if !is_proper_rotation(&rot, 1e-6) {
                    continue;
                }
                let anchor = rot * a.positions[0];
                for (j, q) in b.positions.iter().enumerate() {
                    if b.species[j] != a.species[0] {
                        continue;
                    }
                    let t = q - anchor;
                    let all = a.positions.iter().zip(&a.species).all(|(p, &z)| {
                        let image = rot * p + t;
                        b.positions
                            .iter()
                            .zip(&b.species)
                            .any(|(q2, &z2)| z2 == z && congruent_mod_lattice(&b.lattice, &(image - q2), tol))
                    });
                    if all {
                        return Some((rot, t));
                    }
                }
            }
        }
    }
    None
}

/// `true` when no proper rigid motion maps the crystal onto its mirror image.
pub fn is_chiral(crystal: &Crystal, tol: f64) -> bool {
    match mirror(crystal, &Vec3::z()) {
        Ok(m) => find_proper_isometry(crystal, &m, tol).is_none(),
        Err(_) => false,
    }
}
