//! Periodic-invariant, handedness-aware lattice representation `{e1, e2, e3}`.
//!
//! Selection: `e1` is the shortest lattice vector, `e2` the next shortest one
//! not collinear with `e1` (negated when its angle to `e1` exceeds 90°), `e3`
//! the next shortest one not coplanar with `e1, e2` (same flip against `e1`).
//! If the triple is left-handed all three are negated.
//!
//! Equal lengths are broken deterministically: candidates whose lengths agree
//! within [`LENGTH_TIE_RTOL`] are ordered by their [`ImageCoeff`] in
//! descending lexicographic order. Because the coefficients depend on the cell
//! description, inputs where such a tie decides the outcome are reported in
//! [`TieDiagnostics`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ImageCoeff, Lattice, Vec3};

pub const COLLINEAR_TOL: f64 = 1e-8;
pub const COPLANAR_TOL: f64 = 1e-8;
pub const LENGTH_TIE_RTOL: f64 = 1e-9;
/// `|cos|` below this counts as a right angle for the flip rule diagnostics.
pub const RIGHT_ANGLE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeReprError {
    #[error("could not find three independent lattice vectors")]
    DegenerateLattice,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeVector {
    pub vector: Vec3,
    pub coeff: ImageCoeff,
    pub length: f64,
}

/// Which selection steps were decided by the coefficient tie-break rather than geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TieDiagnostics {
    /// A non-parallel candidate had the same length as a selected vector.
    pub length_tie: bool,
    /// `e2` or `e3` is perpendicular to `e1`, so its sign came from the tie-break.
    pub right_angle: bool,
}

impl TieDiagnostics {
    pub fn is_degenerate(&self) -> bool {
        self.length_tie || self.right_angle
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeRepresentation {
    pub vectors: [Vec3; 3],
    pub coeffs: [ImageCoeff; 3],
    pub diagnostics: TieDiagnostics,
}

impl LatticeRepresentation {
    /// Builds a representation from explicit vectors, e.g. when reading a graph file.
    pub fn from_parts(vectors: [Vec3; 3], coeffs: [ImageCoeff; 3]) -> Self {
        LatticeRepresentation {
            vectors,
            coeffs,
            diagnostics: TieDiagnostics::default(),
        }
    }

    pub fn triple_product(&self) -> f64 {
        let [a, b, c] = &self.vectors;
        a.dot(&b.cross(c))
    }

    /// Determinant of the integer coefficient matrix; ±1 when `{e1, e2, e3}`
    /// generates the same lattice as the input cell.
    pub fn coefficient_det(&self) -> i64 {
        let m: Vec<[i64; 3]> = self
            .coeffs
            .iter()
            .map(|c| [c.0[0] as i64, c.0[1] as i64, c.0[2] as i64])
            .collect();
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn lattice(&self) -> Lattice {
        Lattice::from_rows(self.vectors[0], self.vectors[1], self.vectors[2])
            .expect("lattice representation vectors are independent")
    }
}

fn canonical_sort(v: &mut [LatticeVector]) {
    v.sort_by(|a, b| a.length.total_cmp(&b.length).then(b.coeff.cmp(&a.coeff)));
    let mut start = 0;
    while start < v.len() {
        let limit = v[start].length * (1.0 + LENGTH_TIE_RTOL);
        let mut end = start + 1;
        while end < v.len() && v[end].length <= limit {
            end += 1;
        }
        v[start..end].sort_by_key(|e| std::cmp::Reverse(e.coeff));
        start = end;
    }
}

/// All nonzero lattice vectors with length `<= radius`, in canonical order.
pub fn enumerate_within(lattice: &Lattice, radius: f64) -> Vec<LatticeVector> {
    let widths = lattice.frac_widths();
    let bound = |a: usize| (radius * widths[a]).ceil() as i32;
    let (n1, n2, n3) = (bound(0), bound(1), bound(2));
    let rows = lattice.rows();
    let mut out = Vec::new();
    for k1 in -n1..=n1 {
        let v1 = rows[0] * k1 as f64;
        for k2 in -n2..=n2 {
            let v12 = v1 + rows[1] * k2 as f64;
            for k3 in -n3..=n3 {
                if k1 == 0 && k2 == 0 && k3 == 0 {
                    continue;
                }
                let v = v12 + rows[2] * k3 as f64;
                let length = v.norm();
                if length <= radius {
                    out.push(LatticeVector {
                        vector: v,
                        coeff: ImageCoeff::new(k1, k2, k3),
                        length,
                    });
                }
            }
        }
    }
    canonical_sort(&mut out);
    out
}

/// The `count` shortest nonzero lattice vectors in canonical order. The search
/// sphere grows until it provably contains all of them.
pub fn enumerate_lattice_vectors(lattice: &Lattice, count: usize) -> Vec<LatticeVector> {
    if count == 0 {
        return Vec::new();
    }
    let mut radius = lattice.volume().cbrt();
    loop {
        let mut found = enumerate_within(lattice, radius);
        if found.len() >= count && found[count - 1].length * (1.0 + LENGTH_TIE_RTOL) <= radius {
            found.truncate(count);
            return found;
        }
        radius *= 1.5;
    }
}

fn unit(v: &Vec3) -> Vec3 {
    v / v.norm()
}

fn collinear(a: &Vec3, b: &Vec3) -> bool {
    unit(a).cross(&unit(b)).norm() <= COLLINEAR_TOL
}

fn coplanar(a: &Vec3, b: &Vec3, c: &Vec3) -> bool {
    unit(a).dot(&unit(b).cross(&unit(c))).abs() <= COPLANAR_TOL
}

struct Selection {
    picks: [usize; 3],
}

fn select(cands: &[LatticeVector]) -> Option<Selection> {
    let first = 0;
    let e1 = cands.first()?.vector;
    let second = cands.iter().position(|c| !collinear(&e1, &c.vector))?;
    let e2 = cands[second].vector;
    let third = cands.iter().position(|c| !coplanar(&e1, &e2, &c.vector))?;
    Some(Selection {
        picks: [first, second, third],
    })
}

/// Builds `{e1, e2, e3}` for a lattice. The result depends only on the lattice
/// point set (up to the documented tie-break) and rotates with the cell.
pub fn build_lattice_representation(lattice: &Lattice) -> Result<LatticeRepresentation, LatticeReprError> {
    let mut radius = lattice.volume().cbrt();
    let max_row = lattice.rows().iter().map(|r| r.norm()).fold(0.0, f64::max);
    for _ in 0..64 {
        let cands = enumerate_within(lattice, radius);
        if let Some(sel) = select(&cands) {
            let third = &cands[sel.picks[2]];
            if third.length * (1.0 + LENGTH_TIE_RTOL) <= radius {
                return Ok(finish(&cands, &sel));
            }
        }
        if radius > 4.0 * max_row {
            break;
        }
        radius *= 1.5;
    }
    Err(LatticeReprError::DegenerateLattice)
}

fn finish(cands: &[LatticeVector], sel: &Selection) -> LatticeRepresentation {
    let [i1, i2, i3] = sel.picks;
    let mut e = [cands[i1].vector, cands[i2].vector, cands[i3].vector];
    let mut c = [cands[i1].coeff, cands[i2].coeff, cands[i3].coeff];

    let mut diagnostics = TieDiagnostics::default();
    let tied = |idx: usize, admissible: &dyn Fn(&Vec3) -> bool| {
        let chosen = &cands[idx];
        cands.iter().enumerate().any(|(j, other)| {
            j != idx
                && (other.length - chosen.length).abs() <= LENGTH_TIE_RTOL * chosen.length
                && admissible(&other.vector)
                && !collinear(&other.vector, &chosen.vector)
        })
    };
    let (e1, e2) = (e[0], e[1]);
    diagnostics.length_tie = tied(i1, &|_| true)
        || tied(i2, &|v| !collinear(&e1, v))
        || tied(i3, &|v| !coplanar(&e1, &e2, v));

    for m in 1..3 {
        let cos = e[m].dot(&e[0]) / (e[m].norm() * e[0].norm());
        if cos.abs() < RIGHT_ANGLE_TOL {
            diagnostics.right_angle = true;
        }
        // strictly larger than 90°
        if cos < 0.0 {
            e[m] = -e[m];
            c[m] = -c[m];
        }
    }
    if e[0].dot(&e[1].cross(&e[2])) < 0.0 {
        for m in 0..3 {
            e[m] = -e[m];
            c[m] = -c[m];
        }
    }
    LatticeRepresentation {
        vectors: e,
        coeffs: c,
        diagnostics,
    }
}
