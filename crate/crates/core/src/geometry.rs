//! Lattice algebra, periodic images, coordinate conversions and rigid alignment.
//!
//! Positions are stored in Cartesian Å; fractional coordinates are only a view
//! computed through [`Lattice::cart_to_frac`].

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Cells with `|det L|` at or below this volume (Å³) are not 3-periodic.
pub const MIN_CELL_VOLUME: f64 = 1e-10;

/// Fractional coordinates closer than this to the upper cell face wrap to the lower one.
pub const WRAP_EPS: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("singular lattice: |det L| = {0:e} Å³")]
    SingularLattice(f64),
    #[error("zero-length vector")]
    ZeroVector,
    #[error("point sets differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid crystal: {0}")]
    InvalidCrystal(String),
}

/// Integer coefficients `(k1, k2, k3)` of a periodic image `k1·ℓ1 + k2·ℓ2 + k3·ℓ3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct ImageCoeff(pub [i32; 3]);

impl ImageCoeff {
    pub const ZERO: ImageCoeff = ImageCoeff([0, 0, 0]);

    pub fn new(k1: i32, k2: i32, k3: i32) -> Self {
        ImageCoeff([k1, k2, k3])
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0, 0, 0]
    }

    pub fn as_vec3(&self) -> Vec3 {
        Vec3::new(self.0[0] as f64, self.0[1] as f64, self.0[2] as f64)
    }
}

impl std::ops::Neg for ImageCoeff {
    type Output = ImageCoeff;
    fn neg(self) -> ImageCoeff {
        ImageCoeff([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl std::ops::Add for ImageCoeff {
    type Output = ImageCoeff;
    fn add(self, o: ImageCoeff) -> ImageCoeff {
        ImageCoeff([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl std::ops::Sub for ImageCoeff {
    type Output = ImageCoeff;
    fn sub(self, o: ImageCoeff) -> ImageCoeff {
        ImageCoeff([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

/// Lattice matrix `L` whose rows are the translation vectors ℓ1, ℓ2, ℓ3.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    matrix: Mat3,
    // (Lᵀ)⁻¹, maps Cartesian to fractional
    to_frac: Mat3,
}

impl Lattice {
    pub fn new(rows: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        Self::from_matrix(Mat3::from_fn(|i, j| rows[i][j]))
    }

    pub fn from_rows(a: Vec3, b: Vec3, c: Vec3) -> Result<Self, GeometryError> {
        Self::from_matrix(Mat3::from_rows(&[a.transpose(), b.transpose(), c.transpose()]))
    }

    pub fn from_matrix(matrix: Mat3) -> Result<Self, GeometryError> {
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::SingularLattice(f64::NAN));
        }
        let det = matrix.determinant();
        if !(det.abs() > MIN_CELL_VOLUME) {
            return Err(GeometryError::SingularLattice(det));
        }
        let to_frac = matrix
            .transpose()
            .try_inverse()
            .ok_or(GeometryError::SingularLattice(det))?;
        Ok(Lattice { matrix, to_frac })
    }

    pub fn cubic(a: f64) -> Result<Self, GeometryError> {
        Self::new([[a, 0.0, 0.0], [0.0, a, 0.0], [0.0, 0.0, a]])
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.matrix
    }

    pub fn row(&self, i: usize) -> Vec3 {
        self.matrix.row(i).transpose()
    }

    pub fn rows(&self) -> [Vec3; 3] {
        [self.row(0), self.row(1), self.row(2)]
    }

    pub fn to_array(&self) -> [[f64; 3]; 3] {
        let m = &self.matrix;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    pub fn det(&self) -> f64 {
        self.matrix.determinant()
    }

    pub fn volume(&self) -> f64 {
        self.det().abs()
    }

    /// `f1·ℓ1 + f2·ℓ2 + f3·ℓ3`
    pub fn frac_to_cart(&self, frac: &Vec3) -> Vec3 {
        self.matrix.transpose() * frac
    }

    pub fn cart_to_frac(&self, cart: &Vec3) -> Vec3 {
        self.to_frac * cart
    }

    pub fn image_vector(&self, k: ImageCoeff) -> Vec3 {
        self.frac_to_cart(&k.as_vec3())
    }

    /// Norms of the rows of `(Lᵀ)⁻¹`. A sphere of radius `r` spans at most
    /// `r·widths[a]` in fractional coordinate `a`.
    pub fn frac_widths(&self) -> [f64; 3] {
        let m = &self.to_frac;
        [m.row(0).norm(), m.row(1).norm(), m.row(2).norm()]
    }

    /// Condition number of `L` in the 2-norm.
    pub fn condition_number(&self) -> f64 {
        let sv = self.matrix.singular_values();
        sv.max() / sv.min()
    }

    /// Lattice with every row transformed by `m` (row ℓ ↦ m·ℓ).
    pub fn transformed(&self, m: &Mat3) -> Result<Lattice, GeometryError> {
        Lattice::from_matrix(self.matrix * m.transpose())
    }
}

/// Unit cell `(A, P, L)`: species, Cartesian positions and lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Crystal {
    pub lattice: Lattice,
    pub positions: Vec<Vec3>,
    pub species: Vec<u8>,
}

impl Crystal {
    pub fn new(lattice: Lattice, positions: Vec<Vec3>, species: Vec<u8>) -> Result<Self, GeometryError> {
        if positions.is_empty() {
            return Err(GeometryError::InvalidCrystal("crystal has no atoms".into()));
        }
        if positions.len() != species.len() {
            return Err(GeometryError::InvalidCrystal(format!(
                "{} positions but {} species",
                positions.len(),
                species.len()
            )));
        }
        if let Some(i) = positions.iter().position(|p| p.iter().any(|x| !x.is_finite())) {
            return Err(GeometryError::InvalidCrystal(format!("position {i} is not finite")));
        }
        if let Some(&z) = species.iter().find(|&&z| z == 0 || z > 118) {
            return Err(GeometryError::InvalidCrystal(format!("atomic number {z} outside 1..=118")));
        }
        Ok(Crystal { lattice, positions, species })
    }

    /// Builds a crystal from fractional coordinates.
    pub fn from_fractional(lattice: Lattice, frac: &[Vec3], species: Vec<u8>) -> Result<Self, GeometryError> {
        let positions = frac.iter().map(|f| lattice.frac_to_cart(f)).collect();
        Crystal::new(lattice, positions, species)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn frac_positions(&self) -> Vec<Vec3> {
        self.positions.iter().map(|p| self.lattice.cart_to_frac(p)).collect()
    }

    /// Moves every atom by an integer lattice combination so its fractional
    /// coordinates fall in `[-WRAP_EPS, 1 - WRAP_EPS)`. Idempotent.
    pub fn wrap_to_cell(&self) -> Crystal {
        let positions = self
            .positions
            .iter()
            .map(|p| {
                let f = self.lattice.cart_to_frac(p);
                let shift = f.map(|x| (x + WRAP_EPS).floor());
                if shift.iter().all(|&s| s == 0.0) {
                    *p
                } else {
                    p - self.lattice.frac_to_cart(&shift)
                }
            })
            .collect();
        Crystal {
            lattice: self.lattice.clone(),
            positions,
            species: self.species.clone(),
        }
    }
}

/// Angle in `[0, π]` between two vectors. Uses `atan2(|a×b|, a·b)`, which
/// stays accurate near 0 and π where the arccosine loses half its digits.
pub fn angle_between(a: &Vec3, b: &Vec3) -> Result<f64, GeometryError> {
    let na = a.norm();
    let nb = b.norm();
    if !(na > 1e-12 && nb > 1e-12) {
        return Err(GeometryError::ZeroVector);
    }
    let (ua, ub) = (a / na, b / nb);
    Ok(ua.cross(&ub).norm().atan2(ua.dot(&ub)))
}

/// Result of a proper rigid superposition `y ≈ R·x + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub rmsd: f64,
}

impl Alignment {
    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }
}

/// Kabsch superposition restricted to proper rotations (det R = +1), so a
/// mirror image never aligns onto its original.
pub fn kabsch_align(x: &[Vec3], y: &[Vec3]) -> Result<Alignment, GeometryError> {
    if x.len() != y.len() {
        return Err(GeometryError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(GeometryError::LengthMismatch(0, 0));
    }
    let n = x.len() as f64;
    let cx = x.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
    let cy = y.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;

    let mut h = Mat3::zeros();
    for (p, q) in x.iter().zip(y) {
        h += (p - cx) * (q - cy).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("svd u");
    let v = svd.v_t.expect("svd v_t").transpose();
    let d = (v * u.transpose()).determinant().signum();
    let d = if d == 0.0 { 1.0 } else { d };
    let correction = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d));
    let rotation = v * correction * u.transpose();
    let translation = cy - rotation * cx;

    let sq: f64 = x
        .iter()
        .zip(y)
        .map(|(p, q)| (rotation * p + translation - q).norm_squared())
        .sum();
    Ok(Alignment {
        rotation,
        translation,
        rmsd: (sq / n).sqrt(),
    })
}

/// Uniformly distributed proper rotation from a normalized Gaussian quaternion.
pub fn random_rotation(seed: u64) -> Mat3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_rotation_with(&mut rng)
}

pub fn random_rotation_with<R: rand::Rng + ?Sized>(rng: &mut R) -> Mat3 {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        let quat = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
        return UnitQuaternion::from_quaternion(quat).to_rotation_matrix().into_inner();
    }
}

/// `true` when `m` is orthogonal with determinant +1 within `tol`.
pub fn is_proper_rotation(m: &Mat3, tol: f64) -> bool {
    let ortho = (m.transpose() * m - Mat3::identity()).amax() <= tol;
    ortho && (m.determinant() - 1.0).abs() <= tol
}
