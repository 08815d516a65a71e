//! Deterministic test crystals: cubic, orthorhombic and random triclinic
//! cells, a chiral helix, a two-cluster cell that is disconnected at small k,
//! and supercells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Crystal, Lattice, Mat3, Vec3};
use crate::lattice_repr::build_lattice_representation;
use crate::symmetry::is_chiral;

/// Cell volume per atom for random families (Å³).
pub const VOLUME_PER_ATOM: f64 = 12.0;
/// Minimum periodic distance between generated atoms (Å).
pub const MIN_SEPARATION: f64 = 0.5;
pub const MAX_CONDITION: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FixtureError {
    #[error("invalid fixture spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    Cubic,
    Orthorhombic,
    TriclinicRandom,
    ChiralHelix,
    TwoCluster,
    Supercell { base: Box<FixtureSpec>, factor: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    #[serde(flatten)]
    pub family: Family,
    pub n_atoms: usize,
    pub seed: u64,
    /// Standard deviation of Gaussian noise added to every position (Å).
    #[serde(default)]
    pub jitter: f64,
}

impl FixtureSpec {
    pub fn new(family: Family, n_atoms: usize, seed: u64) -> Self {
        FixtureSpec {
            family,
            n_atoms,
            seed,
            jitter: 0.0,
        }
    }

    pub fn supercell(base: FixtureSpec, factor: usize) -> Self {
        let n = base.n_atoms * factor.pow(3);
        let seed = base.seed;
        FixtureSpec::new(
            Family::Supercell {
                base: Box::new(base),
                factor,
            },
            n,
            seed,
        )
    }

    pub fn name(&self) -> String {
        match &self.family {
            Family::Cubic => format!("cubic-n{}-s{}", self.n_atoms, self.seed),
            Family::Orthorhombic => format!("orthorhombic-n{}-s{}", self.n_atoms, self.seed),
            Family::TriclinicRandom => format!("triclinic-n{}-s{}", self.n_atoms, self.seed),
            Family::ChiralHelix => format!("chiral-helix-n{}-s{}", self.n_atoms, self.seed),
            Family::TwoCluster => format!("two-cluster-n{}-s{}", self.n_atoms, self.seed),
            Family::Supercell { base, factor } => format!("supercell{factor}-{}", base.name()),
        }
    }
}

fn invalid(msg: impl Into<String>) -> FixtureError {
    FixtureError::InvalidSpec(msg.into())
}

pub fn generate(spec: &FixtureSpec) -> Result<Crystal, FixtureError> {
    if !(spec.jitter >= 0.0 && spec.jitter.is_finite()) {
        return Err(invalid("jitter must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let crystal = match &spec.family {
        Family::Cubic => cubic(spec.n_atoms, &mut rng)?,
        Family::Orthorhombic => {
            let ratios = Vec3::from_fn(|_, _| rng.random_range(0.75..1.35));
            random_cell(Mat3::from_diagonal(&ratios), spec.n_atoms, &mut rng)?
        }
        Family::TriclinicRandom => {
            let shape = triclinic_shape(&mut rng);
            random_cell(shape, spec.n_atoms, &mut rng)?
        }
        Family::ChiralHelix => chiral_helix(spec.n_atoms, &mut rng)?,
        Family::TwoCluster => two_cluster(spec.n_atoms, &mut rng)?,
        Family::Supercell { base, factor } => {
            let base_crystal = generate(base)?;
            if *factor < 1 {
                return Err(invalid("supercell factor must be at least 1"));
            }
            if spec.n_atoms != base_crystal.len() * factor.pow(3) {
                return Err(invalid("n_atoms must equal base atoms times factor³"));
            }
            supercell(&base_crystal, *factor)
        }
    };
    if spec.jitter > 0.0 {
        let noise = Normal::new(0.0, spec.jitter).expect("valid normal");
        let positions = crystal
            .positions
            .iter()
            .map(|p| p + Vec3::from_fn(|_, _| noise.sample(&mut rng)))
            .collect();
        return Crystal::new(crystal.lattice, positions, crystal.species).map_err(|e| invalid(e.to_string()));
    }
    Ok(crystal)
}

fn random_species<R: Rng>(rng: &mut R) -> u8 {
    rng.random_range(1..=83)
}

/// Smallest distance between `p` and any image of `q` under a reduced basis.
fn periodic_distance(reduced: &Lattice, p: &Vec3, q: &Vec3) -> f64 {
    let d = p - q;
    let f = reduced.cart_to_frac(&d);
    let base = d - reduced.frac_to_cart(&f.map(|x| x.round()));
    let mut best = f64::INFINITY;
    for a in -1..=1 {
        for b in -1..=1 {
            for c in -1..=1 {
                let v = base - reduced.frac_to_cart(&Vec3::new(a as f64, b as f64, c as f64));
                best = best.min(v.norm());
            }
        }
    }
    best
}

fn scaled(shape: Mat3, n: usize) -> Result<Lattice, FixtureError> {
    let det = shape.determinant().abs();
    let s = (VOLUME_PER_ATOM * n as f64 / det).cbrt();
    Lattice::from_matrix(shape * s).map_err(|e| invalid(e.to_string()))
}

/// Rows of `(I + S)·diag(lengths)` with off-diagonal `S` entries in
/// `[-0.35, 0.35]`, rejected until the condition number is at most 20.
fn triclinic_shape<R: Rng>(rng: &mut R) -> Mat3 {
    loop {
        let skew = Mat3::from_fn(|i, j| if i == j { 0.0 } else { rng.random_range(-0.35..0.35) });
        let lengths = Vec3::from_fn(|_, _| rng.random_range(0.75..1.35));
        let m = (Mat3::identity() + skew) * Mat3::from_diagonal(&lengths);
        if let Ok(l) = Lattice::from_matrix(m) {
            if l.condition_number() <= MAX_CONDITION {
                return m;
            }
        }
    }
}

fn random_cell<R: Rng>(shape: Mat3, n: usize, rng: &mut R) -> Result<Crystal, FixtureError> {
    if n == 0 {
        return Err(invalid("n_atoms must be at least 1"));
    }
    let lattice = scaled(shape, n)?;
    let repr = build_lattice_representation(&lattice).map_err(|e| invalid(e.to_string()))?;
    if repr.vectors[0].norm() < 2.0 * MIN_SEPARATION {
        return Err(invalid("cell too thin for the minimum separation"));
    }
    let reduced = repr.lattice();
    let mut positions: Vec<Vec3> = Vec::with_capacity(n);
    let mut attempts = 0;
    while positions.len() < n {
        attempts += 1;
        if attempts > 200_000 {
            return Err(invalid("could not place atoms at the minimum separation"));
        }
        let f = Vec3::from_fn(|_, _| rng.random_range(0.0..1.0));
        let p = lattice.frac_to_cart(&f);
        if positions.iter().all(|q| periodic_distance(&reduced, &p, q) >= MIN_SEPARATION) {
            positions.push(p);
        }
    }
    let species = (0..n).map(|_| random_species(rng)).collect();
    Crystal::new(lattice, positions, species).map_err(|e| invalid(e.to_string()))
}

fn cubic<R: Rng>(n: usize, rng: &mut R) -> Result<Crystal, FixtureError> {
    if n == 1 {
        let lattice = Lattice::cubic(3.35).expect("valid cubic cell");
        return Crystal::new(lattice, vec![Vec3::zeros()], vec![84]).map_err(|e| invalid(e.to_string()));
    }
    random_cell(Mat3::identity(), n, rng)
}

/// One helical turn of `n` atoms along a slightly sheared c axis. Screw
/// handedness plus the generic cell rule out any improper symmetry; the
/// result is checked with the brute-force isometry oracle.
fn chiral_helix<R: Rng>(n: usize, rng: &mut R) -> Result<Crystal, FixtureError> {
    if n < 3 {
        return Err(invalid("chiral helix needs at least 3 atoms"));
    }
    let radius = 1.2;
    let rise = 1.2;
    let c = rise * n as f64;
    let a = 4.0 + rng.random_range(-0.1..0.1);
    let gamma = (80.0 + rng.random_range(-3.0..3.0f64)).to_radians();
    let b = 4.3 + rng.random_range(-0.1..0.1);
    let lattice = Lattice::new([
        [a, 0.0, 0.0],
        [b * gamma.cos(), b * gamma.sin(), 0.0],
        [0.35 + rng.random_range(-0.05..0.05), 0.25 + rng.random_range(-0.05..0.05), c],
    ])
    .map_err(|e| invalid(e.to_string()))?;
    let center = Vec3::new(2.0, 2.0, 0.0);
    let positions = (0..n)
        .map(|t| {
            let phi = std::f64::consts::TAU * t as f64 / n as f64;
            center + Vec3::new(radius * phi.cos(), radius * phi.sin(), rise * t as f64)
        })
        .collect();
    let species = (0..n).map(|t| [6u8, 7, 8, 16][t % 4]).collect();
    let crystal = Crystal::new(lattice, positions, species).map_err(|e| invalid(e.to_string()))?;
    if !is_chiral(&crystal, 1e-4) {
        return Err(invalid("generated helix has an improper symmetry"));
    }
    Ok(crystal)
}

/// Two rings of `n/2` atoms (neighbor spacing 1 Å) about 8.7 Å apart in a
/// roughly 10 Å orthorhombic cell. With k = 2 every atom only sees its ring.
fn two_cluster<R: Rng>(n: usize, rng: &mut R) -> Result<Crystal, FixtureError> {
    if !(6..=16).contains(&n) || !n.is_multiple_of(2) {
        return Err(invalid("two-cluster needs an even atom count in 6..=16"));
    }
    let g = n / 2;
    let ring = 0.5 / (std::f64::consts::PI / g as f64).sin();
    let lattice = Lattice::new([[10.0, 0.0, 0.0], [0.0, 10.4, 0.0], [0.0, 0.0, 9.7]]).expect("valid cell");
    let centers = [Vec3::new(1.5, 1.5, 1.5), Vec3::new(6.5, 6.7, 6.35)];
    let mut positions = Vec::with_capacity(n);
    for c in centers {
        let phase: f64 = rng.random_range(0.0..1.0);
        for t in 0..g {
            let phi = std::f64::consts::TAU * (t as f64 + phase) / g as f64;
            positions.push(c + Vec3::new(ring * phi.cos(), ring * phi.sin(), 0.0));
        }
    }
    let species = (0..n).map(|_| random_species(rng)).collect();
    Crystal::new(lattice, positions, species).map_err(|e| invalid(e.to_string()))
}

/// `factor³` copies of the cell; atoms ordered cell by cell.
pub fn supercell(base: &Crystal, factor: usize) -> Crystal {
    let f = factor as f64;
    let lattice = Lattice::from_matrix(base.lattice.matrix() * f).expect("scaled lattice stays regular");
    let mut positions = Vec::with_capacity(base.len() * factor.pow(3));
    let mut species = Vec::with_capacity(positions.capacity());
    for i in 0..factor {
        for j in 0..factor {
            for k in 0..factor {
                let shift = base.lattice.frac_to_cart(&Vec3::new(i as f64, j as f64, k as f64));
                for (p, &z) in base.positions.iter().zip(&base.species) {
                    positions.push(p + shift);
                    species.push(z);
                }
            }
        }
    }
    Crystal {
        lattice,
        positions,
        species,
    }
}

/// Named fixtures written by the `fixtures` command.
pub fn standard_fixtures(seed: u64) -> Vec<FixtureSpec> {
    vec![
        FixtureSpec::new(Family::Cubic, 1, seed),
        FixtureSpec::new(Family::Cubic, 8, seed),
        FixtureSpec::new(Family::Orthorhombic, 6, seed),
        FixtureSpec::new(Family::TriclinicRandom, 5, seed),
        FixtureSpec::new(Family::TriclinicRandom, 12, seed + 1),
        FixtureSpec::new(Family::ChiralHelix, 4, seed),
        FixtureSpec::new(Family::TwoCluster, 6, seed),
        FixtureSpec::supercell(FixtureSpec::new(Family::TriclinicRandom, 4, seed), 2),
    ]
}
