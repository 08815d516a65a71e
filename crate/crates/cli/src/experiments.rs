//! Desk-scale experiments: frozen-feature readout on synthetic crystals and
//! wall-clock scaling of graph construction plus a forward pass.

use std::time::Instant;

use comformer_core::elements::atomic_mass;
use comformer_core::fixtures::{generate, Family, FixtureSpec};
use comformer_core::graph::{build_graph, periodic_knn};
use comformer_core::{Crystal, CrystalGraph};
use comformer_model::nn::Matrix;
use comformer_model::{fit_readout_ridge, r_squared, Model, ModelConfig, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct ReadoutSettings {
    pub n_crystals: usize,
    pub max_atoms: usize,
    /// Atomic numbers the synthetic crystals draw from.
    pub palette: Vec<u8>,
    /// Neighbors per node in the graphs fed to the model.
    pub k: usize,
    /// Neighbors per atom defining the bond-angle target.
    pub target_neighbors: usize,
    pub hidden_dim: usize,
    /// Leading crystals whose batch statistics set the running ones.
    pub calibration: usize,
    pub train: usize,
    pub validation: usize,
    pub lambdas: Vec<f64>,
    pub seed: u64,
}

impl Default for ReadoutSettings {
    fn default() -> Self {
        ReadoutSettings {
            n_crystals: 2000,
            max_atoms: 8,
            palette: vec![3, 8, 13, 26],
            k: 4,
            target_neighbors: 4,
            hidden_dim: 64,
            calibration: 300,
            train: 1200,
            validation: 300,
            lambdas: vec![1e-6, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1e3, 1e4],
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TargetScore {
    pub target: String,
    pub full_r2: f64,
    pub ablation_r2: f64,
    pub full_lambda: f64,
    pub ablation_lambda: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReadoutReport {
    pub settings: ReadoutSettings,
    pub density: TargetScore,
    pub bond_angle: TargetScore,
    pub feature_dim: usize,
}

/// `Σ m_Z / |det L|` in amu per Å³.
pub fn mass_density(c: &Crystal) -> f64 {
    let mass: f64 = c.species.iter().map(|&z| atomic_mass(z).unwrap_or(0.0)).sum();
    mass / c.lattice.volume()
}

/// Mean over atoms of the mean cosine between pairs of bonds to the `k`
/// nearest neighbors (ties at the k-th distance included).
pub fn mean_neighbor_cosine(c: &Crystal, k: usize) -> Result<f64, CliError> {
    let lists = periodic_knn(c, k)?;
    let mut total = 0.0;
    for l in &lists {
        let dirs: Vec<_> = l.neighbors.iter().map(|n| n.vec.normalize()).collect();
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for a in 0..dirs.len() {
            for b in a + 1..dirs.len() {
                sum += dirs[a].dot(&dirs[b]);
                pairs += 1;
            }
        }
        total += if pairs == 0 { 0.0 } else { sum / pairs as f64 };
    }
    Ok(total / lists.len() as f64)
}

/// Random triclinic and orthorhombic cells at the fixture volume per atom,
/// with species relabeled onto the palette.
pub fn synthetic_crystals(s: &ReadoutSettings) -> Result<Vec<Crystal>, CliError> {
    if s.palette.is_empty() || s.max_atoms == 0 {
        return Err(CliError::Input("palette and max_atoms must be nonempty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut out = Vec::with_capacity(s.n_crystals);
    while out.len() < s.n_crystals {
        let n = rng.random_range(1..=s.max_atoms);
        let family = if rng.random_bool(0.5) { Family::TriclinicRandom } else { Family::Orthorhombic };
        let Ok(c) = generate(&FixtureSpec::new(family, n, rng.random())) else { continue };
        let species = c.species.iter().map(|_| s.palette[rng.random_range(0..s.palette.len())]).collect();
        out.push(Crystal::new(c.lattice, c.positions, species).map_err(|e| CliError::Input(e.to_string()))?);
    }
    Ok(out)
}

fn featurize_all(model: &Model, graphs: &[CrystalGraph]) -> Result<Matrix, CliError> {
    let rows: Vec<Vec<f64>> = graphs.par_iter().map(|g| model.featurize(g)).collect::<Result<_, _>>()?;
    let p = rows.first().map_or(0, Vec::len);
    Ok(Matrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
}

/// Picks λ on the validation block, refits on train plus validation and
/// scores the remaining rows. Returns `(test R², λ)`.
fn held_out_r2(features: &Matrix, y: &[f64], s: &ReadoutSettings) -> Result<(f64, f64), CliError> {
    let (tr, va) = (s.train, s.validation);
    let test = features.nrows() - tr - va;
    let mut best = (f64::NEG_INFINITY, s.lambdas[0]);
    for &lambda in &s.lambdas {
        let r = fit_readout_ridge(&features.rows(0, tr).into_owned(), &y[..tr], lambda)?;
        let score = r_squared(&r.predict(&features.rows(tr, va).into_owned()), &y[tr..tr + va]);
        if score > best.0 {
            best = (score, lambda);
        }
    }
    let r = fit_readout_ridge(&features.rows(0, tr + va).into_owned(), &y[..tr + va], best.1)?;
    let pred = r.predict(&features.rows(tr + va, test).into_owned());
    Ok((r_squared(&pred, &y[tr + va..]), best.1))
}

/// Equivariant model with seeded random weights, its distance-only ablation,
/// and one ridge readout per target on top of each.
pub fn run_readout_experiment(s: &ReadoutSettings) -> Result<ReadoutReport, CliError> {
    if s.train + s.validation >= s.n_crystals || s.train == 0 || s.validation == 0 || s.lambdas.is_empty() {
        return Err(CliError::Input("train and validation blocks must leave a test block".into()));
    }
    let crystals = synthetic_crystals(s)?;
    let density: Vec<f64> = crystals.iter().map(mass_density).collect();
    let angle: Vec<f64> =
        crystals.par_iter().map(|c| mean_neighbor_cosine(c, s.target_neighbors)).collect::<Result<_, _>>()?;
    let graphs: Vec<CrystalGraph> = crystals
        .par_iter()
        .map(|c| build_graph(c, s.k, Variant::Equivariant.graph_kind()).map_err(CliError::from))
        .collect::<Result<_, _>>()?;

    let cfg = ModelConfig { hidden_dim: s.hidden_dim, ..Default::default() }.with_seed(s.seed);
    let mut model = Model::new(cfg, Variant::Equivariant)?;
    model.calibrate(&graphs[..s.calibration.min(graphs.len())])?;
    let ablation = model.distance_only();
    let full = featurize_all(&model, &graphs)?;
    let abl = featurize_all(&ablation, &graphs)?;

    let score = |name: &str, y: &[f64]| -> Result<TargetScore, CliError> {
        let (full_r2, full_lambda) = held_out_r2(&full, y, s)?;
        let (ablation_r2, ablation_lambda) = held_out_r2(&abl, y, s)?;
        Ok(TargetScore { target: name.into(), full_r2, ablation_r2, full_lambda, ablation_lambda })
    };
    Ok(ReadoutReport {
        settings: s.clone(),
        density: score("mass density", &density)?,
        bond_angle: score("mean neighbor bond cosine", &angle)?,
        feature_dim: full.ncols(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingRow {
    pub n_atoms: usize,
    pub k: usize,
    pub edges: usize,
    pub build_seconds: f64,
    pub forward_seconds: f64,
    pub total_seconds: f64,
}

/// Fastest of `repeats` runs of graph construction and of one forward pass.
pub fn time_pipeline(crystal: &Crystal, k: usize, model: &Model, repeats: usize) -> Result<TimingRow, CliError> {
    let kind = model.variant.graph_kind();
    let mut build = f64::INFINITY;
    let mut forward = f64::INFINITY;
    let mut edges = 0;
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        let g = build_graph(crystal, k, kind)?;
        build = build.min(t.elapsed().as_secs_f64());
        let t = Instant::now();
        std::hint::black_box(model.forward(&g)?);
        forward = forward.min(t.elapsed().as_secs_f64());
        edges = g.edges.len();
    }
    Ok(TimingRow { n_atoms: crystal.len(), k, edges, build_seconds: build, forward_seconds: forward, total_seconds: build + forward })
}

/// Triclinic cell of `n` atoms at the fixture density.
pub fn bench_crystal(n: usize, seed: u64) -> Result<Crystal, CliError> {
    let mut s = seed;
    loop {
        match generate(&FixtureSpec::new(Family::TriclinicRandom, n, s)) {
            Ok(c) => return Ok(c),
            Err(_) if s < seed + 100 => s += 1,
            Err(e) => return Err(e.into()),
        }
    }
}
