//! Initial node and edge features.
//!
//! Nodes look up a 119-row species table (row 0 unused) and project it to the
//! hidden width. Edge lengths become `c / d` on a Gaussian basis, angles
//! become their cosines on a second basis; each is followed by a linear map
//! and softplus.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{ModelConfig, RbfSpec};
use crate::error::ModelError;
use crate::nn::{join, softplus, Linear, Matrix, VisitParams};

/// Rows in the species table; index 0 is a placeholder so `Z` indexes directly.
pub const SPECIES_ROWS: usize = 119;

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesEmbedding {
    pub table: Matrix,
    pub proj: Linear,
}

impl SpeciesEmbedding {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        let table = Matrix::from_fn(SPECIES_ROWS, config.embed_dim_species, |r, _| {
            if r == 0 {
                0.0
            } else {
                rng.sample::<f64, _>(StandardNormal)
            }
        });
        let proj = Linear::new(config.embed_dim_species, config.hidden_dim, rng);
        SpeciesEmbedding { table, proj }
    }

    pub fn embed(&self, species: &[u8]) -> Result<Matrix, ModelError> {
        let mut rows = Vec::with_capacity(species.len());
        for &z in species {
            if z == 0 || z as usize >= SPECIES_ROWS {
                return Err(ModelError::UnknownSpecies(z));
            }
            rows.push(z as usize);
        }
        Ok(self.proj.forward(&crate::nn::gather_rows(&self.table, &rows)))
    }

    pub fn set_table(&mut self, table: Matrix) -> Result<(), ModelError> {
        if table.shape() != self.table.shape() {
            return Err(ModelError::ShapeMismatch {
                name: "species table".into(),
                expected: self.table.shape(),
                found: table.shape(),
            });
        }
        if table.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonfiniteInput("species table"));
        }
        self.table = table;
        Ok(())
    }
}

impl VisitParams for SpeciesEmbedding {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        f(join(prefix, "table"), &mut self.table);
        self.proj.visit(&join(prefix, "proj"), f);
    }
}

/// Parses a species table given as a JSON array of rows: either 118 rows for
/// `Z = 1..=118` or 119 rows with a leading placeholder.
pub fn parse_species_table(text: &str, width: usize) -> Result<Matrix, ModelError> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
    let offset = match rows.len() {
        118 => 1,
        SPECIES_ROWS => 0,
        n => {
            return Err(ModelError::ShapeMismatch {
                name: "species table".into(),
                expected: (SPECIES_ROWS, width),
                found: (n, rows.first().map_or(0, Vec::len)),
            })
        }
    };
    let mut table = Matrix::zeros(SPECIES_ROWS, width);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(ModelError::ShapeMismatch {
                name: format!("species table row {r}"),
                expected: (1, width),
                found: (1, row.len()),
            });
        }
        for (c, v) in row.iter().enumerate() {
            table[(r + offset, c)] = *v;
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeEmbedding {
    pub dist: Linear,
    pub angle: Linear,
    pub potential_constant: f64,
    pub rbf_dist: RbfSpec,
    pub rbf_angle: RbfSpec,
}

impl EdgeEmbedding {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        EdgeEmbedding {
            dist: Linear::new(config.rbf_dist.count, config.hidden_dim, rng),
            angle: Linear::new(config.rbf_angle.count, config.hidden_dim, rng),
            potential_constant: config.potential_constant,
            rbf_dist: config.rbf_dist,
            rbf_angle: config.rbf_angle,
        }
    }

    /// `softplus(linear(rbf(c / d)))`, one row per distance.
    pub fn distances(&self, dists: &[f64]) -> Result<Matrix, ModelError> {
        let mut basis = Matrix::zeros(dists.len(), self.rbf_dist.count);
        let mut buf = vec![0.0; self.rbf_dist.count];
        for (r, &d) in dists.iter().enumerate() {
            if !(d.is_finite() && d > 0.0) {
                return Err(ModelError::NonpositiveDistance { edge: r, dist: d });
            }
            self.rbf_dist.expand_into(self.potential_constant / d, &mut buf);
            basis.row_mut(r).copy_from_slice(&buf);
        }
        Ok(self.dist.forward(&basis).map(softplus))
    }

    /// `softplus(linear(rbf(cos θ_m)))` for each of the three angles.
    pub fn angles(&self, angles: &[[f64; 3]]) -> [Matrix; 3] {
        let mut buf = vec![0.0; self.rbf_angle.count];
        std::array::from_fn(|m| {
            let mut basis = Matrix::zeros(angles.len(), self.rbf_angle.count);
            for (r, a) in angles.iter().enumerate() {
                self.rbf_angle.expand_into(a[m].cos(), &mut buf);
                basis.row_mut(r).copy_from_slice(&buf);
            }
            self.angle.forward(&basis).map(softplus)
        })
    }
}

impl VisitParams for EdgeEmbedding {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        self.dist.visit(&join(prefix, "dist"), f);
        self.angle.visit(&join(prefix, "angle"), f);
    }
}

/// Invariant embedding of one edge: its length feature and three angle features.
pub fn embed_edge_invariant(
    dist: f64,
    angles: &[f64; 3],
    embedding: &EdgeEmbedding,
) -> Result<(Vec<f64>, [Vec<f64>; 3]), ModelError> {
    let fe = embedding.distances(&[dist])?;
    let fa = embedding.angles(&[*angles]);
    Ok((fe.iter().copied().collect(), std::array::from_fn(|m| fa[m].iter().copied().collect())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> ModelConfig {
        ModelConfig { hidden_dim: 8, ..Default::default() }
    }

    #[test]
    fn same_species_same_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let emb = SpeciesEmbedding::new(&small(), &mut rng);
        assert_eq!(emb.table.nrows(), 119);
        let x = emb.embed(&[11, 17, 11]).unwrap();
        assert_eq!(x.row(0), x.row(2));
        assert_ne!(x.row(0), x.row(1));
        assert!(matches!(emb.embed(&[0]), Err(ModelError::UnknownSpecies(0))));
        assert!(matches!(emb.embed(&[119]), Err(ModelError::UnknownSpecies(119))));
    }

    #[test]
    fn potential_mapping_hits_a_center() {
        // c / d = -0.75 / 0.75 = -1, the fourth of five centers on [-4, 0]
        let cfg = ModelConfig { hidden_dim: 4, rbf_dist: RbfSpec::new(5, -4.0, 0.0), ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut emb = EdgeEmbedding::new(&cfg, &mut rng);
        emb.dist.weight = Matrix::identity(5, 4);
        emb.dist.bias.fill(0.0);
        let fe = emb.distances(&[0.75]).unwrap();
        assert!((fe[(0, 3)] - softplus(1.0)).abs() < 1e-15);
        assert!(matches!(emb.distances(&[0.0]), Err(ModelError::NonpositiveDistance { .. })));
    }

    #[test]
    fn right_angle_sits_mid_range() {
        let spec = RbfSpec::new(257, -1.0, 1.0);
        let b = spec.expand(std::f64::consts::FRAC_PI_2.cos());
        assert!((b[128] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn species_table_parsing() {
        let rows: Vec<Vec<f64>> = (1..=118).map(|z| vec![z as f64, 0.5]).collect();
        let t = parse_species_table(&serde_json::to_string(&rows).unwrap(), 2).unwrap();
        assert_eq!(t[(11, 0)], 11.0);
        assert_eq!(t.row(0).sum(), 0.0);
        assert!(parse_species_table("[[1.0]]", 2).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut emb = SpeciesEmbedding::new(&ModelConfig { embed_dim_species: 2, hidden_dim: 3, ..Default::default() }, &mut rng);
        emb.set_table(t).unwrap();
        assert!(emb.set_table(Matrix::zeros(3, 3)).is_err());
    }
}
