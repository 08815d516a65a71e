//! Model hyperparameters, loadable from JSON or TOML with the field names below.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Gaussian basis with `count` evenly spaced centers on `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbfSpec {
    pub count: usize,
    pub min: f64,
    pub max: f64,
}

impl RbfSpec {
    pub fn new(count: usize, min: f64, max: f64) -> Self {
        RbfSpec { count, min, max }
    }

    /// Center spacing; a single center uses the full range as its width.
    pub fn spacing(&self) -> f64 {
        if self.count > 1 {
            (self.max - self.min) / (self.count - 1) as f64
        } else {
            self.max - self.min
        }
    }

    pub fn gamma(&self) -> f64 {
        let d = self.spacing();
        1.0 / (2.0 * d * d)
    }

    pub fn centers(&self) -> Vec<f64> {
        let d = self.spacing();
        (0..self.count).map(|c| self.min + d * c as f64).collect()
    }

    /// `out_c = exp(-gamma (x - center_c)^2)`
    pub fn expand(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.count];
        self.expand_into(x, &mut out);
        out
    }

    pub fn expand_into(&self, x: f64, out: &mut [f64]) {
        let d = self.spacing();
        let g = self.gamma();
        for (c, o) in out.iter_mut().enumerate() {
            let t = x - (self.min + d * c as f64);
            *o = (-g * t * t).exp();
        }
    }

    fn validate(&self, name: &str) -> Result<(), ModelError> {
        if self.count == 0 {
            return Err(ModelError::InvalidConfig(format!("{name}.count must be at least 1")));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(ModelError::InvalidConfig(format!("{name} needs finite min < max")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShConstants {
    pub c0: f64,
    pub c1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TpChannels {
    pub order0: usize,
    pub order12: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub embed_dim_species: usize,
    /// Total node-wise transformer layers; the first runs before the
    /// edge-wise or equivariant layers, the rest after.
    pub n_node_layers: usize,
    /// Edge-wise transformer layers (invariant variant only).
    pub n_edge_layers: usize,
    /// Equivariant updating layers (equivariant variant only).
    pub n_equivariant_layers: usize,
    pub potential_constant: f64,
    pub rbf_dist: RbfSpec,
    pub rbf_angle: RbfSpec,
    pub sh_constants: ShConstants,
    pub tp_channels: TpChannels,
    pub max_rotation_order: u8,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_dim: 64,
            embed_dim_species: 92,
            n_node_layers: 2,
            n_edge_layers: 1,
            n_equivariant_layers: 1,
            potential_constant: -0.75,
            rbf_dist: RbfSpec::new(256, -4.0, 0.0),
            rbf_angle: RbfSpec::new(256, -1.0, 1.0),
            sh_constants: ShConstants { c0: 1.0, c1: 1.0 },
            tp_channels: TpChannels { order0: 128, order12: 8 },
            max_rotation_order: 2,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Full-width settings: 256 hidden channels.
    pub fn full_width() -> Self {
        ModelConfig { hidden_dim: 256, ..Default::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("hidden_dim", self.hidden_dim),
            ("embed_dim_species", self.embed_dim_species),
            ("n_node_layers", self.n_node_layers),
            ("tp_channels.order0", self.tp_channels.order0),
            ("tp_channels.order12", self.tp_channels.order12),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        self.rbf_dist.validate("rbf_dist")?;
        self.rbf_angle.validate("rbf_angle")?;
        if !matches!(self.max_rotation_order, 1 | 2) {
            return Err(ModelError::InvalidConfig(format!(
                "max_rotation_order must be 1 or 2 (got {})",
                self.max_rotation_order
            )));
        }
        let finite = [
            self.potential_constant,
            self.sh_constants.c0,
            self.sh_constants.c1,
            self.bn_eps,
            self.bn_momentum,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::InvalidConfig("non-finite constant".into()));
        }
        if self.bn_eps <= 0.0 || !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(ModelError::InvalidConfig("bn_eps must be > 0 and bn_momentum in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let cfg: ModelConfig = serde_json::from_str(text).map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `.toml` files as TOML and everything else as JSON.
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml_str(&text),
            _ => Self::from_json_str(&text),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
