//! Deterministic forward passes of invariant and equivariant crystal graph
//! transformers, plus a frozen-feature ridge readout.

pub mod config;
pub mod embed;
pub mod error;
pub mod harmonics;
pub mod inputs;
pub mod layers;
pub mod model;
pub mod nn;
pub mod params;
pub mod ridge;
pub mod two_hop;

pub use config::{ModelConfig, RbfSpec, ShConstants, TpChannels};
pub use error::ModelError;
pub use model::{ForwardTrace, Model, Parameters, Variant};
pub use params::{load_model, save_model};
pub use ridge::{fit_readout_ridge, r_squared, RidgeReadout};
pub use two_hop::{two_hop_angle_check, TwoHopReport};
