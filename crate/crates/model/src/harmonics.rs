//! Real spherical harmonics up to order 2 and the two tensor-product
//! contractions used by the equivariant layer.
//!
//! Order-2 components are `(√3xy, √3yz, (3z²−1)/2, √3xz, √3/2(x²−y²))`; for a
//! unit vector their squares sum to 1 and they rotate by a 5×5 orthogonal
//! representation.

use comformer_core::Vec3;

use crate::error::ModelError;
use crate::nn::Matrix;

/// Unit-norm tolerance on harmonic inputs.
pub const UNIT_TOL: f64 = 1e-9;

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalHarmonics {
    pub y0: f64,
    pub y1: [f64; 3],
    pub y2: [f64; 5],
}

impl SphericalHarmonics {
    /// Components of order `lambda` as a slice of length `2·lambda + 1`.
    pub fn order(&self, lambda: usize) -> &[f64] {
        match lambda {
            0 => std::slice::from_ref(&self.y0),
            1 => &self.y1,
            _ => &self.y2,
        }
    }
}

pub fn spherical_harmonics(unit: &Vec3, c0: f64, c1: f64) -> Result<SphericalHarmonics, ModelError> {
    let n = unit.norm();
    if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
        return Err(ModelError::NotUnit(n));
    }
    Ok(harmonics_unchecked(unit, c0, c1))
}

pub(crate) fn harmonics_unchecked(u: &Vec3, c0: f64, c1: f64) -> SphericalHarmonics {
    let (x, y, z) = (u.x, u.y, u.z);
    SphericalHarmonics {
        y0: c0,
        y1: [c1 * x, c1 * y, c1 * z],
        y2: [
            SQRT3 * x * y,
            SQRT3 * y * z,
            0.5 * (3.0 * z * z - 1.0),
            SQRT3 * x * z,
            0.5 * SQRT3 * (x * x - y * y),
        ],
    }
}

/// Scalar-output product: channel `c` is `Σ_a w[a, c] (feature_a · y)`,
/// with `feature` holding one input channel per row.
pub fn tensor_product_out0(feature: &Matrix, y: &[f64], weights: &Matrix) -> Result<Vec<f64>, ModelError> {
    if feature.ncols() != y.len() {
        return Err(ModelError::OrderMismatch { expected: y.len(), found: feature.ncols() });
    }
    if weights.nrows() != feature.nrows() {
        return Err(ModelError::ShapeMismatch {
            name: "tensor product weights".into(),
            expected: (feature.nrows(), weights.ncols()),
            found: weights.shape(),
        });
    }
    let contracted: Vec<f64> = feature.row_iter().map(|r| r.iter().zip(y).map(|(a, b)| a * b).sum()).collect();
    Ok((0..weights.ncols())
        .map(|c| contracted.iter().enumerate().map(|(a, t)| weights[(a, c)] * t).sum())
        .collect())
}

/// Order-λ output from scalars: channel `c` is `(Σ_a w[a, c] s_a) · y`,
/// returned with one output channel per row.
pub fn tensor_product_out_lambda(scalars: &[f64], y: &[f64], weights: &Matrix) -> Result<Matrix, ModelError> {
    if y.len() != 3 && y.len() != 5 {
        return Err(ModelError::OrderMismatch { expected: 3, found: y.len() });
    }
    if weights.nrows() != scalars.len() {
        return Err(ModelError::ShapeMismatch {
            name: "tensor product weights".into(),
            expected: (scalars.len(), weights.ncols()),
            found: weights.shape(),
        });
    }
    Ok(Matrix::from_fn(weights.ncols(), y.len(), |c, m| {
        let v: f64 = scalars.iter().enumerate().map(|(a, s)| weights[(a, c)] * s).sum();
        v * y[m]
    }))
}
