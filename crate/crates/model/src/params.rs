//! Model files: variant, config and every parameter as a named row-major array.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::ModelError;
use crate::model::{Model, Parameters, Variant};
use crate::nn::{Matrix, VisitParams};

pub const MODEL_FORMAT: &str = "comformer-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedArray {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    variant: Variant,
    config: ModelConfig,
    arrays: BTreeMap<String, NamedArray>,
}

pub fn named_arrays(params: &Parameters) -> BTreeMap<String, NamedArray> {
    let mut p = params.clone();
    let mut out = BTreeMap::new();
    p.visit("", &mut |name, m| {
        let data = m.transpose().as_slice().to_vec();
        out.insert(name, NamedArray { shape: [m.nrows(), m.ncols()], data });
    });
    out
}

pub fn save_model(model: &Model) -> String {
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        variant: model.variant,
        config: model.config.clone(),
        arrays: named_arrays(&model.params),
    };
    serde_json::to_string(&file).expect("model serializes")
}

pub fn load_model(text: &str) -> Result<Model, ModelError> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
    if file.format != MODEL_FORMAT {
        return Err(ModelError::Format(format!("unsupported format {:?}", file.format)));
    }
    let mut model = Model::new(file.config, file.variant)?;
    let mut seen = BTreeSet::new();
    let mut failure = None;
    model.params.visit("", &mut |name, m| {
        if failure.is_some() {
            return;
        }
        let Some(arr) = file.arrays.get(&name) else {
            failure = Some(ModelError::MissingParameter(name));
            return;
        };
        let [r, c] = arr.shape;
        if (r, c) != m.shape() || arr.data.len() != r * c {
            failure = Some(ModelError::ShapeMismatch { name, expected: m.shape(), found: (r, c) });
            return;
        }
        *m = Matrix::from_row_slice(r, c, &arr.data);
        seen.insert(name);
    });
    if let Some(err) = failure {
        return Err(err);
    }
    if let Some(extra) = file.arrays.keys().find(|k| !seen.contains(*k)) {
        return Err(ModelError::UnknownParameter(extra.clone()));
    }
    Ok(model)
}
