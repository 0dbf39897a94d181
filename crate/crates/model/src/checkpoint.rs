//! JSON checkpoint container.
//!
//! ```json
//! {"format": 1, "config": {...}, "seed": 7, "dims": {...}, "vocab": {...} | null,
//!  "params": [{"name": "encoder.token_embedding", "shape": [r, c], "data": [...]}, ...]}
//! ```
//!
//! `params` lists every parameter in the model's declaration order with
//! row-major data. Floats are written with round-trip precision, so a
//! reloaded model reproduces outputs bit for bit.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use scg_core::Vocab;

use crate::config::Config;
use crate::error::ModelError;
use crate::model::{Dims, Model};

pub const FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: u32,
    pub config: Config,
    pub seed: u64,
    pub dims: Dims,
    pub vocab: Option<Vocab>,
    pub params: Vec<ParamEntry>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, vocab: Option<&Vocab>) -> Self {
        let store = &model.store;
        Checkpoint {
            format: FORMAT,
            config: model.config.clone(),
            seed: model.seed,
            dims: model.dims,
            vocab: vocab.cloned(),
            params: store
                .ids()
                .map(|id| {
                    let v = store.value(id);
                    ParamEntry {
                        name: store.name(id).to_string(),
                        shape: [v.nrows(), v.ncols()],
                        data: v.iter().copied().collect(),
                    }
                })
                .collect(),
        }
    }

    /// Rebuilds the model layout from the stored configuration and copies the
    /// stored values in; names, order and shapes must match exactly.
    pub fn to_model(&self) -> Result<Model, ModelError> {
        if self.format != FORMAT {
            return Err(ModelError::Checkpoint(format!("unsupported format {}", self.format)));
        }
        self.config.validate()?;
        if let Some(v) = &self.vocab {
            if Dims::of(v) != self.dims {
                return Err(ModelError::Checkpoint("vocabulary sizes disagree with dims".into()));
            }
        }
        let mut model = Model::new(&self.config, self.dims, self.seed)?;
        let ids: Vec<_> = model.store.ids().collect();
        if ids.len() != self.params.len() {
            return Err(ModelError::Checkpoint(format!("expected {} parameters, found {}", ids.len(), self.params.len())));
        }
        for (id, entry) in ids.into_iter().zip(&self.params) {
            let expected = model.store.name(id);
            if entry.name != expected {
                return Err(ModelError::Checkpoint(format!("expected parameter {expected}, found {}", entry.name)));
            }
            let dim = model.store.value(id).dim();
            if entry.shape != [dim.0, dim.1] {
                return Err(ModelError::Checkpoint(format!("parameter {expected} has shape {:?}, expected {dim:?}", entry.shape)));
            }
            let value = Array2::from_shape_vec(dim, entry.data.clone()).map_err(|e| ModelError::Checkpoint(format!("{expected}: {e}")))?;
            if value.iter().any(|x| !x.is_finite()) {
                return Err(ModelError::Checkpoint(format!("parameter {expected} holds non-finite values")));
            }
            *model.store.value_mut(id) = value;
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
