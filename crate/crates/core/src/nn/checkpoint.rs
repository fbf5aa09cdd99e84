//! Versioned JSON checkpoints.
//!
//! Key order is fixed by field declaration order:
//!
//! ```text
//! { "format_version", "rng_seed", "step_count", "step_conditioned",
//!   "networks": [ { "name", "layer_sizes", "activation", "weights", "biases" } ] }
//! ```
//!
//! `weights[i]` is a `layer_sizes[i+1] × layer_sizes[i]` nested list (one
//! inner list per output unit). Floats are written in shortest round-trip
//! form, so loading reproduces every parameter bit for bit.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, MlpModel};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub name: String,
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

impl NetworkRecord {
    pub fn from_model(name: &str, model: &MlpModel) -> Self {
        Self {
            name: name.to_owned(),
            layer_sizes: model.layer_sizes().to_vec(),
            activation: model.activation(),
            weights: model
                .weights()
                .iter()
                .map(|w| w.rows().into_iter().map(|r| r.to_vec()).collect())
                .collect(),
            biases: model.biases().iter().map(|b| b.to_vec()).collect(),
        }
    }

    pub fn to_model(&self) -> Result<MlpModel> {
        let mut weights = Vec::with_capacity(self.weights.len());
        for (i, rows) in self.weights.iter().enumerate() {
            let n_rows = rows.len();
            let n_cols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != n_cols) {
                return Err(Error::Checkpoint(format!(
                    "network `{}` layer {i}: ragged weight rows",
                    self.name
                )));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            weights.push(Array2::from_shape_vec((n_rows, n_cols), flat).expect("shape checked"));
        }
        let biases = self.biases.iter().map(|b| Array1::from_vec(b.clone())).collect();
        MlpModel::from_parts(self.layer_sizes.clone(), self.activation, weights, biases)
            .map_err(|e| Error::Checkpoint(format!("network `{}`: {e}", self.name)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub rng_seed: u64,
    pub step_count: u64,
    pub step_conditioned: bool,
    pub networks: Vec<NetworkRecord>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                ck.format_version
            )));
        }
        Ok(ck)
    }

    pub fn network(&self, name: &str) -> Option<&NetworkRecord> {
        self.networks.iter().find(|n| n.name == name)
    }
}
