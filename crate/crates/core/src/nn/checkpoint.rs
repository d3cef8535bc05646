//! JSON checkpoint of a network, its optimizer state and the RNG position.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, AdamState, MlpModel, NnError};
use crate::rng::RngState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatAdam {
    pub m_weights: Vec<Vec<f64>>,
    pub v_weights: Vec<Vec<f64>>,
    pub m_biases: Vec<Vec<f64>>,
    pub v_biases: Vec<Vec<f64>>,
}

/// On-disk form: every matrix is a flat row-major array whose shape follows
/// from `layer_dims`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub activations: Vec<Activation>,
    pub adam: FlatAdam,
    pub step: u64,
    pub rng_state: RngState,
}

fn flatten(ms: &[super::Matrix]) -> Vec<Vec<f64>> {
    ms.iter().map(|m| m.data().to_vec()).collect()
}

fn unflatten(
    flat: Vec<Vec<f64>>,
    dims: &[usize],
    bias: bool,
) -> Result<Vec<super::Matrix>, NnError> {
    if flat.len() + 1 != dims.len() {
        return Err(NnError::Shape(
            "checkpoint layer count disagrees with layer_dims".into(),
        ));
    }
    flat.into_iter()
        .enumerate()
        .map(|(l, v)| {
            let rows = if bias { 1 } else { dims[l] };
            super::Matrix::from_vec(rows, dims[l + 1], v)
        })
        .collect()
}

impl Checkpoint {
    pub fn from_model(model: &MlpModel, rng_state: RngState) -> Self {
        let adam = model.adam_state();
        Self {
            layer_dims: model.layer_dims().to_vec(),
            weights: flatten(model.weights()),
            biases: flatten(model.biases()),
            activations: model.activations().to_vec(),
            adam: FlatAdam {
                m_weights: flatten(&adam.m_weights),
                v_weights: flatten(&adam.v_weights),
                m_biases: flatten(&adam.m_biases),
                v_biases: flatten(&adam.v_biases),
            },
            step: model.step(),
            rng_state,
        }
    }

    pub fn into_model(self) -> Result<MlpModel, NnError> {
        let dims = self.layer_dims;
        let adam = AdamState {
            m_weights: unflatten(self.adam.m_weights, &dims, false)?,
            v_weights: unflatten(self.adam.v_weights, &dims, false)?,
            m_biases: unflatten(self.adam.m_biases, &dims, true)?,
            v_biases: unflatten(self.adam.v_biases, &dims, true)?,
            step: self.step,
        };
        let weights = unflatten(self.weights, &dims, false)?;
        let biases = unflatten(self.biases, &dims, true)?;
        MlpModel::from_parts(
            dims,
            weights,
            biases,
            self.activations,
            adam,
            self.rng_state.seed,
        )
    }

    pub fn to_json(&self) -> Result<String, NnError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, NnError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
