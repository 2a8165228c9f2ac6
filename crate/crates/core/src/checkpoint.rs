//! Model checkpoints as JSON: configuration, layer specs, vocabulary and every
//! parameter array as decimal floats.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::featurize::{EmbeddingTable, Vocab};
use crate::gnn::{LayerParams, LayerSpec, ModelParams};

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("cannot access checkpoint {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerJson {
    weights: Vec<Vec<Vec<f64>>>,
    attention: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamsJson {
    layers: Vec<LayerJson>,
    readout_weight: Vec<f64>,
    readout_bias: f64,
    embedding: Vec<Vec<f64>>,
}

fn matrix_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix_from(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>, CheckpointError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(CheckpointError::Format(format!("ragged {what} matrix")));
    }
    Array2::from_shape_vec((rows.len(), cols), rows.concat()).map_err(|e| CheckpointError::Format(e.to_string()))
}

impl ParamsJson {
    fn from_params(p: &ModelParams) -> Self {
        ParamsJson {
            layers: p
                .layers
                .iter()
                .map(|l| LayerJson {
                    weights: l.weights.iter().map(matrix_rows).collect(),
                    attention: l.attention.iter().map(|a| a.to_vec()).collect(),
                })
                .collect(),
            readout_weight: p.readout_w.to_vec(),
            readout_bias: p.readout_b,
            embedding: matrix_rows(&p.embedding.weights),
        }
    }

    fn to_params(&self) -> Result<ModelParams, CheckpointError> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                Ok(LayerParams {
                    weights: l
                        .weights
                        .iter()
                        .map(|w| matrix_from(w, "weight"))
                        .collect::<Result<_, CheckpointError>>()?,
                    attention: l.attention.iter().map(|a| Array1::from(a.clone())).collect(),
                })
            })
            .collect::<Result<_, CheckpointError>>()?;
        Ok(ModelParams {
            layers,
            readout_w: Array1::from(self.readout_weight.clone()),
            readout_b: self.readout_bias,
            embedding: EmbeddingTable {
                weights: matrix_from(&self.embedding, "embedding")?,
                trainable: true,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: PipelineConfig,
    pub config_hash: String,
    pub specs: Vec<LayerSpec>,
    pub vocab: Vocab,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct CheckpointJson {
    config_hash: String,
    config: PipelineConfig,
    specs: Vec<LayerSpec>,
    vocab: Vocab,
    params: ParamsJson,
}

impl Checkpoint {
    pub fn new(config: PipelineConfig, vocab: Vocab, params: ModelParams) -> Self {
        Checkpoint {
            config_hash: config.hash(),
            specs: config.layer_specs(),
            config,
            vocab,
            params,
        }
    }

    pub fn to_json_string(&self) -> String {
        let doc = CheckpointJson {
            config_hash: self.config_hash.clone(),
            config: self.config.clone(),
            specs: self.specs.clone(),
            vocab: self.vocab.clone(),
            params: ParamsJson::from_params(&self.params),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str) -> Result<Self, CheckpointError> {
        let doc: CheckpointJson = serde_json::from_str(text).map_err(|e| CheckpointError::Format(e.to_string()))?;
        let params = doc.params.to_params()?;
        params
            .check_shapes(&doc.specs)
            .map_err(|e| CheckpointError::Format(e.to_string()))?;
        if params.embedding.vocab_size() != doc.vocab.len() {
            return Err(CheckpointError::Format(format!(
                "embedding has {} rows but the vocabulary has {} tokens",
                params.embedding.vocab_size(),
                doc.vocab.len()
            )));
        }
        if !params.is_finite() {
            return Err(CheckpointError::Format("non-finite parameter".into()));
        }
        let mut config = doc.config;
        config.normalize();
        Ok(Checkpoint {
            config,
            config_hash: doc.config_hash,
            specs: doc.specs,
            vocab: doc.vocab,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_json_string()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }
}
