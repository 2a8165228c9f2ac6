//! End-to-end pipeline configuration and its reproducibility hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cpg::{Direction, EdgeClass};
use crate::gnn::{stack, Activation, LayerKind, LayerSpec, DEFAULT_LEAKY_SLOPE};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: LayerKind,
    pub hidden: usize,
    pub depth: usize,
    pub heads: usize,
    pub activation: Activation,
    pub leaky_slope: f64,
    /// GCN only: symmetric degree normalization.
    pub normalize: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: LayerKind::Gat,
            hidden: 64,
            depth: 2,
            heads: 1,
            activation: Activation::Relu,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub classes: Vec<EdgeClass>,
    pub direction: Direction,
    pub embed_dim: usize,
    /// Half-width of the uniform embedding initialization.
    pub embed_scale: f64,
    pub node_cap: usize,
    /// Functions with this many tokens or more are dropped before training.
    pub max_tokens: usize,
    pub min_count: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            classes: vec![EdgeClass::Ast, EdgeClass::Cfg],
            direction: Direction::Bidirected,
            embed_dim: 64,
            embed_scale: 1.0,
            node_cap: 64,
            max_tokens: 1200,
            min_count: 1,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            threshold: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)?;
        cfg.normalize();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sorts and dedups the edge classes and propagates the seed.
    pub fn normalize(&mut self) {
        self.classes.sort();
        self.classes.dedup();
        self.train.seed = self.seed;
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.embed_dim == 0 || self.node_cap == 0 {
            return bad("embed_dim and node_cap must be >= 1".into());
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be >= 1".into());
        }
        if !(self.embed_scale > 0.0 && self.embed_scale.is_finite()) {
            return bad(format!("embed_scale must be > 0, got {}", self.embed_scale));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold must lie in (0, 1), got {}", self.threshold));
        }
        if self.model.depth == 0 {
            return bad("model.depth must be >= 1".into());
        }
        for s in self.layer_specs() {
            s.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let m = &self.model;
        stack(m.kind, self.embed_dim, m.hidden, m.depth, m.heads)
            .into_iter()
            .map(|mut s| {
                s.activation = m.activation;
                s.leaky_slope = m.leaky_slope;
                s.normalize = m.normalize;
                s
            })
            .collect()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// Canonical form: compact JSON with object keys sorted.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    /// Hex SHA-256 of [`PipelineConfig::canonical_json`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        let specs = c.layer_specs();
        assert_eq!(specs.len(), 2);
        assert_eq!((specs[0].in_dim, specs[1].out_dim), (64, 64));
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: PipelineConfig = serde_json::from_str(r#"{"embed_dim": 8, "model": {"kind": "gcn"}}"#).unwrap();
        assert_eq!(c.embed_dim, 8);
        assert_eq!(c.model.kind, LayerKind::Gcn);
        assert_eq!(c.model.hidden, 64);
        assert_eq!(c.train.epochs, 100);
    }

    #[test]
    fn hash_tracks_content() {
        let a = PipelineConfig::default();
        assert_eq!(a.hash(), PipelineConfig::default().hash());
        assert_eq!(a.hash().len(), 64);
        assert_ne!(a.hash(), a.clone().with_seed(3).hash());
        let back: PipelineConfig = serde_json::from_str(&a.canonical_json()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn invalid_values_rejected() {
        let c = PipelineConfig {
            threshold: 1.0,
            ..PipelineConfig::default()
        };
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.model.heads = 0;
        assert!(c.validate().is_err());
    }
}
