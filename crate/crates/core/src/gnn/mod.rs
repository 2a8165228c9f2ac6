//! Graph neural network layers (attention and convolutional), parameters,
//! and a hand-written forward/backward pass over padded graph tensors.

pub mod layers;
pub mod model;
pub mod params;
pub mod spec;

pub use layers::{
    attention_softmax, gat_aggregate, gat_logits, gcn_coefficients, gcn_layer, logistic, mean_pool, project,
    readout, to_dense, EdgeValues,
};
pub use model::{
    backward, forward, forward_with_features, hidden_of, predict_probability, AttentionView, ForwardTrace,
    HeadCache, LayerCache,
};
pub use params::{Gradients, LayerParams, ModelParams};
pub use spec::{
    leaky_relu, leaky_relu_derivative, stack, validate_stack, Activation, LayerKind, LayerSpec,
    DEFAULT_LEAKY_SLOPE,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GnnError {
    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("valid row {row} has an empty neighborhood")]
    EmptyNeighborhood { row: usize },
}
