use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GnnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Gat,
    Gcn,
}

impl FromStr for LayerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gat" => Ok(LayerKind::Gat),
            "gcn" => Ok(LayerKind::Gcn),
            other => Err(format!("unknown layer kind {other:?} (expected gat or gcn)")),
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Gat => "gat",
            LayerKind::Gcn => "gcn",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64, slope: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => leaky_relu(x, slope),
            Activation::Identity => x,
        }
    }

    /// Derivative at `x`; the kink at 0 takes the left-hand value.
    pub fn derivative(self, x: f64, slope: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => leaky_relu_derivative(x, slope),
            Activation::Identity => 1.0,
        }
    }

    pub fn has_kink(self) -> bool {
        !matches!(self, Activation::Identity)
    }
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

pub fn leaky_relu_derivative(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

/// One message-passing layer. For GAT layers each head owns an
/// `out_dim × in_dim` weight and a `2·out_dim` attention vector, and head
/// outputs are concatenated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Negative slope of the attention LeakyReLU, also used by a LeakyReLU activation.
    pub leaky_slope: f64,
    pub heads: usize,
    /// GCN only: use the symmetric degree-normalized adjacency.
    #[serde(default)]
    pub normalize: bool,
}

impl LayerSpec {
    pub fn gat(in_dim: usize, out_dim: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Gat,
            in_dim,
            out_dim,
            activation: Activation::Relu,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            heads: 1,
            normalize: false,
        }
    }

    pub fn gcn(in_dim: usize, out_dim: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Gcn,
            ..LayerSpec::gat(in_dim, out_dim)
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_heads(mut self, heads: usize) -> Self {
        self.heads = heads;
        self
    }

    /// Number of weight/attention sets: `heads` for GAT, one for GCN.
    pub fn n_heads(&self) -> usize {
        match self.kind {
            LayerKind::Gat => self.heads,
            LayerKind::Gcn => 1,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.out_dim * self.n_heads()
    }

    pub fn validate(&self) -> Result<(), GnnError> {
        let bad = |msg: String| Err(GnnError::InvalidSpec(msg));
        if self.in_dim == 0 || self.out_dim == 0 {
            return bad(format!("dims must be >= 1, got {}x{}", self.in_dim, self.out_dim));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return bad(format!("leaky slope must lie in (0, 1), got {}", self.leaky_slope));
        }
        if self.heads == 0 {
            return bad("heads must be >= 1".into());
        }
        Ok(())
    }
}

/// A stack of `depth` layers of one kind, `in_dim → hidden → … → hidden`.
pub fn stack(kind: LayerKind, in_dim: usize, hidden: usize, depth: usize, heads: usize) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(depth);
    let mut d = in_dim;
    for _ in 0..depth {
        let spec = match kind {
            LayerKind::Gat => LayerSpec::gat(d, hidden).with_heads(heads),
            LayerKind::Gcn => LayerSpec::gcn(d, hidden),
        };
        d = spec.output_dim();
        specs.push(spec);
    }
    specs
}

/// Checks each spec and that consecutive dims chain.
pub fn validate_stack(specs: &[LayerSpec], input_dim: usize) -> Result<(), GnnError> {
    if specs.is_empty() {
        return Err(GnnError::InvalidSpec("at least one layer is required".into()));
    }
    let mut d = input_dim;
    for (l, s) in specs.iter().enumerate() {
        s.validate()?;
        if s.in_dim != d {
            return Err(GnnError::ShapeMismatch {
                what: format!("layer {l} input"),
                expected: d,
                found: s.in_dim,
            });
        }
        d = s.output_dim();
    }
    Ok(())
}
