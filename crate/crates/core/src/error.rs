use thiserror::Error;

use crate::checkpoint::CheckpointError;
use crate::config::ConfigError;
use crate::cpg::CpgError;
use crate::dataset::DatasetError;
use crate::explain::ExplainError;
use crate::featurize::FeaturizeError;
use crate::flow::FlowError;
use crate::synth::SynthError;
use crate::train::TrainError;
use crate::gnn::GnnError;
use crate::frontend::{FrontendError, LexError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error; each variant names the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("frontend: {0}")]
    Frontend(#[from] FrontendError),
    #[error("flow_graphs: {0}")]
    Flow(#[from] FlowError),
    #[error("cpg: {0}")]
    Cpg(#[from] CpgError),
    #[error("featurize: {0}")]
    Featurize(#[from] FeaturizeError),
    #[error("gnn_core: {0}")]
    Gnn(#[from] GnnError),
    #[error("train_eval: {0}")]
    Train(#[from] TrainError),
    #[error("explain: {0}")]
    Explain(#[from] ExplainError),
    #[error("dataset: {0}")]
    Dataset(#[from] DatasetError),
    #[error("synth: {0}")]
    Synth(#[from] SynthError),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
}

impl From<LexError> for Error {
    fn from(e: LexError) -> Self {
        Error::Frontend(e.into())
    }
}

impl From<ParseError> for Error {
    fn from(e: ParseError) -> Self {
        Error::Frontend(e.into())
    }
}
