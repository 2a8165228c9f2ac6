//! Vocabulary, token embeddings and fixed-size graph tensors.

mod tensors;
mod vocab;

pub use tensors::{filter_corpus, tensorize, GraphTensors};
pub use vocab::{
    build_vocab, embed_node, node_token_ids, EmbeddingTable, Vocab, PAD, PAD_TOKEN, UNK,
    UNK_TOKEN,
};

use thiserror::Error;

use crate::frontend::LexError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeaturizeError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error(transparent)]
    Lex(#[from] LexError),
}
