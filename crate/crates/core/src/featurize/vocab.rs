use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::FeaturizeError;
use crate::frontend::{lex, SourceFunction};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token vocabulary. Index 0 is padding and index 1 stands for unknown tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    index: BTreeMap<String, usize>,
    tokens: Vec<String>,
}

impl Vocab {
    pub fn specials_only() -> Self {
        Vocab::from_tokens(Vec::<String>::new())
    }

    fn from_tokens(real: impl IntoIterator<Item = String>) -> Self {
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        tokens.extend(real);
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { index, tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of a real token; unknown tokens (and the special spellings) map to UNK.
    pub fn id(&self, token: &str) -> usize {
        match self.index.get(token) {
            Some(&i) if i > UNK => i,
            _ => UNK,
        }
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.id(token) != UNK
    }

    /// Real tokens in index order (specials excluded).
    pub fn real_tokens(&self) -> &[String] {
        &self.tokens[2..]
    }

    pub fn to_json(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), serde_json::Value::from(i)))
            .collect();
        serde_json::Value::Object(map)
    }

    /// Reads a `{token: index}` map; indices must be exactly `0..n` with the
    /// specials at 0 and 1.
    pub fn from_json(value: &serde_json::Value) -> Result<Self, FeaturizeError> {
        let bad = |msg: String| FeaturizeError::InvalidVocab(msg);
        let map = value.as_object().ok_or_else(|| bad("expected a JSON object".into()))?;
        let mut slots: Vec<Option<String>> = vec![None; map.len()];
        for (tok, idx) in map {
            let i = idx
                .as_u64()
                .ok_or_else(|| bad(format!("index of {tok:?} is not an integer")))?
                as usize;
            let slot = slots
                .get_mut(i)
                .ok_or_else(|| bad(format!("index {i} out of range")))?;
            if slot.replace(tok.clone()).is_some() {
                return Err(bad(format!("index {i} used twice")));
            }
        }
        let tokens: Vec<String> = slots.into_iter().map(|s| s.expect("dense indices")).collect();
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(bad("indices 0 and 1 must be <pad> and <unk>".into()));
        }
        Ok(Vocab::from_tokens(tokens.into_iter().skip(2)))
    }
}

impl Serialize for Vocab {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(serde::de::Error::custom("vocab must start with <pad>, <unk>"));
        }
        Ok(Vocab::from_tokens(tokens.into_iter().skip(2)))
    }
}

/// Counts lexer tokens over the corpus and keeps those seen at least
/// `min_count` times, ordered by frequency (descending) then text.
pub fn build_vocab(corpus: &[SourceFunction], min_count: usize) -> Result<Vocab, FeaturizeError> {
    if corpus.is_empty() {
        return Err(FeaturizeError::EmptyCorpus);
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for f in corpus {
        for tok in lex(&f.source)? {
            *counts.entry(tok.text).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_count && t != PAD_TOKEN && t != UNK_TOKEN)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocab::from_tokens(kept.into_iter().map(|(t, _)| t)))
}

/// Token embedding matrix, one row per vocabulary entry. Row [`PAD`] is
/// kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub weights: Array2<f64>,
    pub trainable: bool,
}

impl EmbeddingTable {
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        EmbeddingTable {
            weights: Array2::zeros((vocab_size, dim)),
            trainable: true,
        }
    }

    /// Uniform entries in `[-scale, scale]`, PAD row zero.
    pub fn random(vocab_size: usize, dim: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut weights = Array2::from_shape_fn((vocab_size, dim), |_| rng.gen_range(-scale..=scale));
        if vocab_size > PAD {
            weights.row_mut(PAD).fill(0.0);
        }
        EmbeddingTable {
            weights,
            trainable: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.nrows()
    }

    /// Mean of the rows for `ids`; the zero vector when `ids` is empty.
    pub fn mean_of(&self, ids: &[usize]) -> Array1<f64> {
        let mut out = Array1::zeros(self.dim());
        if ids.is_empty() {
            return out;
        }
        for &id in ids {
            out += &self.weights.row(id);
        }
        out / ids.len() as f64
    }
}

/// Vocabulary ids of the tokens in a node's code. Code that does not lex
/// (never the case for parser output) embeds as no tokens.
pub fn node_token_ids(code: &str, vocab: &Vocab) -> Vec<usize> {
    lex(code)
        .map(|toks| toks.iter().map(|t| vocab.id(&t.text)).collect())
        .unwrap_or_default()
}

/// Node embedding: the average of its token embeddings.
pub fn embed_node(code: &str, vocab: &Vocab, table: &EmbeddingTable) -> Array1<f64> {
    table.mean_of(&node_token_ids(code, vocab))
}
