use ndarray::Array2;

use super::vocab::{node_token_ids, EmbeddingTable, Vocab};
use crate::cpg::{Cpg, SimpleGraph};
use crate::frontend::{NodeId, SourceFunction};

/// Fixed-size numeric encoding of one graph.
///
/// Rows `0..n_valid()` hold real nodes in AST pre-order; the rest are zero
/// padding with empty neighborhoods.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTensors {
    /// Node features, `cap × d`.
    pub x: Array2<f64>,
    /// N(i) per row as row indices, ascending; a valid row always contains itself.
    pub neighbors: Vec<Vec<usize>>,
    pub valid: Vec<bool>,
    pub label: Option<u8>,
    /// Graph node id for each valid row.
    pub node_ids: Vec<NodeId>,
    /// Vocabulary ids of each valid row's tokens, for re-embedding during training.
    pub node_tokens: Vec<Vec<usize>>,
}

impl GraphTensors {
    pub fn cap(&self) -> usize {
        self.valid.len()
    }

    pub fn n_valid(&self) -> usize {
        self.node_ids.len()
    }

    /// Dense 0/1 neighbor mask: `a[[i, j]] = 1` iff `j ∈ N(i)`.
    pub fn adjacency(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.cap(), self.cap()));
        for (i, nbrs) in self.neighbors.iter().enumerate() {
            for &j in nbrs {
                a[[i, j]] = 1.0;
            }
        }
        a
    }

    /// Node features recomputed from `table`.
    pub fn features(&self, table: &EmbeddingTable) -> Array2<f64> {
        let mut x = Array2::zeros((self.cap(), table.dim()));
        for (r, ids) in self.node_tokens.iter().enumerate() {
            x.row_mut(r).assign(&table.mean_of(ids));
        }
        x
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }
}

/// Embeds the first `cap` nodes of `g` (in its AST pre-order) and pads the
/// rest with zeros. Edges touching a truncated node are dropped.
///
/// # Panics
/// If `cap` is zero.
pub fn tensorize(
    g: &SimpleGraph,
    cpg: &Cpg,
    vocab: &Vocab,
    table: &EmbeddingTable,
    cap: usize,
) -> GraphTensors {
    assert!(cap >= 1, "node cap must be at least 1");
    let n_valid = g.nodes.len().min(cap);
    let node_ids: Vec<NodeId> = g.nodes[..n_valid].to_vec();
    let node_tokens: Vec<Vec<usize>> = node_ids
        .iter()
        .map(|&id| {
            cpg.node(id)
                .map(|n| node_token_ids(&n.code, vocab))
                .unwrap_or_default()
        })
        .collect();

    let mut neighbors = vec![Vec::new(); cap];
    for (r, nbrs) in neighbors.iter_mut().enumerate().take(n_valid) {
        *nbrs = g.neighbors[r]
            .iter()
            .filter_map(|&j| g.position(j))
            .filter(|&p| p < n_valid)
            .collect();
        nbrs.sort_unstable();
        nbrs.dedup();
    }

    let mut t = GraphTensors {
        x: Array2::zeros((cap, table.dim())),
        neighbors,
        valid: (0..cap).map(|r| r < n_valid).collect(),
        label: cpg.label,
        node_ids,
        node_tokens,
    };
    t.x = t.features(table);
    t
}

/// Keeps the functions with strictly fewer than `max_tokens` tokens.
pub fn filter_corpus(corpus: &[SourceFunction], max_tokens: usize) -> Vec<SourceFunction> {
    corpus
        .iter()
        .filter(|f| f.token_count < max_tokens)
        .cloned()
        .collect()
}
