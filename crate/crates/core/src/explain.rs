//! Attention-based explanations: rank program edges by their attention
//! coefficients and render the top ones on the code property graph.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cpg::{Cpg, Highlight, SimpleGraph};
use crate::featurize::GraphTensors;
use crate::frontend::NodeId;
use crate::gnn::ForwardTrace;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExplainError {
    #[error("the model has no attention layers to explain")]
    NoAttentionLayers,
    #[error("layer {layer} is not an attention layer (attention layers: {available:?})")]
    NoSuchLayer { layer: usize, available: Vec<usize> },
}

/// Which coefficient ranks edges: the raw logit `e_ij` or the normalized `α_ij`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSource {
    #[default]
    Raw,
    Normalized,
}

impl FromStr for ScoreSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(ScoreSource::Raw),
            "normalized" | "alpha" => Ok(ScoreSource::Normalized),
            other => Err(format!("unknown score source {other:?} (expected raw or normalized)")),
        }
    }
}

impl fmt::Display for ScoreSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreSource::Raw => "raw",
            ScoreSource::Normalized => "normalized",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LayerSelector {
    /// Maximum over every attention layer and head.
    #[default]
    All,
    Layer(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExplainOptions {
    pub k: usize,
    pub source: ScoreSource,
    pub layer: LayerSelector,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        ExplainOptions {
            k: 5,
            source: ScoreSource::Raw,
            layer: LayerSelector::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub src_code: String,
    pub dst_code: String,
    pub layer: usize,
    pub head: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub function: String,
    pub prob: f64,
    pub k: usize,
    pub edges: Vec<RankedEdge>,
}

/// Descending score, then ascending `(layer, src, dst)`.
fn rank_order(a: &RankedEdge, b: &RankedEdge) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then((a.layer, a.src, a.dst).cmp(&(b.layer, b.src, b.dst)))
}

/// Sorts candidates into ranking order and keeps the first `k`.
pub fn rank(mut edges: Vec<RankedEdge>, k: usize) -> Vec<RankedEdge> {
    edges.sort_by(rank_order);
    edges.truncate(k);
    edges
}

/// The `k` highest-scoring program edges of `graph`, each scored by the
/// maximum of the chosen coefficient over the selected layers and heads.
/// Synthetic self-loops are never reported.
pub fn top_k_edges(
    trace: &ForwardTrace,
    tensors: &GraphTensors,
    graph: &SimpleGraph,
    cpg: &Cpg,
    options: &ExplainOptions,
) -> Result<Explanation, ExplainError> {
    let available: Vec<usize> = trace
        .layers
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.heads.is_empty())
        .map(|(l, _)| l)
        .collect();
    if available.is_empty() {
        return Err(ExplainError::NoAttentionLayers);
    }
    if let LayerSelector::Layer(l) = options.layer {
        if !available.contains(&l) {
            return Err(ExplainError::NoSuchLayer { layer: l, available });
        }
    }

    let code = |id: NodeId| cpg.node(id).map(|n| n.code.clone()).unwrap_or_default();
    let mut best: BTreeMap<(NodeId, NodeId), (f64, usize, usize)> = BTreeMap::new();
    for view in trace.attention() {
        if matches!(options.layer, LayerSelector::Layer(l) if l != view.layer) {
            continue;
        }
        let values = match options.source {
            ScoreSource::Raw => view.logits,
            ScoreSource::Normalized => view.alpha,
        };
        for (i, row) in tensors.neighbors.iter().enumerate() {
            for (kk, &j) in row.iter().enumerate() {
                if i == j {
                    continue;
                }
                let (src, dst) = (tensors.node_ids[j], tensors.node_ids[i]);
                if !graph.has_edge(src, dst) {
                    continue;
                }
                let score = values[i][kk];
                best.entry((src, dst))
                    .and_modify(|b| {
                        if score > b.0 {
                            *b = (score, view.layer, view.head);
                        }
                    })
                    .or_insert((score, view.layer, view.head));
            }
        }
    }

    let candidates = best
        .into_iter()
        .map(|((src, dst), (score, layer, head))| RankedEdge {
            src,
            dst,
            src_code: code(src),
            dst_code: code(dst),
            layer,
            head,
            score,
        })
        .collect();
    Ok(Explanation {
        function: cpg.name.clone(),
        prob: trace.probability,
        k: options.k,
        edges: rank(candidates, options.k),
    })
}

/// DOT of `cpg` with every ranked edge drawn in red and labeled with its score.
pub fn render_explanation(expl: &Explanation, cpg: &Cpg) -> String {
    let highlights: Vec<Highlight> = expl
        .edges
        .iter()
        .map(|e| Highlight {
            src: e.src,
            dst: e.dst,
            label: Some(format!("{:.4}", e.score)),
        })
        .collect();
    cpg.to_dot(&highlights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(src: NodeId, dst: NodeId, layer: usize, score: f64) -> RankedEdge {
        RankedEdge {
            src,
            dst,
            src_code: String::new(),
            dst_code: String::new(),
            layer,
            head: 0,
            score,
        }
    }

    #[test]
    fn ranking_order_and_cut() {
        let edges = vec![edge(0, 1, 0, 0.2), edge(1, 2, 0, 0.7), edge(2, 0, 0, 0.1)];
        let r = rank(edges.clone(), 2);
        assert_eq!(r.iter().map(|e| e.score).collect::<Vec<_>>(), [0.7, 0.2]);
        assert!(rank(edges.clone(), 0).is_empty());
        assert_eq!(rank(edges, 10).len(), 3);
    }

    #[test]
    fn ties_break_by_layer_then_ids() {
        let edges = vec![edge(3, 1, 1, 0.5), edge(2, 1, 1, 0.5), edge(9, 9, 0, 0.5)];
        let r = rank(edges, 3);
        assert_eq!(
            r.iter().map(|e| (e.layer, e.src, e.dst)).collect::<Vec<_>>(),
            [(0, 9, 9), (1, 2, 1), (1, 3, 1)]
        );
    }

    #[test]
    fn score_source_parsing() {
        assert_eq!("raw".parse::<ScoreSource>().unwrap(), ScoreSource::Raw);
        assert_eq!("normalized".parse::<ScoreSource>().unwrap(), ScoreSource::Normalized);
        assert!("x".parse::<ScoreSource>().is_err());
    }
}
