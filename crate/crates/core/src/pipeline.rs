//! Source text to graphs to tensors, and the train / evaluate / predict /
//! explain chains built on top.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::PipelineConfig;
use crate::cpg::{build_cpg, simplify, Cpg, SimpleGraph};
use crate::explain::{render_explanation, top_k_edges, ExplainOptions, Explanation};
use crate::featurize::{build_vocab, filter_corpus, tensorize, EmbeddingTable, GraphTensors, Vocab};
use crate::frontend::{parse_source, Ast, SourceFunction};
use crate::gnn::{forward, ModelParams};
use crate::train::{evaluate, split, train, Metrics};
use crate::{seed, Result};

/// One function carried through parsing and graph construction.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub function: SourceFunction,
    pub ast: Ast,
    pub cpg: Cpg,
    pub graph: SimpleGraph,
}

pub fn prepare(function: &SourceFunction, config: &PipelineConfig) -> Result<Prepared> {
    let ast = parse_source(&function.source)?;
    let classes = config.classes.iter().copied().collect();
    let mut cpg = build_cpg(&ast, &classes)?;
    cpg.label = function.label;
    let graph = simplify(&cpg, config.direction);
    Ok(Prepared {
        function: function.clone(),
        ast,
        cpg,
        graph,
    })
}

pub fn prepare_all(functions: &[SourceFunction], config: &PipelineConfig) -> Result<Vec<Prepared>> {
    functions.par_iter().map(|f| prepare(f, config)).collect()
}

pub fn tensorize_all(prepared: &[Prepared], vocab: &Vocab, table: &EmbeddingTable, cap: usize) -> Vec<GraphTensors> {
    prepared
        .par_iter()
        .map(|p| tensorize(&p.graph, &p.cpg, vocab, table, cap))
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub checkpoint: Checkpoint,
    pub losses: Vec<f64>,
    pub train_metrics: Metrics,
    pub test_metrics: Metrics,
    pub n_train: usize,
    pub n_test: usize,
    /// Functions dropped by the token-length filter.
    pub n_filtered: usize,
}

/// Filters by token count, splits, builds the vocabulary on the training
/// side, trains, and evaluates on both sides.
pub fn train_model(functions: &[SourceFunction], config: &PipelineConfig) -> Result<TrainReport> {
    let mut config = config.clone();
    config.normalize();
    config
        .validate()
        .map_err(crate::Error::Config)?;
    let kept = filter_corpus(functions, config.max_tokens);
    let n_filtered = functions.len() - kept.len();
    let labeled: Vec<SourceFunction> = kept.into_iter().filter(|f| f.label.is_some()).collect();
    let tc = config.train_config();
    let (train_fns, test_fns) = split(&labeled, |f| f.label, tc.train_fraction, tc.test_fraction, config.seed)?;

    let vocab = build_vocab(&train_fns, config.min_count)?;
    let specs = config.layer_specs();
    let mut rng = seed::rng_for(config.seed, seed::INIT);
    let init = ModelParams::init(&specs, vocab.len(), config.embed_dim, config.embed_scale, &mut rng);

    let train_prep = prepare_all(&train_fns, &config)?;
    let test_prep = prepare_all(&test_fns, &config)?;
    let train_t = tensorize_all(&train_prep, &vocab, &init.embedding, config.node_cap);
    let test_t = tensorize_all(&test_prep, &vocab, &init.embedding, config.node_cap);
    log::info!(
        "training on {} functions ({} held out, {} over the token limit), seed {}, config {}",
        train_t.len(),
        test_t.len(),
        n_filtered,
        config.seed,
        config.hash()
    );

    let outcome = train(&train_t, init, &specs, &tc)?;
    let train_metrics = evaluate(&outcome.params, &specs, &train_t, config.threshold)?;
    let test_metrics = evaluate(&outcome.params, &specs, &test_t, config.threshold)?;
    Ok(TrainReport {
        checkpoint: Checkpoint::new(config, vocab, outcome.params),
        losses: outcome.losses,
        train_metrics,
        test_metrics,
        n_train: train_t.len(),
        n_test: test_t.len(),
        n_filtered,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub function: String,
    pub prob: f64,
    pub label: u8,
}

/// A loaded checkpoint ready for inference.
#[derive(Debug, Clone)]
pub struct Model {
    pub checkpoint: Checkpoint,
}

impl Model {
    pub fn new(checkpoint: Checkpoint) -> Self {
        Model { checkpoint }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.checkpoint.config
    }

    pub fn tensors(&self, p: &Prepared) -> GraphTensors {
        let c = &self.checkpoint;
        tensorize(&p.graph, &p.cpg, &c.vocab, &c.params.embedding, c.config.node_cap)
    }

    /// Metrics over the labeled functions at the configured threshold.
    pub fn evaluate(&self, functions: &[SourceFunction]) -> Result<Metrics> {
        let prepared = prepare_all(functions, self.config())?;
        let tensors: Vec<GraphTensors> = prepared.iter().map(|p| self.tensors(p)).collect();
        let c = &self.checkpoint;
        Ok(evaluate(&c.params, &c.specs, &tensors, c.config.threshold)?)
    }

    pub fn predict(&self, function: &SourceFunction) -> Result<Prediction> {
        let p = prepare(function, self.config())?;
        let c = &self.checkpoint;
        let prob = forward(&self.tensors(&p), &c.params, &c.specs)?.probability;
        Ok(Prediction {
            function: p.cpg.name.clone(),
            prob,
            label: u8::from(prob >= c.config.threshold),
        })
    }

    /// Top-ranked edges and the DOT rendering with them highlighted.
    pub fn explain(&self, function: &SourceFunction, options: &ExplainOptions) -> Result<(Explanation, String)> {
        let p = prepare(function, self.config())?;
        let c = &self.checkpoint;
        let g = self.tensors(&p);
        let trace = forward(&g, &c.params, &c.specs)?;
        let expl = top_k_edges(&trace, &g, &p.graph, &p.cpg, options)?;
        let dot = render_explanation(&expl, &p.cpg);
        Ok((expl, dot))
    }
}
