use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vulngraph_core::cpg::{build_cpg, simplify, Direction, EdgeClass};
use vulngraph_core::explain::{top_k_edges, ExplainOptions, LayerSelector, ScoreSource};
use vulngraph_core::featurize::{build_vocab, tensorize, GraphTensors};
use vulngraph_core::frontend::{parse_source, SourceFunction};
use vulngraph_core::gnn::{forward, stack, LayerKind, LayerSpec, ModelParams};
use vulngraph_core::train::{train, OptimizerKind, TrainConfig};

const VOCAB: usize = 6;

/// Token 2 marks positives and token 3 negatives; tokens 4 and 5 are noise.
fn separable(n: usize, seed: u64) -> Vec<GraphTensors> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let label = (k % 2) as u8;
            let nodes = rng.gen_range(2..6);
            let cap = 6;
            let mut neighbors = vec![Vec::new(); cap];
            for (i, nb) in neighbors.iter_mut().enumerate().take(nodes) {
                *nb = (0..nodes).filter(|&j| j == i || j + 1 == i || i + 1 == j).collect();
            }
            let marker = if label == 1 { 2 } else { 3 };
            let node_tokens = (0..nodes)
                .map(|i| if i == 0 { vec![marker] } else { vec![rng.gen_range(4..VOCAB)] })
                .collect();
            GraphTensors {
                x: Array2::zeros((cap, 1)),
                neighbors,
                valid: (0..cap).map(|r| r < nodes).collect(),
                label: Some(label),
                node_ids: (0..nodes).collect(),
                node_tokens,
            }
        })
        .collect()
}

fn setup(seed: u64) -> (Vec<LayerSpec>, ModelParams) {
    let specs = stack(LayerKind::Gat, 4, 4, 2, 1);
    let params = ModelParams::init(&specs, VOCAB, 4, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
    (specs, params)
}

fn config(lr: f64, epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: lr,
        epochs,
        batch_size: 8,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let data = separable(20, 1);
    let (specs, params) = setup(2);
    let out = train(&data, params.clone(), &specs, &config(0.0, 3)).unwrap();
    assert_eq!(out.params, params);
    assert_eq!(out.losses.len(), 3);
    assert_eq!(out.losses[0], out.losses[2]);
}

#[test]
fn loss_decreases_on_separable_data() {
    let data = separable(50, 4);
    for optimizer in [OptimizerKind::Adam, OptimizerKind::Sgd] {
        let (specs, params) = setup(5);
        let lr = if optimizer == OptimizerKind::Adam { 0.01 } else { 0.5 };
        let cfg = TrainConfig {
            optimizer,
            ..config(lr, 60)
        };
        let out = train(&data, params, &specs, &cfg).unwrap();
        let (first, last) = (out.losses[0], *out.losses.last().unwrap());
        assert!(last < 0.5 * first, "{optimizer:?}: loss {first} -> {last}");
        assert!(out.params.embedding.weights.row(0).iter().all(|&v| v == 0.0), "PAD row moved");
    }
}

#[test]
fn training_is_deterministic() {
    let data = separable(30, 6);
    let (specs, params) = setup(7);
    let a = train(&data, params.clone(), &specs, &config(0.01, 5)).unwrap();
    let b = train(&data, params.clone(), &specs, &config(0.01, 5)).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.losses, b.losses);
    let c = train(&data, params, &specs, &TrainConfig { seed: 4, ..config(0.01, 5) }).unwrap();
    assert_ne!(a.params, c.params, "shuffle seed had no effect");
}

#[test]
fn empty_corpus_is_rejected() {
    let mut data = separable(4, 1);
    for g in &mut data {
        g.label = None;
    }
    let (specs, params) = setup(1);
    assert!(train(&data, params, &specs, &config(0.01, 1)).is_err());
}

struct Fixture {
    graph: vulngraph_core::cpg::SimpleGraph,
    cpg: vulngraph_core::cpg::Cpg,
    tensors: GraphTensors,
    specs: Vec<LayerSpec>,
    params: ModelParams,
}

fn fixture(heads: usize) -> Fixture {
    let src = "int f(int n) { int s = 0; int i = 0; while (i < n) { if (i != 3) { s += i; } i++; } use(s); return s; }";
    let f = SourceFunction::new(src, Some(1)).unwrap();
    let ast = parse_source(src).unwrap();
    let cpg = build_cpg(&ast, &EdgeClass::ALL.into_iter().collect()).unwrap();
    let graph = simplify(&cpg, Direction::Bidirected);
    let vocab = build_vocab(std::slice::from_ref(&f), 1).unwrap();
    let specs = stack(LayerKind::Gat, 8, 4, 2, heads);
    let params = ModelParams::init(&specs, vocab.len(), 8, 1.0, &mut ChaCha8Rng::seed_from_u64(9));
    let tensors = tensorize(&graph, &cpg, &vocab, &params.embedding, 64);
    Fixture {
        graph,
        cpg,
        tensors,
        specs,
        params,
    }
}

#[test]
fn explanation_covers_every_program_edge_when_k_is_large() {
    let fx = fixture(2);
    let trace = forward(&fx.tensors, &fx.params, &fx.specs).unwrap();
    let options = ExplainOptions {
        k: usize::MAX,
        ..ExplainOptions::default()
    };
    let expl = top_k_edges(&trace, &fx.tensors, &fx.graph, &fx.cpg, &options).unwrap();
    let program_edges = fx.graph.edges.keys().filter(|(s, d)| s != d).count();
    assert_eq!(expl.edges.len(), program_edges);
    assert!(expl.edges.windows(2).all(|w| w[0].score >= w[1].score));
}

#[test]
fn readout_shift_does_not_change_the_ranking() {
    let fx = fixture(1);
    let options = ExplainOptions::default();
    let base = forward(&fx.tensors, &fx.params, &fx.specs).unwrap();
    let a = top_k_edges(&base, &fx.tensors, &fx.graph, &fx.cpg, &options).unwrap();
    let mut shifted = fx.params.clone();
    shifted.readout_b += 3.0;
    let trace = forward(&fx.tensors, &shifted, &fx.specs).unwrap();
    let b = top_k_edges(&trace, &fx.tensors, &fx.graph, &fx.cpg, &options).unwrap();
    assert_eq!(a.edges, b.edges);
    assert!(b.prob > a.prob);
}

#[test]
fn normalized_and_raw_scores_agree_within_a_neighborhood() {
    let fx = fixture(1);
    let trace = forward(&fx.tensors, &fx.params, &fx.specs).unwrap();
    for view in trace.attention() {
        for (logits, alpha) in view.logits.iter().zip(view.alpha) {
            for a in 0..logits.len() {
                for b in 0..logits.len() {
                    if logits[a] > logits[b] {
                        assert!(alpha[a] > alpha[b]);
                    }
                }
            }
        }
    }
    let per_layer = ExplainOptions {
        k: 3,
        source: ScoreSource::Normalized,
        layer: LayerSelector::Layer(1),
    };
    let expl = top_k_edges(&trace, &fx.tensors, &fx.graph, &fx.cpg, &per_layer).unwrap();
    assert!(expl.edges.iter().all(|e| e.layer == 1 && e.score > 0.0 && e.score <= 1.0));
    let missing = ExplainOptions {
        layer: LayerSelector::Layer(7),
        ..per_layer
    };
    assert!(top_k_edges(&trace, &fx.tensors, &fx.graph, &fx.cpg, &missing).is_err());
}

#[test]
fn forward_is_deterministic() {
    let fx = fixture(2);
    let a = forward(&fx.tensors, &fx.params, &fx.specs).unwrap();
    let b = forward(&fx.tensors, &fx.params, &fx.specs).unwrap();
    assert_eq!(a.probability.to_bits(), b.probability.to_bits());
    assert_eq!(a.final_hidden(), b.final_hidden());
}
