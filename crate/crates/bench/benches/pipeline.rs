use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vulngraph_core::config::PipelineConfig;
use vulngraph_core::cpg::{build_cpg, simplify, Direction, EdgeClass};
use vulngraph_core::featurize::{build_vocab, tensorize, GraphTensors};
use vulngraph_core::frontend::{parse_source, SourceFunction};
use vulngraph_core::gnn::{backward, forward, LayerSpec, ModelParams};
use vulngraph_core::synth::{gen_synthetic, SyntheticSpec};
use vulngraph_core::train::{train, TrainConfig};

fn corpus() -> Vec<SourceFunction> {
    gen_synthetic(&SyntheticSpec::new(64, 0.5, 1))
        .unwrap()
        .into_iter()
        .map(|r| SourceFunction::new(r.func, r.target).unwrap())
        .collect()
}

struct Setup {
    tensors: Vec<GraphTensors>,
    specs: Vec<LayerSpec>,
    params: ModelParams,
}

fn setup(functions: &[SourceFunction]) -> Setup {
    let cfg = PipelineConfig::default();
    let classes = EdgeClass::ALL.into_iter().collect();
    let vocab = build_vocab(functions, 1).unwrap();
    let specs = cfg.layer_specs();
    let params = ModelParams::init(&specs, vocab.len(), cfg.embed_dim, 1.0, &mut ChaCha8Rng::seed_from_u64(0));
    let tensors = functions
        .iter()
        .map(|f| {
            let mut cpg = build_cpg(&parse_source(&f.source).unwrap(), &classes).unwrap();
            cpg.label = f.label;
            tensorize(&simplify(&cpg, Direction::Bidirected), &cpg, &vocab, &params.embedding, cfg.node_cap)
        })
        .collect();
    Setup { tensors, specs, params }
}

fn frontend(c: &mut Criterion) {
    let functions = corpus();
    let classes = EdgeClass::ALL.into_iter().collect();
    c.bench_function("parse", |b| b.iter(|| parse_source(black_box(&functions[0].source)).unwrap()));
    let ast = parse_source(&functions[0].source).unwrap();
    c.bench_function("build_cpg", |b| b.iter(|| build_cpg(black_box(&ast), &classes).unwrap()));
}

fn model(c: &mut Criterion) {
    let functions = corpus();
    let s = setup(&functions);
    let g = &s.tensors[0];
    c.bench_function("forward", |b| b.iter(|| forward(black_box(g), &s.params, &s.specs).unwrap()));
    let trace = forward(g, &s.params, &s.specs).unwrap();
    c.bench_function("backward", |b| b.iter(|| backward(black_box(&trace), g, &s.params, &s.specs, 0.5)));

    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let batch = &s.tensors[..8];
    c.bench_function("train_step_batch8", |b| {
        b.iter_batched(
            || s.params.clone(),
            |p| train(black_box(batch), p, &s.specs, &cfg).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, frontend, model);
criterion_main!(benches);
