//! Loss, stratified splitting, the optimization loop and classification metrics.

use std::fmt;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::featurize::{GraphTensors, PAD};
use crate::gnn::{backward, forward, GnnError, Gradients, LayerSpec, ModelParams};
use crate::seed;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("split leaves {train} training and {test} test samples; both must be non-empty")]
    TooFewSamples { train: usize, test: usize },
    #[error("no labeled samples to train on")]
    EmptyCorpus,
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error(transparent)]
    Gnn(#[from] GnnError),
}

const PROB_CLAMP: f64 = 1e-7;

/// Binary cross-entropy of `p` against `y`, and its derivative with respect
/// to the logit that produced `p`.
pub fn bce_loss(p: f64, y: f64) -> (f64, f64) {
    let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let loss = -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
    (loss, p - y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Supplied by the pipeline's master seed; not part of the serialized config.
    #[serde(skip)]
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub train_fraction: f64,
    pub test_fraction: f64,
    /// Update the token embedding table along with the layer weights.
    pub train_embedding: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            epochs: 100,
            batch_size: 8,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            train_fraction: 0.8,
            test_fraction: 0.2,
            train_embedding: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return bad("betas must lie in [0, 1) and epsilon must be > 0".into());
        }
        check_fractions(self.train_fraction, self.test_fraction)
    }
}

fn check_fractions(train: f64, test: f64) -> Result<(), TrainError> {
    if !(0.0..=1.0).contains(&train) || !(0.0..=1.0).contains(&test) || ((train + test) - 1.0).abs() > 1e-9 {
        return Err(TrainError::InvalidConfig(format!(
            "split fractions must lie in [0, 1] and sum to 1, got {train} and {test}"
        )));
    }
    Ok(())
}

/// Deterministic label-stratified split. Each label class contributes
/// `round(n_class · test_fraction)` samples to the test side.
pub fn split<T: Clone>(
    items: &[T],
    label: impl Fn(&T) -> Option<u8>,
    train_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), TrainError> {
    check_fractions(train_fraction, test_fraction)?;
    let mut rng = seed::rng_for(seed, seed::SPLIT);
    let mut classes: Vec<(Option<u8>, Vec<usize>)> = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let y = label(item);
        match classes.iter_mut().find(|(c, _)| *c == y) {
            Some((_, idx)) => idx.push(i),
            None => classes.push((y, vec![i])),
        }
    }
    classes.sort_by_key(|(c, _)| *c);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut idx) in classes {
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(TrainError::TooFewSamples {
            train: train.len(),
            test: test.len(),
        });
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok((
        train.into_iter().map(|i| items[i].clone()).collect(),
        test.into_iter().map(|i| items[i].clone()).collect(),
    ))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean training loss of each epoch, measured before each step's update.
    pub losses: Vec<f64>,
    pub steps: usize,
}

/// First and second moment estimates, one slot per scalar parameter.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

fn flat_grads(g: &Gradients, params: &ModelParams, with_embedding: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.param_count());
    g.visit_dense(params, |name, xs| {
        if name == "embedding" && !with_embedding {
            out.extend(std::iter::repeat_n(0.0, xs.len()));
        } else {
            out.extend_from_slice(xs);
        }
    });
    out
}

fn per_graph(g: &GraphTensors, params: &ModelParams, specs: &[LayerSpec]) -> Result<(f64, Gradients), GnnError> {
    let y = f64::from(g.label.unwrap_or(0));
    let trace = forward(g, params, specs)?;
    let (loss, dlogit) = bce_loss(trace.probability, y);
    Ok((loss, backward(&trace, g, params, specs, dlogit)))
}

/// Mini-batch training. Each step uses the mean of the batch's per-graph
/// gradients, summed in batch order. Unlabeled graphs are ignored.
pub fn train(
    data: &[GraphTensors],
    init: ModelParams,
    specs: &[LayerSpec],
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let labeled: Vec<&GraphTensors> = data.iter().filter(|g| g.label.is_some()).collect();
    if labeled.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut params = init;
    let n_params = params.param_count();
    let mut adam = Adam {
        m: vec![0.0; n_params],
        v: vec![0.0; n_params],
        t: 0,
    };
    let mut rng = seed::rng_for(config.seed, seed::SHUFFLE);
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    let mut step = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let results: Vec<(f64, Gradients)> = batch
                .par_iter()
                .map(|&i| per_graph(labeled[i], &params, specs))
                .collect::<Result<_, _>>()?;
            let mut sum = Gradients::zeros_like(&params, 0);
            let mut batch_loss = 0.0;
            for (loss, g) in &results {
                batch_loss += loss;
                sum.add_scaled(g, 1.0 / batch.len() as f64);
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { step });
            }
            epoch_loss += batch_loss;
            let grad = flat_grads(&sum, &params, config.train_embedding);
            apply_update(&mut params, &grad, &mut adam, config);
            step += 1;
        }
        let mean = epoch_loss / labeled.len() as f64;
        log::debug!("epoch {} loss {mean:.6}", epoch + 1);
        losses.push(mean);
    }
    Ok(TrainOutcome { params, losses, steps: step })
}

fn apply_update(params: &mut ModelParams, grad: &[f64], adam: &mut Adam, config: &TrainConfig) {
    let lr = config.learning_rate;
    adam.t += 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(adam.t);
    let c2 = 1.0 - b2.powi(adam.t);
    let mut offset = 0;
    params.visit_mut(|_, xs| {
        for (k, x) in xs.iter_mut().enumerate() {
            let i = offset + k;
            let g = grad[i];
            match config.optimizer {
                OptimizerKind::Sgd => *x -= lr * g,
                OptimizerKind::Adam => {
                    adam.m[i] = b1 * adam.m[i] + (1.0 - b1) * g;
                    adam.v[i] = b2 * adam.v[i] + (1.0 - b2) * g * g;
                    let m_hat = adam.m[i] / c1;
                    let v_hat = adam.v[i] / c2;
                    *x -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
                }
            }
        }
        offset += xs.len();
    });
    params.embedding.weights.row_mut(PAD).fill(0.0);
}

/// Confusion counts and the rates derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    /// Undefined rates are reported as 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
            tn,
        }
    }

    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> Self {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        Metrics::from_counts(tp, fp, fn_, tn)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>8}", "metric", "value")?;
        for (name, v) in [
            ("accuracy", self.accuracy),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
        ] {
            writeln!(f, "{name:<10} {:>8.4}", v)?;
        }
        write!(f, "tp={} fp={} fn={} tn={}", self.tp, self.fp, self.fn_, self.tn)
    }
}

/// Probabilities for every graph, computed in parallel, in input order.
pub fn predict_all(data: &[GraphTensors], params: &ModelParams, specs: &[LayerSpec]) -> Result<Vec<f64>, GnnError> {
    data.par_iter()
        .map(|g| forward(g, params, specs).map(|t| t.probability))
        .collect()
}

/// Metrics at `threshold` (predicted positive when `p >= threshold`) over the labeled graphs.
pub fn evaluate(
    params: &ModelParams,
    specs: &[LayerSpec],
    data: &[GraphTensors],
    threshold: f64,
) -> Result<Metrics, TrainError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(TrainError::InvalidConfig(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let labeled: Vec<GraphTensors> = data.iter().filter(|g| g.label.is_some()).cloned().collect();
    let probs = predict_all(&labeled, params, specs)?;
    let predicted: Vec<bool> = probs.iter().map(|&p| p >= threshold).collect();
    let actual: Vec<bool> = labeled.iter().map(|g| g.label == Some(1)).collect();
    Ok(Metrics::from_predictions(&predicted, &actual))
}
