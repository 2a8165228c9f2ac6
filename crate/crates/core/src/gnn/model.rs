//! Full forward pass with cached intermediates, and the matching backward pass.

use ndarray::{s, Array1, Array2, ArrayView2};

use super::layers::{
    activate, attention_halves, attention_softmax, gcn_coefficients, logistic, project, raw_scores,
    readout, weighted_sum, EdgeValues,
};
use super::params::{Gradients, ModelParams};
use super::spec::{leaky_relu, leaky_relu_derivative, validate_stack, LayerKind, LayerSpec};
use super::GnnError;
use crate::featurize::{GraphTensors, PAD};

/// Intermediates of one attention head.
#[derive(Debug, Clone)]
pub struct HeadCache {
    /// `W h` per row.
    pub z: Array2<f64>,
    /// Raw scores before the LeakyReLU.
    pub scores: EdgeValues,
    /// Attention logits `e_ij`.
    pub logits: EdgeValues,
    /// Normalized attention `α_ij`.
    pub alpha: EdgeValues,
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    pub input: Array2<f64>,
    /// GAT heads; empty for GCN.
    pub heads: Vec<HeadCache>,
    /// GCN only: `h Wᵀ` before the inner ReLU.
    pub projected: Option<Array2<f64>>,
    pub pre_activation: Array2<f64>,
    pub output: Array2<f64>,
}

/// Everything the backward pass and the explainer need from one forward run.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub layers: Vec<LayerCache>,
    pub pooled: Array1<f64>,
    pub logit: f64,
    pub probability: f64,
}

/// Attention of one head of one layer, aligned with the graph's neighbor lists.
#[derive(Debug, Clone, Copy)]
pub struct AttentionView<'a> {
    pub layer: usize,
    pub head: usize,
    pub logits: &'a EdgeValues,
    pub alpha: &'a EdgeValues,
}

impl ForwardTrace {
    pub fn attention(&self) -> impl Iterator<Item = AttentionView<'_>> + '_ {
        self.layers.iter().enumerate().flat_map(|(l, cache)| {
            cache.heads.iter().enumerate().map(move |(h, hc)| AttentionView {
                layer: l,
                head: h,
                logits: &hc.logits,
                alpha: &hc.alpha,
            })
        })
    }

    pub fn final_hidden(&self) -> &Array2<f64> {
        &self.layers.last().expect("at least one layer").output
    }
}

/// Runs the classifier on `g`, embedding its tokens with `params.embedding`.
pub fn forward(g: &GraphTensors, params: &ModelParams, specs: &[LayerSpec]) -> Result<ForwardTrace, GnnError> {
    forward_with_features(g, g.features(&params.embedding), params, specs)
}

/// Runs the classifier on an explicit feature matrix `x` over `g`'s structure.
pub fn forward_with_features(
    g: &GraphTensors,
    x: Array2<f64>,
    params: &ModelParams,
    specs: &[LayerSpec],
) -> Result<ForwardTrace, GnnError> {
    validate_stack(specs, x.ncols())?;
    params.check_shapes(specs)?;
    if x.nrows() != g.cap() || g.neighbors.len() != g.cap() {
        return Err(GnnError::ShapeMismatch {
            what: "feature rows vs node cap".into(),
            expected: g.cap(),
            found: x.nrows(),
        });
    }
    let nbrs = &g.neighbors;
    let mut layers = Vec::with_capacity(specs.len());
    let mut h = x;
    for (spec, lp) in specs.iter().zip(&params.layers) {
        let mut heads = Vec::new();
        let mut projected = None;
        let pre = match spec.kind {
            LayerKind::Gat => {
                let mut pre = Array2::zeros((h.nrows(), spec.output_dim()));
                for (k, (w, a)) in lp.weights.iter().zip(&lp.attention).enumerate() {
                    let z = project(&h, w)?;
                    let (s_dst, t_src) = attention_halves(&z, a)?;
                    let scores = raw_scores(&s_dst, &t_src, nbrs);
                    let logits: EdgeValues = scores
                        .iter()
                        .map(|r| r.iter().map(|&u| leaky_relu(u, spec.leaky_slope)).collect())
                        .collect();
                    let alpha = attention_softmax(&logits, nbrs, &g.valid)?;
                    let cols = k * spec.out_dim..(k + 1) * spec.out_dim;
                    pre.slice_mut(s![.., cols]).assign(&weighted_sum(&alpha, &z, nbrs));
                    heads.push(HeadCache {
                        z,
                        scores,
                        logits,
                        alpha,
                    });
                }
                pre
            }
            LayerKind::Gcn => {
                let q = project(&h, &lp.weights[0])?;
                let r = q.mapv(|v| v.max(0.0));
                let pre = weighted_sum(&gcn_coefficients(nbrs, spec.normalize), &r, nbrs);
                projected = Some(q);
                pre
            }
        };
        let output = activate(&pre, spec.activation, spec.leaky_slope);
        let input = std::mem::replace(&mut h, output.clone());
        layers.push(LayerCache {
            input,
            heads,
            projected,
            pre_activation: pre,
            output,
        });
    }
    let (pooled, logit) = readout(&h, &g.valid, params.readout_w.view(), params.readout_b)?;
    Ok(ForwardTrace {
        layers,
        pooled,
        logit,
        probability: logistic(logit),
    })
}

/// Gradients of a scalar loss with respect to every parameter, given
/// `dlogit = ∂loss/∂logit`.
pub fn backward(
    trace: &ForwardTrace,
    g: &GraphTensors,
    params: &ModelParams,
    specs: &[LayerSpec],
    dlogit: f64,
) -> Gradients {
    let mut grads = Gradients::zeros_like(params, g.cap());
    let nbrs = &g.neighbors;

    grads.readout_w = &trace.pooled * dlogit;
    grads.readout_b = dlogit;
    let last = trace.final_hidden();
    let mut dh = Array2::zeros(last.raw_dim());
    let n_valid = g.valid.iter().filter(|&&v| v).count();
    if n_valid > 0 {
        let per_row = &params.readout_w * (dlogit / n_valid as f64);
        for (mut row, _) in dh.rows_mut().into_iter().zip(&g.valid).filter(|(_, &v)| v) {
            row.assign(&per_row);
        }
    }

    for (l, (spec, cache)) in specs.iter().zip(&trace.layers).enumerate().rev() {
        let lp = &params.layers[l];
        let dpre = &dh * &cache.pre_activation.mapv(|v| spec.activation.derivative(v, spec.leaky_slope));
        let mut dinput = Array2::zeros(cache.input.raw_dim());
        match spec.kind {
            LayerKind::Gat => {
                for (k, hc) in cache.heads.iter().enumerate() {
                    let dp = dpre.slice(s![.., k * spec.out_dim..(k + 1) * spec.out_dim]);
                    let a = &lp.attention[k];
                    let (a_dst, a_src) = (a.slice(s![..spec.out_dim]), a.slice(s![spec.out_dim..]));
                    let mut dz = Array2::<f64>::zeros(hc.z.raw_dim());
                    let mut ds = vec![0.0; hc.z.nrows()];
                    let mut dt = vec![0.0; hc.z.nrows()];
                    for (i, row) in nbrs.iter().enumerate() {
                        if row.is_empty() {
                            continue;
                        }
                        let dpi = dp.row(i);
                        let alpha = &hc.alpha[i];
                        let dalpha: Vec<f64> = row.iter().map(|&j| dpi.dot(&hc.z.row(j))).collect();
                        let mean: f64 = alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
                        for (kk, &j) in row.iter().enumerate() {
                            dz.row_mut(j).scaled_add(alpha[kk], &dpi);
                            let de = alpha[kk] * (dalpha[kk] - mean);
                            let du = de * leaky_relu_derivative(hc.scores[i][kk], spec.leaky_slope);
                            ds[i] += du;
                            dt[j] += du;
                        }
                    }
                    let ga = &mut grads.layers[l].attention[k];
                    for (i, zi) in hc.z.rows().into_iter().enumerate() {
                        if ds[i] != 0.0 {
                            ga.slice_mut(s![..spec.out_dim]).scaled_add(ds[i], &zi);
                        }
                        if dt[i] != 0.0 {
                            ga.slice_mut(s![spec.out_dim..]).scaled_add(dt[i], &zi);
                        }
                    }
                    for (i, mut dzi) in dz.rows_mut().into_iter().enumerate() {
                        dzi.scaled_add(ds[i], &a_dst);
                        dzi.scaled_add(dt[i], &a_src);
                    }
                    accumulate_linear(&dz, &cache.input, &lp.weights[k], &mut grads.layers[l].weights[k], &mut dinput);
                }
            }
            LayerKind::Gcn => {
                let q = cache.projected.as_ref().expect("GCN caches its projection");
                let coef = gcn_coefficients(nbrs, spec.normalize);
                let mut dq = Array2::<f64>::zeros(q.raw_dim());
                for (i, row) in nbrs.iter().enumerate() {
                    for (kk, &j) in row.iter().enumerate() {
                        dq.row_mut(j).scaled_add(coef[i][kk], &dpre.row(i));
                    }
                }
                dq.zip_mut_with(q, |d, &v| {
                    if v <= 0.0 {
                        *d = 0.0
                    }
                });
                accumulate_linear(&dq, &cache.input, &lp.weights[0], &mut grads.layers[l].weights[0], &mut dinput);
            }
        }
        dh = dinput;
    }

    for (r, ids) in g.node_tokens.iter().enumerate() {
        if ids.is_empty() {
            continue;
        }
        let share = dh.row(r).to_owned() / ids.len() as f64;
        for &t in ids.iter().filter(|&&t| t != PAD) {
            grads
                .embedding
                .entry(t)
                .or_insert_with(|| Array1::zeros(share.len()))
                .scaled_add(1.0, &share);
        }
    }
    grads.dx = dh;
    grads
}

/// For `z = h Wᵀ`: `dW += dzᵀ h`, `dh += dz W`.
fn accumulate_linear(dz: &Array2<f64>, h: &Array2<f64>, w: &Array2<f64>, dw: &mut Array2<f64>, dh: &mut Array2<f64>) {
    *dw += &dz.t().dot(h);
    *dh += &dz.dot(w);
}

/// Convenience for callers that only need the probability.
pub fn predict_probability(g: &GraphTensors, params: &ModelParams, specs: &[LayerSpec]) -> Result<f64, GnnError> {
    Ok(forward(g, params, specs)?.probability)
}

/// Final hidden representation for arbitrary features, used by tests and benches.
pub fn hidden_of(
    g: &GraphTensors,
    x: ArrayView2<'_, f64>,
    params: &ModelParams,
    specs: &[LayerSpec],
) -> Result<Array2<f64>, GnnError> {
    Ok(forward_with_features(g, x.to_owned(), params, specs)?.final_hidden().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::spec::{stack, Activation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_graph(cap: usize, n: usize, dim: usize, vocab: usize, rng: &mut ChaCha8Rng) -> GraphTensors {
        let mut neighbors = vec![Vec::new(); cap];
        for (i, nb) in neighbors.iter_mut().enumerate().take(n) {
            nb.push(i);
            if i > 0 {
                nb.push(i - 1);
            }
            if i + 1 < n {
                nb.push(i + 1);
            }
            if i >= 3 && rng.gen_bool(0.5) {
                nb.push(i - 3);
            }
            nb.sort_unstable();
        }
        let node_tokens: Vec<Vec<usize>> = (0..n)
            .map(|_| (0..rng.gen_range(1..4)).map(|_| rng.gen_range(1..vocab)).collect())
            .collect();
        GraphTensors {
            x: Array2::zeros((cap, dim)),
            neighbors,
            valid: (0..cap).map(|r| r < n).collect(),
            label: Some(1),
            node_ids: (0..n).collect(),
            node_tokens,
        }
    }

    /// Central-difference gradient of the logit for every parameter scalar.
    fn numeric(g: &GraphTensors, params: &ModelParams, specs: &[LayerSpec], eps: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let n = params.param_count();
        for idx in 0..n {
            let bump = |delta: f64| {
                let mut p = params.clone();
                let mut seen = 0;
                p.visit_mut(|_, xs| {
                    if idx >= seen && idx < seen + xs.len() {
                        xs[idx - seen] += delta;
                    }
                    seen += xs.len();
                });
                forward(g, &p, specs).unwrap().logit
            };
            out.push((bump(eps) - bump(-eps)) / (2.0 * eps));
        }
        out
    }

    fn analytic(g: &GraphTensors, params: &ModelParams, specs: &[LayerSpec]) -> Vec<f64> {
        let trace = forward(g, params, specs).unwrap();
        let grads = backward(&trace, g, params, specs, 1.0);
        let mut out = Vec::new();
        grads.visit_dense(params, |_, xs| out.extend_from_slice(xs));
        out
    }

    fn check_close(specs: &[LayerSpec], seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = toy_graph(7, 5, specs[0].in_dim, 6, &mut rng);
        let mut params = ModelParams::init(specs, 6, specs[0].in_dim, 1.0, &mut rng);
        params.readout_b = 0.1;
        let a = analytic(&g, &params, specs);
        let n = numeric(&g, &params, specs, 1e-6);
        assert_eq!(a.len(), n.len());
        for (i, (x, y)) in a.iter().zip(&n).enumerate() {
            assert!((x - y).abs() <= 1e-5 * (1.0 + x.abs().max(y.abs())), "param {i}: {x} vs {y}");
        }
    }

    #[test]
    fn gat_backward_matches_differences_identity() {
        let specs: Vec<_> = stack(LayerKind::Gat, 3, 3, 2, 2)
            .into_iter()
            .map(|s| s.with_activation(Activation::Identity))
            .collect();
        check_close(&specs, 1);
    }

    #[test]
    fn gcn_backward_matches_differences() {
        let specs: Vec<_> = stack(LayerKind::Gcn, 3, 4, 2, 1)
            .into_iter()
            .map(|mut s| {
                s.normalize = true;
                s.with_activation(Activation::Identity)
            })
            .collect();
        check_close(&specs, 2);
    }

    #[test]
    fn trace_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let specs = stack(LayerKind::Gat, 4, 3, 2, 2);
        let g = toy_graph(9, 6, 4, 5, &mut rng);
        let p = ModelParams::init(&specs, 5, 4, 1.0, &mut rng);
        let t = forward(&g, &p, &specs).unwrap();
        assert_eq!(t.final_hidden().dim(), (9, 6));
        assert_eq!(t.attention().count(), 4);
        assert!((0.0..=1.0).contains(&t.probability));
        for v in t.attention() {
            for (i, row) in v.alpha.iter().enumerate() {
                if g.valid[i] {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
        // padding rows stay zero through the stack
        assert!(t.final_hidden().rows().into_iter().skip(6).all(|r| r.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let specs = stack(LayerKind::Gat, 4, 3, 1, 1);
        let g = toy_graph(5, 3, 4, 5, &mut rng);
        let p = ModelParams::init(&specs, 5, 4, 1.0, &mut rng);
        let bad = forward_with_features(&g, Array2::zeros((5, 3)), &p, &specs);
        assert!(matches!(bad, Err(GnnError::ShapeMismatch { .. })));
        let bad = forward_with_features(&g, Array2::zeros((4, 4)), &p, &specs);
        assert!(matches!(bad, Err(GnnError::ShapeMismatch { .. })));
    }

    #[test]
    fn pad_row_gets_no_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let specs = stack(LayerKind::Gat, 3, 3, 1, 1);
        let mut g = toy_graph(4, 3, 3, 5, &mut rng);
        g.node_tokens[0].push(PAD);
        let p = ModelParams::init(&specs, 5, 3, 1.0, &mut rng);
        let t = forward(&g, &p, &specs).unwrap();
        let grads = backward(&t, &g, &p, &specs, 1.0);
        assert!(!grads.embedding.contains_key(&PAD));
    }

    #[test]
    fn readout_gradient_is_pooled() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let specs = stack(LayerKind::Gcn, 2, 2, 1, 1);
        let g = toy_graph(3, 2, 2, 4, &mut rng);
        let p = ModelParams::init(&specs, 4, 2, 1.0, &mut rng);
        let t = forward(&g, &p, &specs).unwrap();
        let grads = backward(&t, &g, &p, &specs, 0.5);
        assert_eq!(grads.readout_w, &t.pooled * 0.5);
        assert_eq!(grads.readout_b, 0.5);
    }
}
