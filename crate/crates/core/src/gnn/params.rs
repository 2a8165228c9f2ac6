use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::Rng;

use super::spec::{LayerKind, LayerSpec};
use super::GnnError;
use crate::featurize::{EmbeddingTable, PAD};

/// Weights of one layer. `attention` is empty for GCN layers.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// One `out × in` matrix per head.
    pub weights: Vec<Array2<f64>>,
    /// One `2·out` vector per head: the first half scores the target node,
    /// the second half the neighbor.
    pub attention: Vec<Array1<f64>>,
}

/// Every learnable array of the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<LayerParams>,
    /// Logit head over the mean-pooled node representation.
    pub readout_w: Array1<f64>,
    pub readout_b: f64,
    pub embedding: EmbeddingTable,
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..=limit))
}

impl ModelParams {
    /// Glorot-uniform weights (the attention vector as a `1 × 2·out` map and
    /// the readout as a `1 × D` map), zero bias, and uniform embeddings in
    /// `[-embed_scale, embed_scale]` with a zero PAD row.
    pub fn init(
        specs: &[LayerSpec],
        vocab_size: usize,
        embed_dim: usize,
        embed_scale: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let embedding = EmbeddingTable::random(vocab_size, embed_dim, embed_scale, rng);
        let layers = specs
            .iter()
            .map(|s| LayerParams {
                weights: (0..s.n_heads()).map(|_| glorot(s.out_dim, s.in_dim, rng)).collect(),
                attention: match s.kind {
                    LayerKind::Gat => (0..s.heads)
                        .map(|_| glorot(1, 2 * s.out_dim, rng).row(0).to_owned())
                        .collect(),
                    LayerKind::Gcn => Vec::new(),
                },
            })
            .collect();
        let out_dim = specs.last().map(LayerSpec::output_dim).unwrap_or(embed_dim);
        ModelParams {
            layers,
            readout_w: glorot(1, out_dim, rng).row(0).to_owned(),
            readout_b: 0.0,
            embedding,
        }
    }

    /// All-zero parameters shaped for `specs`.
    pub fn zeros(specs: &[LayerSpec], vocab_size: usize, embed_dim: usize) -> Self {
        let layers = specs
            .iter()
            .map(|s| LayerParams {
                weights: (0..s.n_heads()).map(|_| Array2::zeros((s.out_dim, s.in_dim))).collect(),
                attention: match s.kind {
                    LayerKind::Gat => (0..s.heads).map(|_| Array1::zeros(2 * s.out_dim)).collect(),
                    LayerKind::Gcn => Vec::new(),
                },
            })
            .collect();
        let out_dim = specs.last().map(LayerSpec::output_dim).unwrap_or(embed_dim);
        ModelParams {
            layers,
            readout_w: Array1::zeros(out_dim),
            readout_b: 0.0,
            embedding: EmbeddingTable::zeros(vocab_size, embed_dim),
        }
    }

    pub fn check_shapes(&self, specs: &[LayerSpec]) -> Result<(), GnnError> {
        let mismatch = |what: String, expected: usize, found: usize| {
            Err(GnnError::ShapeMismatch {
                what,
                expected,
                found,
            })
        };
        if self.layers.len() != specs.len() {
            return mismatch("layer count".into(), specs.len(), self.layers.len());
        }
        for (l, (p, s)) in self.layers.iter().zip(specs).enumerate() {
            if p.weights.len() != s.n_heads() {
                return mismatch(format!("layer {l} weight heads"), s.n_heads(), p.weights.len());
            }
            for w in &p.weights {
                if w.dim() != (s.out_dim, s.in_dim) {
                    return mismatch(format!("layer {l} weight rows x cols"), s.out_dim * s.in_dim, w.len());
                }
            }
            let want_att = if s.kind == LayerKind::Gat { s.heads } else { 0 };
            if p.attention.len() != want_att {
                return mismatch(format!("layer {l} attention heads"), want_att, p.attention.len());
            }
            for a in &p.attention {
                if a.len() != 2 * s.out_dim {
                    return mismatch(format!("layer {l} attention length"), 2 * s.out_dim, a.len());
                }
            }
        }
        if let Some(first) = specs.first() {
            if first.in_dim != self.embedding.dim() {
                return mismatch("embedding dim".into(), first.in_dim, self.embedding.dim());
            }
        }
        let out = specs.last().map(LayerSpec::output_dim).unwrap_or(self.embedding.dim());
        if self.readout_w.len() != out {
            return mismatch("readout weights".into(), out, self.readout_w.len());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = self.readout_b.is_finite();
        self.visit(|_, xs| ok &= xs.iter().all(|x| x.is_finite()));
        ok
    }

    /// Visits every parameter block in a fixed order with a stable name.
    pub fn visit(&self, mut f: impl FnMut(&str, &[f64])) {
        for (l, layer) in self.layers.iter().enumerate() {
            for (h, w) in layer.weights.iter().enumerate() {
                f(&format!("layer{l}.head{h}.weight"), w.as_slice().expect("standard layout"));
            }
            for (h, a) in layer.attention.iter().enumerate() {
                f(&format!("layer{l}.head{h}.attention"), a.as_slice().expect("standard layout"));
            }
        }
        f("readout.weight", self.readout_w.as_slice().expect("standard layout"));
        f("readout.bias", std::slice::from_ref(&self.readout_b));
        f("embedding", self.embedding.weights.as_slice().expect("standard layout"));
    }

    /// Mutable counterpart of [`ModelParams::visit`], same order.
    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, &mut [f64])) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (h, w) in layer.weights.iter_mut().enumerate() {
                f(&format!("layer{l}.head{h}.weight"), w.as_slice_mut().expect("standard layout"));
            }
            for (h, a) in layer.attention.iter_mut().enumerate() {
                f(&format!("layer{l}.head{h}.attention"), a.as_slice_mut().expect("standard layout"));
            }
        }
        f("readout.weight", self.readout_w.as_slice_mut().expect("standard layout"));
        f("readout.bias", std::slice::from_mut(&mut self.readout_b));
        f("embedding", self.embedding.weights.as_slice_mut().expect("standard layout"));
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(|_, xs| n += xs.len());
        n
    }
}

/// Gradients with the shapes of [`ModelParams`]. Embedding rows are kept
/// sparse; the PAD row never appears.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
    pub readout_w: Array1<f64>,
    pub readout_b: f64,
    pub embedding: BTreeMap<usize, Array1<f64>>,
    /// Gradient with respect to the node feature matrix.
    pub dx: Array2<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams, cap: usize) -> Self {
        Gradients {
            layers: params
                .layers
                .iter()
                .map(|l| LayerParams {
                    weights: l.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
                    attention: l.attention.iter().map(|a| Array1::zeros(a.len())).collect(),
                })
                .collect(),
            readout_w: Array1::zeros(params.readout_w.len()),
            readout_b: 0.0,
            embedding: BTreeMap::new(),
            dx: Array2::zeros((cap, params.embedding.dim())),
        }
    }

    /// `self += other * scale`. `dx` is not accumulated (its shape is per graph).
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                x.scaled_add(scale, y);
            }
            for (x, y) in a.attention.iter_mut().zip(&b.attention) {
                x.scaled_add(scale, y);
            }
        }
        self.readout_w.scaled_add(scale, &other.readout_w);
        self.readout_b += scale * other.readout_b;
        for (&row, g) in &other.embedding {
            self.embedding
                .entry(row)
                .or_insert_with(|| Array1::zeros(g.len()))
                .scaled_add(scale, g);
        }
    }

    pub fn is_zero(&self) -> bool {
        let mut zero = self.readout_b == 0.0 && self.readout_w.iter().all(|&x| x == 0.0);
        for l in &self.layers {
            zero &= l.weights.iter().all(|w| w.iter().all(|&x| x == 0.0));
            zero &= l.attention.iter().all(|a| a.iter().all(|&x| x == 0.0));
        }
        zero && self.embedding.values().all(|g| g.iter().all(|&x| x == 0.0))
    }

    /// Visits gradient blocks in the order of [`ModelParams::visit`], with
    /// the embedding expanded to a dense `vocab × d` block.
    pub fn visit_dense(&self, params: &ModelParams, mut f: impl FnMut(&str, &[f64])) {
        for (l, layer) in self.layers.iter().enumerate() {
            for (h, w) in layer.weights.iter().enumerate() {
                f(&format!("layer{l}.head{h}.weight"), w.as_slice().expect("standard layout"));
            }
            for (h, a) in layer.attention.iter().enumerate() {
                f(&format!("layer{l}.head{h}.attention"), a.as_slice().expect("standard layout"));
            }
        }
        f("readout.weight", self.readout_w.as_slice().expect("standard layout"));
        f("readout.bias", std::slice::from_ref(&self.readout_b));
        let mut dense = Array2::zeros(params.embedding.weights.raw_dim());
        for (&row, g) in &self.embedding {
            if row != PAD {
                dense.row_mut(row).assign(g);
            }
        }
        f("embedding", dense.as_slice().expect("standard layout"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::spec::{stack, LayerKind};
    use rand::SeedableRng;

    #[test]
    fn init_shapes_and_ranges() {
        let specs = stack(LayerKind::Gat, 6, 4, 2, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let p = ModelParams::init(&specs, 10, 6, 0.5, &mut rng);
        p.check_shapes(&specs).unwrap();
        assert_eq!(p.layers[1].weights[0].dim(), (4, 8));
        assert_eq!(p.layers[0].attention[1].len(), 8);
        assert_eq!(p.readout_w.len(), 8);
        assert_eq!(p.readout_b, 0.0);
        let lim = (6.0f64 / 10.0).sqrt();
        assert!(p.layers[0].weights[0].iter().all(|w| w.abs() <= lim));
        assert!(p.embedding.weights.row(PAD).iter().all(|&w| w == 0.0));
        assert!(p.is_finite());
    }

    #[test]
    fn gcn_has_no_attention() {
        let specs = stack(LayerKind::Gcn, 3, 3, 1, 4);
        let p = ModelParams::zeros(&specs, 4, 3);
        p.check_shapes(&specs).unwrap();
        assert!(p.layers[0].attention.is_empty());
        assert_eq!(p.layers[0].weights.len(), 1);
    }

    #[test]
    fn shape_mismatch_detected() {
        let specs = stack(LayerKind::Gat, 3, 3, 2, 1);
        let mut p = ModelParams::zeros(&specs, 4, 3);
        p.layers[1].weights[0] = Array2::zeros((3, 2));
        assert!(matches!(p.check_shapes(&specs), Err(GnnError::ShapeMismatch { .. })));
    }

    #[test]
    fn visit_order_is_stable() {
        let specs = stack(LayerKind::Gat, 2, 2, 1, 1);
        let p = ModelParams::zeros(&specs, 3, 2);
        let mut names = Vec::new();
        p.visit(|n, _| names.push(n.to_string()));
        assert_eq!(names, [
            "layer0.head0.weight",
            "layer0.head0.attention",
            "readout.weight",
            "readout.bias",
            "embedding"
        ]);
        assert_eq!(p.param_count(), 4 + 4 + 2 + 1 + 6);
    }
}
