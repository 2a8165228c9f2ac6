//! Single-layer building blocks: attention logits, neighborhood softmax,
//! attention-weighted aggregation, the GCN propagation rule and the readout.
//!
//! Per-edge quantities are stored ragged, aligned with the neighbor lists:
//! `values[i][k]` belongs to the edge from `neighbors[i][k]` into `i`.

use ndarray::{Array1, Array2, ArrayView1};

use super::spec::{leaky_relu, Activation};
use super::GnnError;

pub type EdgeValues = Vec<Vec<f64>>;

fn check(what: &str, expected: usize, found: usize) -> Result<(), GnnError> {
    if expected == found {
        Ok(())
    } else {
        Err(GnnError::ShapeMismatch {
            what: what.to_string(),
            expected,
            found,
        })
    }
}

/// `z = h · wᵀ`, i.e. `z_i = W h_i` for every row.
pub fn project(h: &Array2<f64>, w: &Array2<f64>) -> Result<Array2<f64>, GnnError> {
    check("feature columns vs weight input dim", w.ncols(), h.ncols())?;
    Ok(h.dot(&w.t()))
}

/// Target and neighbor halves of the attention score for each projected row.
pub(crate) fn attention_halves(z: &Array2<f64>, a: &Array1<f64>) -> Result<(Vec<f64>, Vec<f64>), GnnError> {
    let out = z.ncols();
    check("attention vector length", 2 * out, a.len())?;
    let (a_dst, a_src) = (a.slice(ndarray::s![..out]), a.slice(ndarray::s![out..]));
    let s = z.rows().into_iter().map(|r| r.dot(&a_dst)).collect();
    let t = z.rows().into_iter().map(|r| r.dot(&a_src)).collect();
    Ok((s, t))
}

/// Pre-LeakyReLU scores `aᵀ[W h_i ∥ W h_j]` for every edge.
pub(crate) fn raw_scores(s: &[f64], t: &[f64], neighbors: &[Vec<usize>]) -> EdgeValues {
    neighbors
        .iter()
        .enumerate()
        .map(|(i, nbrs)| nbrs.iter().map(|&j| s[i] + t[j]).collect())
        .collect()
}

/// Attention logits `e_ij = LeakyReLU(aᵀ[W h_i ∥ W h_j])` for every edge
/// `j → i` in `neighbors`.
pub fn gat_logits(
    h: &Array2<f64>,
    w: &Array2<f64>,
    a: &Array1<f64>,
    slope: f64,
    neighbors: &[Vec<usize>],
) -> Result<EdgeValues, GnnError> {
    check("neighbor lists vs rows", h.nrows(), neighbors.len())?;
    let z = project(h, w)?;
    let (s, t) = attention_halves(&z, a)?;
    Ok(raw_scores(&s, &t, neighbors)
        .into_iter()
        .map(|row| row.into_iter().map(|u| leaky_relu(u, slope)).collect())
        .collect())
}

/// Softmax of the logits over each valid node's neighborhood, with the
/// per-neighborhood maximum subtracted first.
pub fn attention_softmax(
    e: &EdgeValues,
    neighbors: &[Vec<usize>],
    valid: &[bool],
) -> Result<EdgeValues, GnnError> {
    check("logit rows vs neighbor lists", neighbors.len(), e.len())?;
    check("valid mask vs neighbor lists", neighbors.len(), valid.len())?;
    e.iter()
        .enumerate()
        .map(|(i, row)| {
            check("logits vs neighbors", neighbors[i].len(), row.len())?;
            if row.is_empty() {
                return if valid[i] {
                    Err(GnnError::EmptyNeighborhood { row: i })
                } else {
                    Ok(Vec::new())
                };
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            Ok(exps.into_iter().map(|x| x / sum).collect())
        })
        .collect()
}

/// Square matrix with `values[i][k]` at `(i, neighbors[i][k])` and zero elsewhere.
pub fn to_dense(values: &EdgeValues, neighbors: &[Vec<usize>]) -> Array2<f64> {
    let n = neighbors.len();
    let mut out = Array2::zeros((n, n));
    for (i, (row, nbrs)) in values.iter().zip(neighbors).enumerate() {
        for (&v, &j) in row.iter().zip(nbrs) {
            out[[i, j]] = v;
        }
    }
    out
}

/// `pre_i = Σ_j c_ij z_j` over each neighborhood.
pub(crate) fn weighted_sum(coef: &EdgeValues, z: &Array2<f64>, neighbors: &[Vec<usize>]) -> Array2<f64> {
    let mut out = Array2::zeros(z.raw_dim());
    for (i, nbrs) in neighbors.iter().enumerate() {
        let mut row = out.row_mut(i);
        for (k, &j) in nbrs.iter().enumerate() {
            row.scaled_add(coef[i][k], &z.row(j));
        }
    }
    out
}

pub(crate) fn activate(pre: &Array2<f64>, act: Activation, slope: f64) -> Array2<f64> {
    pre.mapv(|x| act.apply(x, slope))
}

/// `h_i = σ(Σ_{j∈N(i)} α_ij W h_j)` for one attention head. Rows with an
/// empty neighborhood come out as zero.
pub fn gat_aggregate(
    h: &Array2<f64>,
    alpha: &EdgeValues,
    w: &Array2<f64>,
    neighbors: &[Vec<usize>],
    activation: Activation,
    slope: f64,
) -> Result<Array2<f64>, GnnError> {
    check("neighbor lists vs rows", h.nrows(), neighbors.len())?;
    check("attention rows vs rows", h.nrows(), alpha.len())?;
    for (i, (a, n)) in alpha.iter().zip(neighbors).enumerate() {
        check(&format!("attention entries of row {i}"), n.len(), a.len())?;
    }
    let z = project(h, w)?;
    Ok(activate(&weighted_sum(alpha, &z, neighbors), activation, slope))
}

/// Propagation coefficients: 1 per edge, or `1/sqrt(|N(i)|·|N(j)|)` when normalized.
pub fn gcn_coefficients(neighbors: &[Vec<usize>], normalize: bool) -> EdgeValues {
    neighbors
        .iter()
        .map(|nbrs| {
            nbrs.iter()
                .map(|&j| {
                    if normalize {
                        let di = nbrs.len() as f64;
                        let dj = neighbors[j].len().max(1) as f64;
                        1.0 / (di * dj).sqrt()
                    } else {
                        1.0
                    }
                })
                .collect()
        })
        .collect()
}

/// `h' = σ(A · ReLU(h Wᵀ))` with `A` the neighbor structure (self-loops
/// included), optionally degree-normalized.
pub fn gcn_layer(
    h: &Array2<f64>,
    w: &Array2<f64>,
    neighbors: &[Vec<usize>],
    activation: Activation,
    slope: f64,
    normalize: bool,
) -> Result<Array2<f64>, GnnError> {
    check("neighbor lists vs rows", h.nrows(), neighbors.len())?;
    let r = project(h, w)?.mapv(|x| x.max(0.0));
    let coef = gcn_coefficients(neighbors, normalize);
    Ok(activate(&weighted_sum(&coef, &r, neighbors), activation, slope))
}

/// Mean of the valid rows; zero when there are none.
pub fn mean_pool(h: &Array2<f64>, valid: &[bool]) -> Array1<f64> {
    let mut pooled = Array1::zeros(h.ncols());
    let n = valid.iter().filter(|&&v| v).count();
    if n == 0 {
        return pooled;
    }
    for (row, _) in h.rows().into_iter().zip(valid).filter(|(_, &v)| v) {
        pooled += &row;
    }
    pooled / n as f64
}

/// Masked mean-pool followed by the affine logit head.
pub fn readout(
    h: &Array2<f64>,
    valid: &[bool],
    w: ArrayView1<'_, f64>,
    b: f64,
) -> Result<(Array1<f64>, f64), GnnError> {
    check("valid mask vs rows", h.nrows(), valid.len())?;
    check("readout weights vs features", h.ncols(), w.len())?;
    let pooled = mean_pool(h, valid);
    let logit = pooled.dot(&w) + b;
    Ok((pooled, logit))
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
