//! Dense reference implementation of the detector's attention layers.
//!
//! Token embeddings are pooled into sentence vectors, sentence vectors into a
//! paragraph vector, each by softmax attention with a scalar score per item
//! (`w · x + b`). Paragraph vectors are then refined by single-head graph
//! attention over the document structure. The multi-task objective combines
//! the detection, term and scope losses linearly.
//!
//! Everything here is small-`d`, `f64`, allocation-happy code meant for checking
//! the math, not for training.

mod checks;
mod grad;

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

pub use checks::{run_selfcheck, PropertyOutcome, SelfcheckOptions};
pub use grad::{
    grad_check, numeric_gradient, ConstantLoss, Differentiable, HierarchicalPoolLoss,
    PoolInputLoss, PoolWeightLoss, QuadraticLoss,
};

#[derive(Debug, Error, PartialEq)]
pub enum AttentionError {
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite value")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("edge endpoint {0} has no features")]
    UnknownNode(usize),
    #[error("negative loss component {0}")]
    NegativeLoss(f64),
    #[error("negative loss weight {0}")]
    NegativeWeight(f64),
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
}

pub type Vector = Vec<f64>;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix, AttentionError> {
        if data.len() != rows * cols {
            return Err(AttentionError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(AttentionError::NonFinite);
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Matrix {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Matrix { rows: n, cols: n, data }
    }

    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Matrix {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vector, AttentionError> {
        if x.len() != self.cols {
            return Err(AttentionError::DimensionMismatch {
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn random_vector<R: Rng + ?Sized>(d: usize, scale: f64, rng: &mut R) -> Vector {
    (0..d).map(|_| rng.random_range(-scale..=scale)).collect()
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Result<Vector, AttentionError> {
    if logits.is_empty() {
        return Err(AttentionError::EmptyInput);
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(AttentionError::NonFinite);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Scoring row `w` (1×d) and bias `b` producing one logit per item.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionScorer {
    pub w: Vector,
    pub b: f64,
}

impl AttentionScorer {
    pub fn new(w: Vector, b: f64) -> AttentionScorer {
        AttentionScorer { w, b }
    }

    pub fn random<R: Rng + ?Sized>(d: usize, scale: f64, rng: &mut R) -> AttentionScorer {
        AttentionScorer {
            w: random_vector(d, scale, rng),
            b: rng.random_range(-scale..=scale),
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }
}

/// Pooled vector and the attention weights that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub pooled: Vector,
    pub weights: Vector,
}

/// `weights = softmax(w · x_j + b)`, `pooled = Σ_j weights_j x_j`.
pub fn attention_pool(items: &[Vector], scorer: &AttentionScorer) -> Result<Pooled, AttentionError> {
    if items.is_empty() {
        return Err(AttentionError::EmptyInput);
    }
    let d = scorer.dim();
    for x in items {
        if x.len() != d {
            return Err(AttentionError::DimensionMismatch {
                expected: d,
                found: x.len(),
            });
        }
    }
    let logits: Vec<f64> = items.iter().map(|x| dot(&scorer.w, x) + scorer.b).collect();
    let weights = softmax(&logits)?;
    let mut pooled = vec![0.0; d];
    for (x, a) in items.iter().zip(&weights) {
        for (p, v) in pooled.iter_mut().zip(x) {
            *p += a * v;
        }
    }
    Ok(Pooled { pooled, weights })
}

/// Token-level attention: token embeddings to a sentence vector.
pub fn token_attention(tokens: &[Vector], scorer: &AttentionScorer) -> Result<Pooled, AttentionError> {
    attention_pool(tokens, scorer)
}

/// Sentence-level attention: sentence vectors to a paragraph vector. Same
/// mechanism as [`token_attention`], one level up.
pub fn sentence_attention(
    sentences: &[Vector],
    scorer: &AttentionScorer,
) -> Result<Pooled, AttentionError> {
    attention_pool(sentences, scorer)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalPooled {
    pub paragraph: Vector,
    pub sentences: Vec<Vector>,
    pub token_weights: Vec<Vector>,
    pub sentence_weights: Vector,
}

/// Tokens to sentences to paragraph.
pub fn hierarchical_attention(
    paragraph: &[Vec<Vector>],
    token_scorer: &AttentionScorer,
    sentence_scorer: &AttentionScorer,
) -> Result<HierarchicalPooled, AttentionError> {
    let mut sentences = Vec::with_capacity(paragraph.len());
    let mut token_weights = Vec::with_capacity(paragraph.len());
    for tokens in paragraph {
        let s = token_attention(tokens, token_scorer)?;
        sentences.push(s.pooled);
        token_weights.push(s.weights);
    }
    let p = sentence_attention(&sentences, sentence_scorer)?;
    Ok(HierarchicalPooled {
        paragraph: p.pooled,
        sentences,
        token_weights,
        sentence_weights: p.weights,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphAttention {
    /// Updated feature per node.
    pub outputs: BTreeMap<usize, Vector>,
    /// Neighbours of each node with their attention weights.
    pub weights: BTreeMap<usize, Vec<(usize, f64)>>,
}

/// Single-head graph attention.
///
/// An edge `(i, j)` makes `j` a neighbour of `i`. For every node,
/// `e_ij = a · [W h_i ‖ W h_j]`, `γ_i = softmax_j(e_ij)` and
/// `h'_i = Σ_j γ_ij W h_j`. Nodes without neighbours attend to themselves. The
/// score is the plain dot product, with no nonlinearity.
pub fn graph_attention(
    feats: &BTreeMap<usize, Vector>,
    edges: &[(usize, usize)],
    w: &Matrix,
    a: &[f64],
) -> Result<GraphAttention, AttentionError> {
    if a.len() != 2 * w.rows() {
        return Err(AttentionError::DimensionMismatch {
            expected: 2 * w.rows(),
            found: a.len(),
        });
    }
    let projected: BTreeMap<usize, Vector> = feats
        .iter()
        .map(|(&k, h)| w.matvec(h).map(|p| (k, p)))
        .collect::<Result<_, _>>()?;
    let mut neighbours: BTreeMap<usize, Vec<usize>> = feats.keys().map(|&k| (k, Vec::new())).collect();
    for &(i, j) in edges {
        if !feats.contains_key(&j) {
            return Err(AttentionError::UnknownNode(j));
        }
        let list = neighbours.get_mut(&i).ok_or(AttentionError::UnknownNode(i))?;
        if !list.contains(&j) {
            list.push(j);
        }
    }
    let (a_self, a_nb) = a.split_at(w.rows());
    let mut outputs = BTreeMap::new();
    let mut weights = BTreeMap::new();
    for (&i, list) in neighbours.iter_mut() {
        if list.is_empty() {
            list.push(i);
        }
        let wi = &projected[&i];
        let scores: Vec<f64> = list
            .iter()
            .map(|j| dot(a_self, wi) + dot(a_nb, &projected[j]))
            .collect();
        let gamma = softmax(&scores)?;
        let mut out = vec![0.0; w.rows()];
        for (j, g) in list.iter().zip(&gamma) {
            for (o, v) in out.iter_mut().zip(&projected[j]) {
                *o += g * v;
            }
        }
        outputs.insert(i, out);
        weights.insert(i, list.iter().copied().zip(gamma).collect());
    }
    Ok(GraphAttention { outputs, weights })
}

/// Task weights of the multi-task objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub definition: f64,
    pub term: f64,
    pub scope: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            definition: 0.4,
            term: 0.3,
            scope: 0.3,
        }
    }
}

impl LossWeights {
    pub fn new(definition: f64, term: f64, scope: f64) -> Result<LossWeights, AttentionError> {
        for w in [definition, term, scope] {
            if !w.is_finite() {
                return Err(AttentionError::NonFinite);
            }
            if w < 0.0 {
                return Err(AttentionError::NegativeWeight(w));
            }
        }
        Ok(LossWeights {
            definition,
            term,
            scope,
        })
    }
}

pub fn multitask_loss(
    l_def: f64,
    l_term: f64,
    l_scope: f64,
    w: LossWeights,
) -> Result<f64, AttentionError> {
    for l in [l_def, l_term, l_scope] {
        if !l.is_finite() {
            return Err(AttentionError::NonFinite);
        }
        if l < 0.0 {
            return Err(AttentionError::NegativeLoss(l));
        }
    }
    Ok(w.definition * l_def + w.term * l_term + w.scope * l_scope)
}

/// Binary cross-entropy of predicted probability `p` against label `y`.
pub fn binary_cross_entropy(p: f64, y: bool) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean token-level cross-entropy over rows of class probabilities.
pub fn token_cross_entropy(probs: &[Vector], labels: &[usize]) -> Result<f64, AttentionError> {
    if probs.is_empty() {
        return Err(AttentionError::EmptyInput);
    }
    if probs.len() != labels.len() {
        return Err(AttentionError::DimensionMismatch {
            expected: probs.len(),
            found: labels.len(),
        });
    }
    let mut total = 0.0;
    for (row, &y) in probs.iter().zip(labels) {
        let p = *row.get(y).ok_or(AttentionError::DimensionMismatch {
            expected: row.len(),
            found: y,
        })?;
        total -= p.max(1e-12).ln();
    }
    Ok(total / probs.len() as f64)
}
