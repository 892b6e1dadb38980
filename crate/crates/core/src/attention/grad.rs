//! Analytic gradients of attention-pooled losses and a finite-difference checker.

use super::{attention_pool, dot, AttentionError, AttentionScorer, Vector};

/// A scalar function of a parameter vector with a hand-derived gradient.
pub trait Differentiable {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vector;
}

/// Central differences `(f(x + eps e_i) - f(x - eps e_i)) / 2 eps`.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vector {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Coordinates where both gradients are below this are compared absolutely.
const REL_FLOOR: f64 = 1e-8;

/// Largest per-coordinate relative error between the analytic gradient and
/// central finite differences, `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F: Differentiable + ?Sized>(f: &F, x: &[f64], eps: f64) -> Result<f64, AttentionError> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(AttentionError::InvalidStep(eps));
    }
    let analytic = f.gradient(x);
    let numeric = numeric_gradient(|p| f.value(p), x, eps);
    if analytic.len() != numeric.len() {
        return Err(AttentionError::DimensionMismatch {
            expected: numeric.len(),
            found: analytic.len(),
        });
    }
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(&numeric) {
        if !a.is_finite() || !n.is_finite() {
            return Err(AttentionError::NonFinite);
        }
        let denom = a.abs().max(n.abs()).max(REL_FLOOR);
        worst = worst.max((a - n).abs() / denom);
    }
    Ok(worst)
}

/// `‖x‖²`.
pub struct QuadraticLoss;

impl Differentiable for QuadraticLoss {
    fn value(&self, x: &[f64]) -> f64 {
        dot(x, x)
    }

    fn gradient(&self, x: &[f64]) -> Vector {
        x.iter().map(|v| 2.0 * v).collect()
    }
}

pub struct ConstantLoss(pub f64);

impl Differentiable for ConstantLoss {
    fn value(&self, _: &[f64]) -> f64 {
        self.0
    }

    fn gradient(&self, x: &[f64]) -> Vector {
        vec![0.0; x.len()]
    }
}

fn half_sq_error(p: &[f64], target: &[f64]) -> f64 {
    0.5 * p.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
}

/// Backward pass of one pooling layer.
///
/// Given `upstream = dL/dpooled`, returns `dL/dlogit_j` for every item:
/// `α_j (upstream·x_j − upstream·pooled)`.
fn logit_grads(items: &[Vector], weights: &[f64], pooled: &[f64], upstream: &[f64]) -> Vector {
    let centre = dot(upstream, pooled);
    items
        .iter()
        .zip(weights)
        .map(|(x, a)| a * (dot(upstream, x) - centre))
        .collect()
}

/// `½‖pool(items; w, b) − target‖²` as a function of the scoring row `w`.
pub struct PoolWeightLoss {
    pub items: Vec<Vector>,
    pub bias: f64,
    pub target: Vector,
}

impl PoolWeightLoss {
    fn pool(&self, w: &[f64]) -> super::Pooled {
        attention_pool(&self.items, &AttentionScorer::new(w.to_vec(), self.bias))
            .expect("dimensions fixed at construction")
    }
}

impl Differentiable for PoolWeightLoss {
    fn value(&self, w: &[f64]) -> f64 {
        half_sq_error(&self.pool(w).pooled, &self.target)
    }

    fn gradient(&self, w: &[f64]) -> Vector {
        let p = self.pool(w);
        let g: Vector = p.pooled.iter().zip(&self.target).map(|(a, b)| a - b).collect();
        let dz = logit_grads(&self.items, &p.weights, &p.pooled, &g);
        let mut out = vec![0.0; w.len()];
        for (x, d) in self.items.iter().zip(&dz) {
            for (o, v) in out.iter_mut().zip(x) {
                *o += d * v;
            }
        }
        out
    }
}

/// `½‖pool(items; w, b) − target‖²` as a function of the flattened items.
pub struct PoolInputLoss {
    pub scorer: AttentionScorer,
    pub n_items: usize,
    pub target: Vector,
}

impl PoolInputLoss {
    fn unflatten(&self, x: &[f64]) -> Vec<Vector> {
        x.chunks(self.scorer.dim()).map(<[f64]>::to_vec).collect()
    }
}

impl Differentiable for PoolInputLoss {
    fn value(&self, x: &[f64]) -> f64 {
        let items = self.unflatten(x);
        let p = attention_pool(&items, &self.scorer).expect("dimensions fixed at construction");
        half_sq_error(&p.pooled, &self.target)
    }

    fn gradient(&self, x: &[f64]) -> Vector {
        let items = self.unflatten(x);
        debug_assert_eq!(items.len(), self.n_items);
        let p = attention_pool(&items, &self.scorer).expect("dimensions fixed at construction");
        let g: Vector = p.pooled.iter().zip(&self.target).map(|(a, b)| a - b).collect();
        let dz = logit_grads(&items, &p.weights, &p.pooled, &g);
        let mut out = Vec::with_capacity(x.len());
        for (a, d) in p.weights.iter().zip(&dz) {
            for (gk, wk) in g.iter().zip(&self.scorer.w) {
                out.push(a * gk + d * wk);
            }
        }
        out
    }
}

/// `½‖p − target‖²` for the two-level pooling (tokens → sentences →
/// paragraph), as a function of `[w_token ; w_sentence]`.
pub struct HierarchicalPoolLoss {
    pub paragraph: Vec<Vec<Vector>>,
    pub token_bias: f64,
    pub sentence_bias: f64,
    pub target: Vector,
}

impl HierarchicalPoolLoss {
    fn forward(&self, params: &[f64]) -> (Vec<super::Pooled>, super::Pooled) {
        let d = params.len() / 2;
        let ts = AttentionScorer::new(params[..d].to_vec(), self.token_bias);
        let ss = AttentionScorer::new(params[d..].to_vec(), self.sentence_bias);
        let sentences: Vec<super::Pooled> = self
            .paragraph
            .iter()
            .map(|tokens| attention_pool(tokens, &ts).expect("dimensions fixed at construction"))
            .collect();
        let svecs: Vec<Vector> = sentences.iter().map(|s| s.pooled.clone()).collect();
        let p = attention_pool(&svecs, &ss).expect("dimensions fixed at construction");
        (sentences, p)
    }
}

impl Differentiable for HierarchicalPoolLoss {
    fn value(&self, params: &[f64]) -> f64 {
        half_sq_error(&self.forward(params).1.pooled, &self.target)
    }

    fn gradient(&self, params: &[f64]) -> Vector {
        let d = params.len() / 2;
        let w_s = &params[d..];
        let (sentences, p) = self.forward(params);
        let svecs: Vec<Vector> = sentences.iter().map(|s| s.pooled.clone()).collect();
        let g: Vector = p.pooled.iter().zip(&self.target).map(|(a, b)| a - b).collect();
        let dzeta = logit_grads(&svecs, &p.weights, &p.pooled, &g);

        let mut grad_wt = vec![0.0; d];
        let mut grad_ws = vec![0.0; d];
        for (i, s) in svecs.iter().enumerate() {
            for (o, v) in grad_ws.iter_mut().zip(s) {
                *o += dzeta[i] * v;
            }
            // dL/ds_i = β_i g + dζ_i w_s
            let upstream: Vector = g
                .iter()
                .zip(w_s)
                .map(|(gk, wk)| p.weights[i] * gk + dzeta[i] * wk)
                .collect();
            let tokens = &self.paragraph[i];
            let dz = logit_grads(tokens, &sentences[i].weights, &sentences[i].pooled, &upstream);
            for (t, dzj) in tokens.iter().zip(&dz) {
                for (o, v) in grad_wt.iter_mut().zip(t) {
                    *o += dzj * v;
                }
            }
        }
        grad_wt.extend(grad_ws);
        grad_wt
    }
}
