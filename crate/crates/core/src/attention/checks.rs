//! Seeded property suite over the attention layers.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    grad_check, graph_attention, hierarchical_attention, multitask_loss, random_vector, softmax,
    token_attention, AttentionScorer, Differentiable, HierarchicalPoolLoss, LossWeights, Matrix,
    PoolInputLoss, PoolWeightLoss, Vector,
};

pub const WEIGHT_SUM_TOL: f64 = 1e-9;
pub const SHIFT_TOL: f64 = 1e-12;
pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct SelfcheckOptions {
    pub seed: u64,
    pub trials: usize,
    /// Append a property that always fails; used to exercise failure reporting.
    pub force_failure: bool,
}

impl Default for SelfcheckOptions {
    fn default() -> Self {
        SelfcheckOptions {
            seed: 0,
            trials: 100,
            force_failure: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Largest observed deviation across trials.
    pub worst: f64,
    pub tolerance: f64,
}

struct Tracker {
    name: &'static str,
    worst: f64,
    tolerance: f64,
    failed: bool,
}

impl Tracker {
    fn new(name: &'static str, tolerance: f64) -> Tracker {
        Tracker {
            name,
            worst: 0.0,
            tolerance,
            failed: false,
        }
    }

    fn observe(&mut self, deviation: f64) {
        if deviation.is_nan() || deviation > self.tolerance {
            self.failed = true;
        }
        if deviation.is_nan() || deviation > self.worst {
            self.worst = deviation;
        }
    }

    fn finish(self) -> PropertyOutcome {
        PropertyOutcome {
            name: self.name,
            passed: !self.failed,
            worst: self.worst,
            tolerance: self.tolerance,
        }
    }
}

fn weight_deviation(w: &[f64]) -> f64 {
    let sum_err = (w.iter().sum::<f64>() - 1.0).abs();
    let neg = w.iter().map(|x| (-x).max(0.0)).fold(0.0, f64::max);
    sum_err.max(neg)
}

fn hull_violation(items: &[Vector], pooled: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for (k, v) in pooled.iter().enumerate() {
        let lo = items.iter().map(|x| x[k]).fold(f64::INFINITY, f64::min);
        let hi = items.iter().map(|x| x[k]).fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(lo - v).max(v - hi);
    }
    worst
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn items<R: Rng>(n: usize, d: usize, rng: &mut R) -> Vec<Vector> {
    (0..n).map(|_| random_vector(d, 1.0, rng)).collect()
}

/// Run every attention property for `trials` seeded random instances.
pub fn run_selfcheck(opts: SelfcheckOptions) -> Vec<PropertyOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut weights = Tracker::new("attention-weights-sum-to-one", WEIGHT_SUM_TOL);
    let mut hull = Tracker::new("pooled-in-convex-hull", 1e-12);
    let mut shift = Tracker::new("softmax-shift-invariance", SHIFT_TOL);
    let mut perm = Tracker::new("permutation-equivariance", 1e-12);
    let mut symmetric = Tracker::new("graph-attention-symmetry", 1e-12);
    let mut grad_w = Tracker::new("grad-check-scoring-row", GRAD_TOL);
    let mut grad_x = Tracker::new("grad-check-inputs", GRAD_TOL);
    let mut grad_h = Tracker::new("grad-check-hierarchical", GRAD_TOL);
    let mut loss = Tracker::new("multitask-loss-weights", 1e-12);

    for _ in 0..opts.trials {
        let d = rng.random_range(2..=6);
        let n = rng.random_range(1..=6);

        // softmax shift
        let logits = random_vector(n, 5.0, &mut rng);
        let c = rng.random_range(-50.0..50.0);
        let shifted: Vec<f64> = logits.iter().map(|x| x + c).collect();
        let (a, b) = (softmax(&logits).unwrap(), softmax(&shifted).unwrap());
        shift.observe(max_abs_diff(&a, &b));
        weights.observe(weight_deviation(&a));

        // token and sentence pooling
        let ts = AttentionScorer::random(d, 1.0, &mut rng);
        let ss = AttentionScorer::random(d, 1.0, &mut rng);
        let n_sent = rng.random_range(1..=4);
        let paragraph: Vec<Vec<Vector>> = (0..n_sent)
            .map(|_| {
                let k = rng.random_range(1..=5);
                items(k, d, &mut rng)
            })
            .collect();
        let h = hierarchical_attention(&paragraph, &ts, &ss).unwrap();
        for (tokens, (alpha, s)) in paragraph.iter().zip(h.token_weights.iter().zip(&h.sentences)) {
            weights.observe(weight_deviation(alpha));
            hull.observe(hull_violation(tokens, s));
        }
        weights.observe(weight_deviation(&h.sentence_weights));
        hull.observe(hull_violation(&h.sentences, &h.paragraph));

        // permutation
        let toks = items(n, d, &mut rng);
        let base = token_attention(&toks, &ts).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let permuted: Vec<Vector> = order.iter().map(|&i| toks[i].clone()).collect();
        let p = token_attention(&permuted, &ts).unwrap();
        let expected_alpha: Vec<f64> = order.iter().map(|&i| base.weights[i]).collect();
        perm.observe(max_abs_diff(&p.weights, &expected_alpha).max(max_abs_diff(&p.pooled, &base.pooled)));

        // graph attention
        let nodes = rng.random_range(1..=6);
        let feats: BTreeMap<usize, Vector> = (0..nodes).map(|i| (i, random_vector(d, 1.0, &mut rng))).collect();
        let edges: Vec<(usize, usize)> = (0..nodes * 2)
            .map(|_| (rng.random_range(0..nodes), rng.random_range(0..nodes)))
            .collect();
        let wr = Matrix::random(d, d, 1.0, &mut rng);
        let av = random_vector(2 * d, 1.0, &mut rng);
        let g = graph_attention(&feats, &edges, &wr, &av).unwrap();
        for gamma in g.weights.values() {
            let w: Vec<f64> = gamma.iter().map(|(_, x)| *x).collect();
            weights.observe(weight_deviation(&w));
        }
        let twin = random_vector(d, 1.0, &mut rng);
        let pair = BTreeMap::from([(0, twin.clone()), (1, twin)]);
        let ge = graph_attention(&pair, &[(0, 1), (1, 0), (0, 0), (1, 1)], &wr, &av).unwrap();
        symmetric.observe(max_abs_diff(&ge.outputs[&0], &ge.outputs[&1]));

        // gradients
        let target = random_vector(d, 1.0, &mut rng);
        let fw = PoolWeightLoss {
            items: items(n.max(2), d, &mut rng),
            bias: ts.b,
            target: target.clone(),
        };
        grad_w.observe(grad_check(&fw, &ts.w, GRAD_EPS).unwrap_or(f64::INFINITY));
        let fx = PoolInputLoss {
            scorer: ts.clone(),
            n_items: n,
            target: target.clone(),
        };
        let x: Vec<f64> = items(n, d, &mut rng).concat();
        grad_x.observe(grad_check(&fx, &x, GRAD_EPS).unwrap_or(f64::INFINITY));
        let fh = HierarchicalPoolLoss {
            paragraph,
            token_bias: ts.b,
            sentence_bias: ss.b,
            target,
        };
        let params: Vec<f64> = ts.w.iter().chain(&ss.w).copied().collect();
        debug_assert_eq!(fh.gradient(&params).len(), 2 * d);
        grad_h.observe(grad_check(&fh, &params, GRAD_EPS).unwrap_or(f64::INFINITY));

        // multi-task loss with the default weights
        let (l1, l2, l3) = (
            rng.random_range(0.0..5.0),
            rng.random_range(0.0..5.0),
            rng.random_range(0.0..5.0),
        );
        let got = multitask_loss(l1, l2, l3, LossWeights::default()).unwrap();
        loss.observe((got - (0.4 * l1 + 0.3 * l2 + 0.3 * l3)).abs());
    }

    let mut out: Vec<PropertyOutcome> = [weights, hull, shift, perm, symmetric, grad_w, grad_x, grad_h, loss]
        .into_iter()
        .map(Tracker::finish)
        .collect();
    if opts.force_failure {
        out.push(PropertyOutcome {
            name: "forced-failure",
            passed: false,
            worst: f64::INFINITY,
            tolerance: 0.0,
        });
    }
    out
}
