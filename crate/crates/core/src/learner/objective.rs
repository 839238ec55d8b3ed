//! Training objectives and their analytic gradients with respect to the
//! coreset points, labels and weights.
//!
//! The average-loss objective is
//! `|mean_q f(P,w,q) - mean_q f(C,u,q)| + lambda * |sum w - sum u|`.
//! The ratio objective, summed over a minibatch, is
//! `sum_q |1 - f(C,u,q) / f(P,w,q)| + lambda * |sum w - sum u|`.
//! Both use `sign(0) = 0` as the subgradient of `|x|`.

use crate::data::{cost_unchecked, Coreset, LabeledPoints, Query};
use crate::losses::{LossEval, LossModel};
use crate::numeric::{pairwise_sum, pairwise_sum_by, sign0};

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveGradient {
    pub value: f64,
    /// Row-major, same layout as the coreset points.
    pub points: Vec<f64>,
    pub labels: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ObjectiveGradient {
    fn zeros(c: &Coreset) -> Self {
        ObjectiveGradient {
            value: 0.0,
            points: vec![0.0; c.len() * c.dim()],
            labels: vec![0.0; c.len()],
            weights: vec![0.0; c.len()],
        }
    }
}

/// Adds `coef * d f(C,u,q) / d theta` for every learnable `theta`, given the
/// per-point evaluations at `q`.
fn accumulate(c: &Coreset, q: &[f64], evals: &[LossEval], coef: f64, g: &mut ObjectiveGradient) {
    if coef == 0.0 {
        return;
    }
    let d = c.dim();
    for (j, e) in evals.iter().enumerate() {
        let u = c.weights[j];
        g.weights[j] += coef * e.value;
        g.labels[j] += coef * u * e.db;
        let s = coef * u * e.dz;
        for (gp, qk) in g.points[j * d..(j + 1) * d].iter_mut().zip(&q[..d]) {
            *gp += s * qk;
        }
    }
}

fn evaluate(c: &Coreset, loss: &LossModel, q: &[f64], out: &mut Vec<LossEval>) -> f64 {
    out.clear();
    out.extend((0..c.len()).map(|j| loss.eval(c.point(j), c.labels[j], q)));
    let u = &c.weights;
    pairwise_sum_by(c.len(), |j| u[j] * out[j].value)
}

fn add_weight_penalty(c: &Coreset, full_weight_sum: f64, lambda: f64, g: &mut ObjectiveGradient) -> f64 {
    let gap = full_weight_sum - pairwise_sum(&c.weights);
    let s = sign0(gap);
    if lambda != 0.0 && s != 0.0 {
        g.weights.iter_mut().for_each(|w| *w -= lambda * s);
    }
    lambda * gap.abs()
}

/// Ratio objective over `queries` (summed, not averaged), with gradient.
pub fn ratio_objective(
    c: &Coreset,
    loss: &LossModel,
    queries: &[&Query],
    full_costs: &[f64],
    full_weight_sum: f64,
    lambda: f64,
) -> ObjectiveGradient {
    let mut g = ObjectiveGradient::zeros(c);
    let mut evals = Vec::with_capacity(c.len());
    let mut ratio_sum = 0.0;
    for (q, &fp) in queries.iter().zip(full_costs) {
        let q = q.params();
        let fc = evaluate(c, loss, q, &mut evals);
        let r = 1.0 - fc / fp;
        ratio_sum += r.abs();
        accumulate(c, q, &evals, -sign0(r) / fp, &mut g);
    }
    g.value = ratio_sum + add_weight_penalty(c, full_weight_sum, lambda, &mut g);
    g
}

/// Value of [`ratio_objective`] computed through the plain total-cost path.
pub fn ratio_objective_value(
    c: &Coreset,
    loss: &LossModel,
    queries: &[&Query],
    full_costs: &[f64],
    full_weight_sum: f64,
    lambda: f64,
) -> f64 {
    let ratio: f64 = queries
        .iter()
        .zip(full_costs)
        .map(|(q, &fp)| (1.0 - cost_unchecked(c, loss, q.params()) / fp).abs())
        .sum();
    ratio + lambda * (full_weight_sum - c.weight_sum()).abs()
}

/// Average-loss objective over `queries`, with gradient. `full_mean_cost` is
/// the mean of `f(P,w,q)` over the same queries.
pub fn average_objective(
    c: &Coreset,
    loss: &LossModel,
    queries: &[Query],
    full_mean_cost: f64,
    full_weight_sum: f64,
    lambda: f64,
) -> ObjectiveGradient {
    let mut g = ObjectiveGradient::zeros(c);
    let k = queries.len();
    let mut evals = Vec::with_capacity(c.len());
    let core_costs: Vec<f64> = queries
        .iter()
        .map(|q| evaluate(c, loss, q.params(), &mut evals))
        .collect();
    let core_mean = pairwise_sum(&core_costs) / k as f64;
    let gap = full_mean_cost - core_mean;
    let coef = sign0(gap) * -1.0 / k as f64;
    if coef != 0.0 {
        for q in queries {
            evaluate(c, loss, q.params(), &mut evals);
            accumulate(c, q.params(), &evals, coef, &mut g);
        }
    }
    g.value = gap.abs() + add_weight_penalty(c, full_weight_sum, lambda, &mut g);
    g
}

/// Value of [`average_objective`] computed through the plain total-cost path.
pub fn average_objective_value(
    c: &Coreset,
    loss: &LossModel,
    queries: &[Query],
    full_mean_cost: f64,
    full_weight_sum: f64,
    lambda: f64,
) -> f64 {
    let k = queries.len();
    let core_mean = pairwise_sum_by(k, |i| cost_unchecked(c, loss, queries[i].params())) / k as f64;
    (full_mean_cost - core_mean).abs() + lambda * (full_weight_sum - c.weight_sum()).abs()
}

/// Mean of `|1 - f(C,u,q) / f(P,w,q)|` over the given queries.
pub fn mean_ratio_error<S: LabeledPoints + ?Sized>(
    c: &S,
    loss: &LossModel,
    queries: &[Query],
    full_costs: &[f64],
) -> f64 {
    let k = queries.len();
    pairwise_sum_by(k, |i| {
        (1.0 - cost_unchecked(c, loss, queries[i].params()) / full_costs[i]).abs()
    }) / k as f64
}
