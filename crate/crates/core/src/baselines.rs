//! Sampling baselines and full-problem solvers.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::data::{cost_unchecked, total_cost_gradient, Coreset, LabeledPoints, Query, WeightedLabeledSet};
use crate::error::{Error, Result};
use crate::losses::{LossKind, LossModel};
use crate::numeric::norm2;
use crate::rng::stream_rng;

/// `m` rows drawn uniformly with replacement; each keeps its label and gets
/// weight `w_i * n / m`, so `f(C, u, q)` is unbiased for `f(P, w, q)`.
pub fn uniform_coreset(p: &WeightedLabeledSet, m: usize, seed: u64) -> Result<Coreset> {
    let n = p.len();
    if m < 1 || m > n {
        return Err(Error::contract(format!("uniform coreset size {m} outside 1..={n}")));
    }
    let mut rng = stream_rng(seed, "baseline/uniform");
    let scale = n as f64 / m as f64;
    let mut points = Vec::with_capacity(m * p.dim());
    let mut weights = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for _ in 0..m {
        let i = rng.random_range(0..n);
        points.extend_from_slice(p.point(i));
        weights.push(p.weights()[i] * scale);
        labels.push(p.labels()[i]);
    }
    Coreset::from_flat(p.dim(), points, weights, labels)
}

/// Rows of `[sqrt(w) x | sqrt(w) b]`, with `x` including the constant
/// feature when the loss has an intercept.
fn augmented_matrix(p: &WeightedLabeledSet, intercept: bool) -> DMatrix<f64> {
    let n = p.len();
    let d = p.dim();
    let cols = d + usize::from(intercept) + 1;
    DMatrix::from_fn(n, cols, |i, j| {
        let s = p.weights()[i].sqrt();
        if j < d {
            s * p.point(i)[j]
        } else if intercept && j == d {
            s
        } else {
            s * p.labels()[i]
        }
    })
}

/// Statistical leverage of each row of the weight-scaled, label-augmented
/// data matrix: squared row norms of its orthonormal column factor.
///
/// A rank-deficient matrix falls back to ridge leverage
/// `a_i^T (A^T A + r I)^{-1} a_i` with a tiny ridge `r`.
pub fn leverage_scores(p: &WeightedLabeledSet, intercept: bool) -> Result<Vec<f64>> {
    let a = augmented_matrix(p, intercept);
    let (n, k) = a.shape();
    if k > n {
        return Err(Error::contract(format!(
            "leverage sampling needs at least {k} rows, got {n}"
        )));
    }
    let r = a.clone().qr().r();
    let diag_max = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let rank_ok = diag_max > 0.0 && (0..k).all(|i| r[(i, i)].abs() > 1e-12 * diag_max);
    if rank_ok {
        // U = A R^{-1}; solving R^T x = a_i keeps zero rows exactly zero
        let rt = r.transpose();
        let mut scores = Vec::with_capacity(n);
        for i in 0..n {
            let row = DVector::from_iterator(k, a.row(i).iter().copied());
            let x = rt
                .solve_lower_triangular(&row)
                .ok_or_else(|| Error::Degenerate("triangular solve failed".into()))?;
            scores.push(x.norm_squared());
        }
        return Ok(scores);
    }
    warn!("leverage matrix is rank deficient; using ridge-regularized leverage");
    let gram = a.transpose() * &a;
    let ridge = 1e-10 * gram.trace().max(1e-300);
    let reg = &gram + DMatrix::identity(k, k) * ridge;
    let chol = reg
        .cholesky()
        .ok_or_else(|| Error::Degenerate("ridge-regularized Gram matrix is not positive definite".into()))?;
    Ok((0..n)
        .map(|i| {
            let row = DVector::from_iterator(k, a.row(i).iter().copied());
            row.dot(&chol.solve(&row))
        })
        .collect())
}

/// Leverage-score importance sampling with replacement; weight
/// `w_i / (m * prob_i)`.
pub fn leverage_coreset(p: &WeightedLabeledSet, loss: &LossModel, m: usize, seed: u64) -> Result<Coreset> {
    if loss.kind != LossKind::LinearRegression {
        return Err(Error::contract("leverage sampling is defined for linear regression only"));
    }
    if m < 1 {
        return Err(Error::contract("coreset size must be at least 1"));
    }
    let scores = leverage_scores(p, loss.intercept)?;
    let total: f64 = scores.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("all leverage scores are zero".into()));
    }
    let dist = WeightedIndex::new(&scores).map_err(|e| Error::Degenerate(e.to_string()))?;
    let mut rng = stream_rng(seed, "baseline/leverage");
    let mut points = Vec::with_capacity(m * p.dim());
    let mut weights = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for _ in 0..m {
        let i = dist.sample(&mut rng);
        let prob = scores[i] / total;
        points.extend_from_slice(p.point(i));
        weights.push(p.weights()[i] / (m as f64 * prob));
        labels.push(p.labels()[i]);
    }
    Coreset::from_flat(p.dim(), points, weights, labels)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum SolveMethod {
    /// Normal equations for linear regression, gradient descent otherwise.
    Auto,
    NormalEquations,
    GradientDescent { max_iter: usize, tol: f64 },
}

impl SolveMethod {
    pub const GD_DEFAULT: SolveMethod = SolveMethod::GradientDescent {
        max_iter: 100_000,
        tol: 1e-8,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub query: Query,
    pub cost: f64,
    /// False when an iterative solver stopped before its tolerance.
    pub converged: bool,
    pub iterations: usize,
    /// Normal-equation residual norm or final gradient norm.
    pub residual: f64,
    /// True when a ridge term had to be added.
    pub regularized: bool,
}

fn design_row(x: &[f64], intercept: bool) -> impl Iterator<Item = f64> + '_ {
    x.iter().copied().chain(intercept.then_some(1.0))
}

fn weighted_gram<S: LabeledPoints + ?Sized>(p: &S, intercept: bool) -> DMatrix<f64> {
    let k = p.dim() + usize::from(intercept);
    let mut g = DMatrix::<f64>::zeros(k, k);
    for i in 0..p.len() {
        let w = p.weights()[i];
        let x: Vec<f64> = design_row(p.point(i), intercept).collect();
        for a in 0..k {
            for b in 0..k {
                g[(a, b)] += w * x[a] * x[b];
            }
        }
    }
    g
}

fn normal_equations<S: LabeledPoints + ?Sized>(p: &S, loss: &LossModel) -> Result<Optimum> {
    let k = loss.query_dim(p.dim());
    let g = weighted_gram(p, loss.intercept);
    let mut h = DVector::<f64>::zeros(k);
    for i in 0..p.len() {
        let wb = p.weights()[i] * p.labels()[i];
        for (a, x) in design_row(p.point(i), loss.intercept).enumerate() {
            h[a] += wb * x;
        }
    }
    let (mut q, regularized) = match g.clone().cholesky() {
        Some(ch) => (ch.solve(&h), false),
        None => {
            warn!("normal matrix is singular; adding ridge 1e-10");
            let reg = &g + DMatrix::identity(k, k) * 1e-10;
            let ch = reg
                .cholesky()
                .ok_or_else(|| Error::Degenerate("normal matrix is not positive semidefinite".into()))?;
            (ch.solve(&h), true)
        }
    };
    // one round of iterative refinement
    let mut resid = &h - &g * &q;
    if !regularized {
        if let Some(ch) = g.clone().cholesky() {
            q += ch.solve(&resid);
            resid = &h - &g * &q;
        }
    }
    let query = Query::new(q.iter().copied().collect())?;
    let cost = cost_unchecked(p, loss, query.params());
    Ok(Optimum {
        query,
        cost,
        converged: true,
        iterations: 0,
        residual: resid.norm(),
        regularized,
    })
}

fn gradient_descent<S: LabeledPoints + ?Sized>(p: &S, loss: &LossModel, max_iter: usize, tol: f64) -> Result<Optimum> {
    let g = weighted_gram(p, loss.intercept);
    let lam_max = g.symmetric_eigenvalues().max();
    if !(lam_max > 0.0) {
        return Err(Error::Degenerate("weighted data has zero second moment".into()));
    }
    // smoothness constant of the total cost
    let smooth = match loss.kind {
        LossKind::LinearRegression => 2.0 * lam_max,
        LossKind::LogisticRegression => 0.25 * lam_max,
    };
    let step = 1.0 / smooth;
    let k = loss.query_dim(p.dim());
    let mut q = vec![0.0; k];
    let mut best = (cost_unchecked(p, loss, &q), q.clone());
    let mut grad = total_cost_gradient(p, loss, &q);
    let mut gnorm = norm2(&grad);
    let mut iters = 0;
    while iters < max_iter && gnorm > tol {
        for (qi, gi) in q.iter_mut().zip(&grad) {
            *qi -= step * gi;
        }
        iters += 1;
        let c = cost_unchecked(p, loss, &q);
        if !c.is_finite() {
            break;
        }
        if c <= best.0 {
            best = (c, q.clone());
        }
        grad = total_cost_gradient(p, loss, &q);
        gnorm = norm2(&grad);
    }
    let converged = gnorm <= tol;
    if !converged {
        warn!("gradient descent stopped after {iters} iterations with gradient norm {gnorm:e}");
    }
    let (cost, q) = if converged { (cost_unchecked(p, loss, &q), q) } else { best };
    Ok(Optimum {
        query: Query::new(q)?,
        cost,
        converged,
        iterations: iters,
        residual: gnorm,
        regularized: false,
    })
}

/// `argmin_q f(S, q)` for an input set or a coreset.
pub fn solve_optimal<S: LabeledPoints + ?Sized>(p: &S, loss: &LossModel, method: SolveMethod) -> Result<Optimum> {
    if !(p.weight_sum() > 0.0) {
        return Err(Error::Degenerate("all weights are zero".into()));
    }
    match (method, loss.kind) {
        (SolveMethod::Auto | SolveMethod::NormalEquations, LossKind::LinearRegression) => normal_equations(p, loss),
        (SolveMethod::NormalEquations, LossKind::LogisticRegression) => Err(Error::contract(
            "normal equations apply to linear regression only",
        )),
        (SolveMethod::Auto, LossKind::LogisticRegression) => {
            let SolveMethod::GradientDescent { max_iter, tol } = SolveMethod::GD_DEFAULT else {
                unreachable!()
            };
            gradient_descent(p, loss, max_iter, tol)
        }
        (SolveMethod::GradientDescent { max_iter, tol }, _) => gradient_descent(p, loss, max_iter, tol),
    }
}
