//! Hoeffding sample-size bounds and their Monte-Carlo verification.
//!
//! Two notions of the loss bound `M` appear: the bound on the total cost
//! `sup_q |f(P,w,q)|` (used for the mean-of-losses bound) and the bound on
//! single-point losses `sup_{p,q} |f(p,q)|` (used for the coreset bound).
//! Both are provided.

use std::io::Write;

use rayon::prelude::*;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::data::{cost_unchecked, LabeledPoints, MeasurableQuerySpace, Query};
use crate::error::{Error, Result};
use crate::losses::LossModel;
use crate::numeric::pairwise_sum_by;
use crate::rng::stream_rng;

/// Safety factor applied to sup estimates taken over a finite pool.
pub const M_SAFETY_FACTOR: f64 = 1.1;

fn check_bound_args(eps: f64, delta: f64, m: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::contract(format!("eps must be positive, got {eps}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::contract(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::contract(format!("M must be positive, got {m}")));
    }
    Ok(())
}

/// `2 M^2 ln(2/delta) / eps^2` before rounding up.
pub fn hoeffding_k_real(eps: f64, delta: f64, m: f64) -> Result<f64> {
    check_bound_args(eps, delta, m)?;
    Ok(2.0 * m * m * (2.0 / delta).ln() / (eps * eps))
}

/// Queries needed so the sample-average cost is within `eps` of its
/// expectation with probability at least `1 - delta`.
pub fn hoeffding_k(eps: f64, delta: f64, m: f64) -> Result<u64> {
    Ok(hoeffding_k_real(eps, delta, m)?.ceil() as u64)
}

/// `2 ((1+eps) M)^2 ln(2/delta) / eps^2` before rounding up.
pub fn claim2_k_real(eps: f64, delta: f64, m: f64) -> Result<f64> {
    hoeffding_k_real(eps, delta, (1.0 + eps) * m)
}

/// Queries needed for the coreset generalization bound, where the coreset
/// cost is bounded by `(1 + eps) M`.
pub fn claim2_k(eps: f64, delta: f64, m: f64) -> Result<u64> {
    Ok(claim2_k_real(eps, delta, m)?.ceil() as u64)
}

/// Smallest `eps` with `claim2_k_real(eps, delta, m) <= k`, or `None` when
/// no finite `eps` suffices.
pub fn claim2_eps_for_k(k: u64, delta: f64, m: f64) -> Result<Option<f64>> {
    check_bound_args(1.0, delta, m)?;
    // sqrt(k) eps = a (1 + eps), a = M sqrt(2 ln(2/delta))
    let a = m * (2.0 * (2.0 / delta).ln()).sqrt();
    let rk = (k as f64).sqrt();
    Ok((rk > a).then(|| a / (rk - a)))
}

/// `eps = eps' * M`: turns a mean-ratio bound into a mean-difference bound.
pub fn relate_eps(eps_prime: f64, m: f64) -> Result<f64> {
    if !(eps_prime >= 0.0) {
        return Err(Error::contract("eps' must be nonnegative"));
    }
    if !(m > 0.0) {
        return Err(Error::contract("M must be positive"));
    }
    Ok(eps_prime * m)
}

/// `max |f(p, q)|` over the points of `set` and the queries of `pool`.
pub fn max_point_loss<S: LabeledPoints + ?Sized>(set: &S, loss: &LossModel, pool: &[Query]) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::contract("query pool is empty"));
    }
    let mut best = 0.0f64;
    for q in pool {
        for i in 0..set.len() {
            best = best.max(loss.value(set.point(i), set.labels()[i], q.params()).abs());
        }
    }
    Ok(best)
}

/// `max |f(S, w, q)|` over the queries of `pool`.
pub fn max_set_cost<S: LabeledPoints + ?Sized>(set: &S, loss: &LossModel, pool: &[Query]) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::contract("query pool is empty"));
    }
    Ok(pool
        .iter()
        .map(|q| cost_unchecked(set, loss, q.params()).abs())
        .fold(0.0, f64::max))
}

/// Point-level `M` estimate: [`max_point_loss`] times the safety factor.
pub fn estimate_m<S: LabeledPoints + ?Sized>(set: &S, loss: &LossModel, pool: &[Query]) -> Result<f64> {
    Ok(M_SAFETY_FACTOR * max_point_loss(set, loss, pool)?)
}

/// Set-level `M` estimate: [`max_set_cost`] times the safety factor.
pub fn estimate_set_m<S: LabeledPoints + ?Sized>(set: &S, loss: &LossModel, pool: &[Query]) -> Result<f64> {
    Ok(M_SAFETY_FACTOR * max_set_cost(set, loss, pool)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Claim1Report {
    pub eps: f64,
    pub delta: f64,
    /// Exact `max_q |f(P,w,q)|` over the universe.
    pub m_exact: f64,
    pub k: u64,
    pub trials: usize,
    pub violations: usize,
    pub violation_rate: f64,
    /// `delta + 3 sqrt(delta (1 - delta) / trials)`.
    pub allowed_rate: f64,
}

impl Claim1Report {
    pub fn passed(&self) -> bool {
        self.violation_rate <= self.allowed_rate
    }
}

/// Binomial 3-sigma acceptance threshold for an observed failure rate.
pub fn allowed_violation_rate(delta: f64, trials: usize) -> f64 {
    delta + 3.0 * (delta * (1.0 - delta) / trials as f64).sqrt()
}

fn sample_mean(costs: &[f64], sampler: &rand::distr::weighted::WeightedIndex<f64>, k: u64, rng: &mut crate::rng::StreamRng) -> f64 {
    let mut acc = 0.0;
    for _ in 0..k {
        acc += costs[sampler.sample(rng)];
    }
    acc / k as f64
}

fn weighted_index(space: &MeasurableQuerySpace) -> Result<rand::distr::weighted::WeightedIndex<f64>> {
    rand::distr::weighted::WeightedIndex::new(space.measure().iter().copied())
        .map_err(|e| Error::contract(format!("invalid measure: {e}")))
}

fn expectation(space: &MeasurableQuerySpace, costs: &[f64]) -> f64 {
    let mu = space.measure();
    pairwise_sum_by(costs.len(), |j| mu[j] * costs[j])
}

/// Monte-Carlo check of the mean-of-losses bound on the ground set. `eps`
/// is absolute; `k` is derived from the exact `M` over the universe.
pub fn verify_claim1(space: &MeasurableQuerySpace, eps: f64, delta: f64, trials: usize, seed: u64) -> Result<Claim1Report> {
    if trials < 1 {
        return Err(Error::contract("trials must be at least 1"));
    }
    let costs = space.costs(&space.ground)?;
    let m_exact = costs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let exact = expectation(space, &costs);
    // zero costs everywhere: the sample mean is exact
    let k = if m_exact > 0.0 { hoeffding_k(eps, delta, m_exact)? } else { 1 };
    let sampler = weighted_index(space)?;
    let violations = (0..trials)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = stream_rng(seed, &format!("claim1/trial={t}"));
            (sample_mean(&costs, &sampler, k, &mut rng) - exact).abs() > eps
        })
        .count();
    Ok(Claim1Report {
        eps,
        delta,
        m_exact,
        k,
        trials,
        violations,
        violation_rate: violations as f64 / trials as f64,
        allowed_rate: allowed_violation_rate(delta, trials),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Premise {
    /// `|sum w - sum u| <= eps`.
    WeightSum,
    /// `|mean_Q f(P) - mean_Q f(C)| <= eps` on the sampled queries.
    SampleGap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Claim2Outcome {
    PremiseFailed {
        premise: Premise,
        /// Weight-sum gap, or the smallest sample gap observed.
        measured: f64,
        eps: f64,
    },
    Rate {
        eps: f64,
        delta: f64,
        /// Point-level loss bound over the universe, for both sets.
        m_point: f64,
        k: u64,
        weight_gap: f64,
        /// Trials whose sampled premise held.
        trials_checked: usize,
        violations: usize,
        violation_rate: f64,
        /// `|E f(P) - E f(C)|`.
        expected_gap: f64,
    },
}

/// Checks the coreset generalization bound for a fixed pair `(P, C)`.
///
/// The weight-sum premise is deterministic. For each trial, `k` queries are
/// drawn; trials where the sample-gap premise holds count toward the rate,
/// which is the fraction of those with `|E f(P) - E f(C)| >= 3 eps`.
pub fn verify_claim2<C: LabeledPoints + ?Sized>(
    coreset: &C,
    space: &MeasurableQuerySpace,
    eps: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<Claim2Outcome> {
    if trials < 1 {
        return Err(Error::contract("trials must be at least 1"));
    }
    let ground = &space.ground;
    if (ground.weight_sum() - 1.0).abs() > 1e-9 {
        return Err(Error::contract("ground weights must be normalized"));
    }
    let weight_gap = (ground.weight_sum() - coreset.weight_sum()).abs();
    if weight_gap > eps {
        return Ok(Claim2Outcome::PremiseFailed {
            premise: Premise::WeightSum,
            measured: weight_gap,
            eps,
        });
    }
    let m_point = max_point_loss(ground, &space.loss, space.universe())?
        .max(max_point_loss(coreset, &space.loss, space.universe())?);
    let k = if m_point > 0.0 { claim2_k(eps, delta, m_point)? } else { 1 };
    let full = space.costs(ground)?;
    let core = space.costs(coreset)?;
    let expected_gap = (expectation(space, &full) - expectation(space, &core)).abs();
    let diff: Vec<f64> = full.iter().zip(&core).map(|(a, b)| a - b).collect();
    let sampler = weighted_index(space)?;
    let per_trial: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, &format!("claim2/trial={t}"));
            sample_mean(&diff, &sampler, k, &mut rng).abs()
        })
        .collect();
    let held: Vec<f64> = per_trial.iter().copied().filter(|&g| g <= eps).collect();
    if held.is_empty() {
        return Ok(Claim2Outcome::PremiseFailed {
            premise: Premise::SampleGap,
            measured: per_trial.iter().copied().fold(f64::INFINITY, f64::min),
            eps,
        });
    }
    let violations = if expected_gap >= 3.0 * eps { held.len() } else { 0 };
    Ok(Claim2Outcome::Rate {
        eps,
        delta,
        m_point,
        k,
        weight_gap,
        trials_checked: held.len(),
        violations,
        violation_rate: violations as f64 / held.len() as f64,
        expected_gap,
    })
}

/// Both sides of the mean-ratio to mean-difference chain on one query set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioChain {
    /// `mean_q |1 - f(C,q)/f(P,q)|`.
    pub eps_prime: f64,
    /// `max_q |f(P,q)|`.
    pub m_hat: f64,
    /// `eps' * M`.
    pub eps: f64,
    /// `|mean_q f(P,q) - mean_q f(C,q)|`.
    pub mean_gap: f64,
}

impl RatioChain {
    pub fn holds(&self, slack: f64) -> bool {
        self.mean_gap <= self.eps + slack
    }
}

/// Measures `eps'` and the resulting mean-difference bound on `queries`.
pub fn ratio_chain<P, C>(full: &P, coreset: &C, loss: &LossModel, queries: &[Query]) -> Result<RatioChain>
where
    P: LabeledPoints + ?Sized,
    C: LabeledPoints + ?Sized,
{
    if queries.is_empty() {
        return Err(Error::contract("query set is empty"));
    }
    let k = queries.len() as f64;
    let fp: Vec<f64> = queries.iter().map(|q| cost_unchecked(full, loss, q.params())).collect();
    let fc: Vec<f64> = queries.iter().map(|q| cost_unchecked(coreset, loss, q.params())).collect();
    if fp.iter().any(|&x| x <= 0.0) {
        return Err(Error::UndefinedMetric("full cost is zero at some query".into()));
    }
    let eps_prime = fp.iter().zip(&fc).map(|(p, c)| (1.0 - c / p).abs()).sum::<f64>() / k;
    let m_hat = fp.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let mean_gap = (fp.iter().sum::<f64>() / k - fc.iter().sum::<f64>() / k).abs();
    Ok(RatioChain {
        eps_prime,
        m_hat,
        eps: relate_eps(eps_prime, m_hat)?,
        mean_gap,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub eps: f64,
    pub delta: f64,
    pub m: f64,
    pub k_claim1: u64,
    pub k_claim2: u64,
}

pub fn bound_row(eps: f64, delta: f64, m: f64) -> Result<BoundRow> {
    Ok(BoundRow {
        eps,
        delta,
        m,
        k_claim1: hoeffding_k(eps, delta, m)?,
        k_claim2: claim2_k(eps, delta, m)?,
    })
}

/// CSV with columns `eps,delta,M,k_claim1,k_claim2`.
pub fn write_bound_table<W: Write>(rows: &[BoundRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["eps", "delta", "M", "k_claim1", "k_claim2"])?;
    for r in rows {
        w.write_record([
            r.eps.to_string(),
            r.delta.to_string(),
            r.m.to_string(),
            r.k_claim1.to_string(),
            r.k_claim2.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
