//! Weighted labeled sets, coresets, queries and the total-cost evaluator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossModel;
use crate::numeric::{pairwise_sum, pairwise_sum_by};

/// Read access shared by input sets and coresets.
pub trait LabeledPoints {
    fn len(&self) -> usize;
    fn dim(&self) -> usize;
    fn point(&self, i: usize) -> &[f64];
    fn weights(&self) -> &[f64];
    fn labels(&self) -> &[f64];

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn weight_sum(&self) -> f64 {
        pairwise_sum(self.weights())
    }
}

fn flatten(rows: Vec<Vec<f64>>) -> Result<(usize, Vec<f64>)> {
    let dim = rows
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::contract("set must contain at least one point"))?;
    if dim == 0 {
        return Err(Error::contract("points must have at least one feature"));
    }
    let mut flat = Vec::with_capacity(rows.len() * dim);
    for (i, r) in rows.into_iter().enumerate() {
        if r.len() != dim {
            return Err(Error::contract(format!(
                "row {i} has {} features, expected {dim}",
                r.len()
            )));
        }
        flat.extend(r);
    }
    Ok((dim, flat))
}

fn validate_parts(dim: usize, points: &[f64], weights: &[f64], labels: &[f64]) -> Result<()> {
    let n = weights.len();
    if n == 0 {
        return Err(Error::contract("set must contain at least one point"));
    }
    if dim == 0 || points.len() != n * dim {
        return Err(Error::contract(format!(
            "point buffer of length {} does not match {n} rows of dimension {dim}",
            points.len()
        )));
    }
    if labels.len() != n {
        return Err(Error::contract(format!(
            "{} labels for {n} points",
            labels.len()
        )));
    }
    if let Some(i) = points.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            index: i / dim,
            what: format!("feature {} of point", i % dim),
        });
    }
    if let Some(i) = labels.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            index: i,
            what: "label".into(),
        });
    }
    if let Some(i) = weights.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            index: i,
            what: "weight".into(),
        });
    }
    if let Some(i) = weights.iter().position(|&x| x < 0.0) {
        return Err(Error::contract(format!("weight {i} is negative")));
    }
    Ok(())
}

/// The input `(P, w, b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedLabeledSet {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    labels: Vec<f64>,
}

impl WeightedLabeledSet {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        let (dim, flat) = flatten(points)?;
        Self::from_flat(dim, flat, weights, labels)
    }

    /// Builds a set from a row-major point buffer.
    pub fn from_flat(dim: usize, points: Vec<f64>, weights: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        validate_parts(dim, &points, &weights, &labels)?;
        Ok(WeightedLabeledSet {
            dim,
            points,
            weights,
            labels,
        })
    }

    /// Unit weights normalized to sum to one.
    pub fn uniform(points: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        let n = points.len().max(1);
        Self::new(points, vec![1.0 / n as f64; n], labels)
    }

    pub fn points_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn scale_weights(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0 && factor.is_finite()) {
            return Err(Error::contract("weight scale must be finite and nonnegative"));
        }
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w *= factor);
        Ok(out)
    }

    /// Checks that every label is admissible for `loss`.
    pub fn check_labels(&self, loss: &LossModel) -> Result<()> {
        for (i, &b) in self.labels.iter().enumerate() {
            loss.check_label(b)
                .map_err(|e| Error::contract(format!("label {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn as_coreset(&self) -> Coreset {
        Coreset {
            dim: self.dim,
            points: self.points.clone(),
            weights: self.weights.clone(),
            labels: self.labels.clone(),
        }
    }
}

impl LabeledPoints for WeightedLabeledSet {
    fn len(&self) -> usize {
        self.weights.len()
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
    fn weights(&self) -> &[f64] {
        &self.weights
    }
    fn labels(&self) -> &[f64] {
        &self.labels
    }
}

/// The learnable synthetic set `(C, u, y)`. Points and labels need not come
/// from the input; weights are kept nonnegative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coreset {
    dim: usize,
    pub(crate) points: Vec<f64>,
    pub(crate) weights: Vec<f64>,
    pub(crate) labels: Vec<f64>,
}

impl Coreset {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        let (dim, flat) = flatten(points)?;
        Self::from_flat(dim, flat, weights, labels)
    }

    pub fn from_flat(dim: usize, points: Vec<f64>, weights: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        validate_parts(dim, &points, &weights, &labels)?;
        Ok(Coreset {
            dim,
            points,
            weights,
            labels,
        })
    }

    pub fn points_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn scale_weights(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0 && factor.is_finite()) {
            return Err(Error::contract("weight scale must be finite and nonnegative"));
        }
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w *= factor);
        Ok(out)
    }

    pub fn to_set(&self) -> WeightedLabeledSet {
        WeightedLabeledSet {
            dim: self.dim,
            points: self.points.clone(),
            weights: self.weights.clone(),
            labels: self.labels.clone(),
        }
    }

    pub(crate) fn all_finite(&self) -> bool {
        self.points
            .iter()
            .chain(&self.weights)
            .chain(&self.labels)
            .all(|x| x.is_finite())
    }
}

impl LabeledPoints for Coreset {
    fn len(&self) -> usize {
        self.weights.len()
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
    fn weights(&self) -> &[f64] {
        &self.weights
    }
    fn labels(&self) -> &[f64] {
        &self.labels
    }
}

/// One model/parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Query(Vec<f64>);

impl Query {
    pub fn new(params: Vec<f64>) -> Result<Self> {
        if let Some(i) = params.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                index: i,
                what: "query parameter".into(),
            });
        }
        Ok(Query(params))
    }

    pub fn zeros(dim: usize) -> Self {
        Query(vec![0.0; dim])
    }

    pub fn params(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for Query {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_query_dim<S: LabeledPoints + ?Sized>(set: &S, loss: &LossModel, q: &Query) -> Result<()> {
    let expected = loss.query_dim(set.dim());
    if q.dim() != expected {
        return Err(Error::contract(format!(
            "query has {} coordinates, expected {expected}",
            q.dim()
        )));
    }
    Ok(())
}

/// Total cost `sum_i w_i f(p_i, b_i, q)` without dimension checks.
#[inline]
pub(crate) fn cost_unchecked<S: LabeledPoints + ?Sized>(set: &S, loss: &LossModel, q: &[f64]) -> f64 {
    let w = set.weights();
    let b = set.labels();
    pairwise_sum_by(set.len(), |i| w[i] * loss.value(set.point(i), b[i], q))
}

/// Total cost `f(P, w, q) = sum_i w_i f(p_i, b_i, q)`, pairwise-summed.
pub fn total_cost<S: LabeledPoints + ?Sized>(set: &S, loss: &LossModel, q: &Query) -> Result<f64> {
    check_query_dim(set, loss, q)?;
    let c = cost_unchecked(set, loss, q.params());
    if c.is_finite() {
        return Ok(c);
    }
    let w = set.weights();
    let b = set.labels();
    let index = (0..set.len())
        .find(|&i| !(w[i] * loss.value(set.point(i), b[i], q.params())).is_finite())
        .unwrap_or(0);
    Err(Error::NonFinite {
        index,
        what: "weighted loss term".into(),
    })
}

/// Gradient of the total cost with respect to the query.
pub fn total_cost_gradient<S: LabeledPoints + ?Sized>(set: &S, loss: &LossModel, q: &[f64]) -> Vec<f64> {
    let d = set.dim();
    let mut g = vec![0.0; q.len()];
    let w = set.weights();
    let b = set.labels();
    for i in 0..set.len() {
        let p = set.point(i);
        let s = w[i] * loss.eval(p, b[i], q).dz;
        for (gk, pk) in g[..d].iter_mut().zip(p) {
            *gk += s * pk;
        }
        if loss.intercept {
            g[d] += s;
        }
    }
    g
}

/// Rescales weights to sum to one.
pub fn normalize_weights(set: &WeightedLabeledSet) -> Result<WeightedLabeledSet> {
    let total = set.weight_sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("weights sum to zero".into()));
    }
    let mut out = set.clone();
    out.weights.iter_mut().for_each(|w| *w /= total);
    Ok(out)
}

/// `(P, w, Q', f, mu)` with a finite universe `Q'` and probability vector `mu`.
#[derive(Clone, Debug)]
pub struct MeasurableQuerySpace {
    pub ground: WeightedLabeledSet,
    pub loss: LossModel,
    universe: Vec<Query>,
    measure: Vec<f64>,
}

impl MeasurableQuerySpace {
    pub fn new(
        ground: WeightedLabeledSet,
        loss: LossModel,
        universe: Vec<Query>,
        measure: Vec<f64>,
    ) -> Result<Self> {
        if universe.is_empty() {
            return Err(Error::contract("query universe is empty"));
        }
        if universe.len() != measure.len() {
            return Err(Error::contract(format!(
                "{} measure entries for {} queries",
                measure.len(),
                universe.len()
            )));
        }
        if measure.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::contract("measure entries must be finite and nonnegative"));
        }
        let total = pairwise_sum(&measure);
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::contract(format!("measure sums to {total}, not 1")));
        }
        for q in &universe {
            check_query_dim(&ground, &loss, q)?;
        }
        Ok(MeasurableQuerySpace {
            ground,
            loss,
            universe,
            measure,
        })
    }

    pub fn uniform(ground: WeightedLabeledSet, loss: LossModel, universe: Vec<Query>) -> Result<Self> {
        let n = universe.len().max(1);
        let measure = vec![1.0 / n as f64; universe.len()];
        Self::new(ground, loss, universe, measure)
    }

    pub fn universe(&self) -> &[Query] {
        &self.universe
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    /// Total cost of `set` at every query of the universe.
    pub fn costs<S: LabeledPoints + ?Sized>(&self, set: &S) -> Result<Vec<f64>> {
        self.universe
            .iter()
            .map(|q| total_cost(set, &self.loss, q))
            .collect()
    }
}

/// Exact expectation `E_mu f(S, q)` over the finite universe.
pub fn expected_cost<S: LabeledPoints + ?Sized>(space: &MeasurableQuerySpace, set: &S) -> Result<f64> {
    let costs = space.costs(set)?;
    Ok(pairwise_sum_by(costs.len(), |j| space.measure[j] * costs[j]))
}

/// Queries paired with their cached full-data costs `f(P, w, q)`.
#[derive(Clone, Debug)]
pub struct ScoredQueries {
    queries: Vec<Query>,
    full_costs: Vec<f64>,
}

impl ScoredQueries {
    pub fn new<S: LabeledPoints + ?Sized>(full: &S, loss: &LossModel, queries: &[Query]) -> Result<Self> {
        let full_costs = queries
            .iter()
            .map(|q| total_cost(full, loss, q))
            .collect::<Result<Vec<_>>>()?;
        Ok(ScoredQueries {
            queries: queries.to_vec(),
            full_costs,
        })
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn full_costs(&self) -> &[f64] {
        &self.full_costs
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Drops queries whose full cost is at or below `floor`; returns the
    /// retained set and the number dropped.
    pub fn above_floor(&self, floor: f64) -> (ScoredQueries, usize) {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.full_costs[i] > floor).collect();
        let dropped = self.len() - keep.len();
        (
            ScoredQueries {
                queries: keep.iter().map(|&i| self.queries[i].clone()).collect(),
                full_costs: keep.iter().map(|&i| self.full_costs[i]).collect(),
            },
            dropped,
        )
    }
}
