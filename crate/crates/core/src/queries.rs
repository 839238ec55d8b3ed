//! Query generation and splitting.
//!
//! Query pools come from gradient-descent trajectories on the full data:
//! several Gaussian starting points, every iterate recorded. Pools are then
//! shuffled once and sliced into train/validation/test batches.

use std::collections::HashSet;
use std::io::{Read, Write};

use log::warn;
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{cost_unchecked, total_cost_gradient, LabeledPoints, MeasurableQuerySpace, Query};
use crate::error::{Error, Result};
use crate::losses::LossModel;
use crate::rng::stream_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryRole {
    Train,
    Validation,
    Test,
}

impl QueryRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            QueryRole::Train => "train",
            QueryRole::Validation => "validation",
            QueryRole::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryBatch {
    pub queries: Vec<Query>,
    pub role: QueryRole,
    /// Generator descriptor and seed.
    pub provenance: String,
}

impl QueryBatch {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub n_starts: usize,
    pub steps_per_start: usize,
    pub gd_lr: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            n_starts: 20,
            steps_per_start: 119,
            gd_lr: 0.01,
            init_scale: 1.0,
            seed: 0,
        }
    }
}

impl TrajectoryConfig {
    /// Smallest per-start step count whose pool covers `total` queries.
    pub fn steps_for_pool(n_starts: usize, total: usize) -> usize {
        total.div_ceil(n_starts.max(1)).saturating_sub(1)
    }

    pub fn pool_size(&self) -> usize {
        self.n_starts * (self.steps_per_start + 1)
    }
}

/// Plain gradient descent on `f(P, w, .)` from `start`, returning `start`
/// followed by every iterate. A trajectory whose cost or iterate turns
/// non-finite is truncated at the last finite iterate.
pub fn gradient_descent_path<S: LabeledPoints + ?Sized>(
    p: &S,
    loss: &LossModel,
    start: Query,
    steps: usize,
    lr: f64,
) -> Vec<Query> {
    let mut path = Vec::with_capacity(steps + 1);
    let mut q = start.into_inner();
    path.push(Query::new(q.clone()).expect("start query is finite"));
    for step in 0..steps {
        let g = total_cost_gradient(p, loss, &q);
        let next: Vec<f64> = q.iter().zip(&g).map(|(qi, gi)| qi - lr * gi).collect();
        let ok = next.iter().all(|x| x.is_finite()) && cost_unchecked(p, loss, &next).is_finite();
        if !ok {
            warn!("trajectory diverged after {step} steps; truncating");
            break;
        }
        path.push(Query::new(next.clone()).expect("checked finite"));
        q = next;
    }
    path
}

/// Trajectory query pool ordered by start index then step index. Bitwise
/// identical queries are kept only once.
pub fn trajectory_queries<S: LabeledPoints + ?Sized>(
    p: &S,
    loss: &LossModel,
    cfg: &TrajectoryConfig,
) -> Result<Vec<Query>> {
    if cfg.n_starts < 1 {
        return Err(Error::contract("n_starts must be at least 1"));
    }
    if !(cfg.gd_lr > 0.0) || !(cfg.init_scale >= 0.0) {
        return Err(Error::contract("gd_lr must be positive and init_scale nonnegative"));
    }
    let dim = loss.query_dim(p.dim());
    let mut seen = HashSet::new();
    let mut pool = Vec::with_capacity(cfg.pool_size());
    for s in 0..cfg.n_starts {
        let mut rng = stream_rng(cfg.seed, &format!("queries/start={s}"));
        let start: Vec<f64> = (0..dim)
            .map(|_| cfg.init_scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect::<Vec<f64>>();
        for q in gradient_descent_path(p, loss, Query::new(start)?, cfg.steps_per_start, cfg.gd_lr) {
            let key: Vec<u64> = q.params().iter().map(|x| x.to_bits()).collect();
            if seen.insert(key) {
                pool.push(q);
            }
        }
    }
    Ok(pool)
}

/// Seeded shuffle of `pool`, then contiguous slices of the requested sizes.
pub fn split_queries(
    pool: &[Query],
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<(QueryBatch, QueryBatch, QueryBatch)> {
    let (k_train, k_val, k_test) = sizes;
    let need = k_train + k_val + k_test;
    if need > pool.len() {
        return Err(Error::InsufficientPool {
            requested: need,
            available: pool.len(),
        });
    }
    if k_train == 0 {
        return Err(Error::contract("training split must be non-empty"));
    }
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(&mut stream_rng(seed, "queries/split"));
    let take = |lo: usize, hi: usize, role: QueryRole| QueryBatch {
        queries: idx[lo..hi].iter().map(|&i| pool[i].clone()).collect(),
        role,
        provenance: format!("split seed={seed} sizes={k_train}/{k_val}/{k_test}"),
    };
    Ok((
        take(0, k_train, QueryRole::Train),
        take(k_train, k_train + k_val, QueryRole::Validation),
        take(k_train + k_val, need, QueryRole::Test),
    ))
}

/// `k` independent draws (with replacement) from the space's measure.
pub fn iid_sample(space: &MeasurableQuerySpace, k: usize, seed: u64) -> Result<QueryBatch> {
    let idx = iid_indices(space.measure(), k, seed)?;
    Ok(QueryBatch {
        queries: idx.into_iter().map(|i| space.universe()[i].clone()).collect(),
        role: QueryRole::Train,
        provenance: format!("iid measure sample k={k} seed={seed}"),
    })
}

pub(crate) fn iid_indices(measure: &[f64], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 1 {
        return Err(Error::contract("sample size must be at least 1"));
    }
    let dist = WeightedIndex::new(measure).map_err(|e| Error::contract(format!("invalid measure: {e}")))?;
    let mut rng = stream_rng(seed, "queries/iid");
    Ok((0..k).map(|_| dist.sample(&mut rng)).collect())
}

/// Writes one query per row with a `q0,q1,...` header.
pub fn write_pool_csv<W: Write>(queries: &[Query], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if let Some(first) = queries.first() {
        w.write_record((0..first.dim()).map(|i| format!("q{i}")))?;
    }
    for q in queries {
        w.write_record(q.params().iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a pool written by [`write_pool_csv`]. A header row is detected by
/// a non-numeric first cell.
pub fn read_pool_csv<R: Read>(input: R) -> Result<Vec<Query>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut out = Vec::new();
    let mut dim = None;
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(row as u64 + 1, |p| p.line());
        if row == 0 && rec.get(0).is_some_and(|c| c.trim().parse::<f64>().is_err()) {
            continue;
        }
        let vals = rec
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    column: c.to_string(),
                    message: format!("not a number: {cell:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if *dim.get_or_insert(vals.len()) != vals.len() {
            return Err(Error::Parse {
                line,
                column: "*".into(),
                message: "inconsistent query dimension".into(),
            });
        }
        out.push(Query::new(vals).map_err(|e| Error::Parse {
            line,
            column: "*".into(),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
