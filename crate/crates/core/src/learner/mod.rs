//! Coreset learning.
//!
//! Two algorithms share one training loop:
//!
//! * [`Algorithm::Average`] takes one full-batch step per epoch on the
//!   average-loss objective `|mean f(P) - mean f(C)| + lambda |sum w - sum u|`.
//! * [`Algorithm::Practical`] shuffles the training queries each epoch and
//!   takes one step per minibatch on the summed ratio objective
//!   `sum |1 - f(C)/f(P)| + lambda |sum w - sum u|`.
//!
//! Points and (for losses that admit real labels) labels are updated with
//! Adam; weights, when learned, are updated with Adam and then clamped at
//! zero. Gradients are clipped to a global norm before each step.

mod adam;
pub mod objective;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use adam::{clip_global_norm, project_weights, AdamState, OptimizerState};
pub use objective::{mean_ratio_error, ObjectiveGradient};

use crate::data::{Coreset, LabeledPoints, Query, ScoredQueries, WeightedLabeledSet};
use crate::error::{Error, Result};
use crate::losses::{LossKind, LossModel};
use crate::numeric::pairwise_sum;
use crate::rng::stream_rng;
use crate::RATIO_FLOOR;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Average,
    Practical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Rows of the input drawn without replacement (with replacement only
    /// beyond `n`), labels copied.
    Subsample,
    /// Gaussian noise around the weighted feature and label means.
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub coreset_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub learn_weights: bool,
    pub early_stop_on_validation: bool,
    pub init: InitStrategy,
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::linreg_defaults(50)
    }
}

impl TrainConfig {
    /// 10 epochs, batch 25, lr 0.01, lambda 1, learned weights.
    pub fn linreg_defaults(coreset_size: usize) -> Self {
        TrainConfig {
            coreset_size,
            epochs: 10,
            learning_rate: 0.01,
            lambda: 1.0,
            batch_size: 25,
            seed: 0,
            algorithm: Algorithm::Practical,
            learn_weights: true,
            early_stop_on_validation: true,
            init: InitStrategy::Subsample,
            grad_clip: 1e3,
        }
    }

    /// 1000 epochs, batch 100, lr 0.001, weights frozen at `1/m`.
    pub fn logreg_defaults(coreset_size: usize) -> Self {
        TrainConfig {
            epochs: 1000,
            learning_rate: 0.001,
            batch_size: 100,
            learn_weights: false,
            ..TrainConfig::linreg_defaults(coreset_size)
        }
    }

    pub fn defaults_for(loss: &LossModel, coreset_size: usize) -> Self {
        match loss.kind {
            LossKind::LinearRegression => Self::linreg_defaults(coreset_size),
            LossKind::LogisticRegression => Self::logreg_defaults(coreset_size),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.coreset_size < 1 {
            return Err(Error::contract("coreset_size must be at least 1"));
        }
        if self.epochs < 1 {
            return Err(Error::contract("epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::contract("learning_rate must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::contract("lambda must be nonnegative"));
        }
        if self.batch_size < 1 {
            return Err(Error::contract("batch_size must be at least 1"));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::contract("grad_clip must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub algorithm: Algorithm,
    /// One entry per epoch run.
    pub epoch_train_loss: Vec<f64>,
    /// Validation `Err_avg` after each epoch; empty without validation queries.
    pub epoch_val_err_avg: Vec<f64>,
    /// Epoch whose coreset is returned.
    pub best_epoch: usize,
    pub filtered_train_queries: usize,
    pub filtered_val_queries: usize,
    pub optimizer_steps: u64,
    /// Always true: training is single-threaded with a fixed reduction order.
    pub deterministic: bool,
    pub coreset: Coreset,
}

impl TrainReport {
    /// Running minimum of the per-epoch training loss.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.epoch_train_loss
            .iter()
            .scan(f64::INFINITY, |best, &l| {
                *best = best.min(l);
                Some(*best)
            })
            .collect()
    }
}

/// Initial coreset with all weights `1/m`.
pub fn init_coreset(p: &WeightedLabeledSet, m: usize, seed: u64, strategy: InitStrategy, loss: &LossModel) -> Result<Coreset> {
    if m < 1 {
        return Err(Error::contract("coreset size must be at least 1"));
    }
    if p.is_empty() {
        return Err(Error::Degenerate("input set is empty".into()));
    }
    let mut rng = stream_rng(seed, "learner/init");
    let n = p.len();
    let d = p.dim();
    let mut points = Vec::with_capacity(m * d);
    let mut labels = Vec::with_capacity(m);
    match strategy {
        InitStrategy::Subsample => {
            let mut idx: Vec<usize> = rand::seq::index::sample(&mut rng, n, m.min(n)).into_vec();
            while idx.len() < m {
                idx.push(rng.random_range(0..n));
            }
            for i in idx {
                points.extend_from_slice(p.point(i));
                labels.push(p.labels()[i]);
            }
        }
        InitStrategy::Gaussian => {
            let w = p.weights();
            let wsum = p.weight_sum();
            if !(wsum > 0.0) {
                return Err(Error::Degenerate("weights sum to zero".into()));
            }
            let mean = |f: &dyn Fn(usize) -> f64| (0..n).map(|i| w[i] * f(i)).sum::<f64>() / wsum;
            let stats: Vec<(f64, f64)> = (0..d)
                .map(|k| {
                    let mu = mean(&|i| p.point(i)[k]);
                    let var = mean(&|i| (p.point(i)[k] - mu).powi(2));
                    (mu, var.sqrt())
                })
                .collect();
            let b = p.labels();
            let b_mu = mean(&|i| b[i]);
            let b_sd = mean(&|i| (b[i] - b_mu).powi(2)).sqrt();
            for _ in 0..m {
                for &(mu, sd) in &stats {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    points.push(mu + sd * z);
                }
                let label = match loss.kind {
                    LossKind::LinearRegression => {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        b_mu + b_sd * z
                    }
                    LossKind::LogisticRegression => {
                        if rng.random::<bool>() {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                };
                labels.push(label);
            }
        }
    }
    Coreset::from_flat(d, points, vec![1.0 / m as f64; m], labels)
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    coreset: Coreset,
    opt: OptimizerState,
}

impl<'a> Trainer<'a> {
    fn new(cfg: &'a TrainConfig, coreset: Coreset, loss: &LossModel) -> Self {
        let opt = OptimizerState::new(
            coreset.len(),
            coreset.dim(),
            loss.labels_learnable(),
            cfg.learn_weights,
        );
        Trainer { cfg, coreset, opt }
    }

    fn apply(&mut self, mut g: ObjectiveGradient, epoch: usize, step: usize) -> Result<()> {
        if !g.value.is_finite() {
            return Err(Error::Diverged {
                epoch,
                step,
                detail: format!("objective is {}", g.value),
            });
        }
        let lr = self.cfg.learning_rate;
        {
            let mut groups: Vec<&mut [f64]> = vec![&mut g.points];
            if self.opt.labels.is_some() {
                groups.push(&mut g.labels);
            }
            if self.opt.weights.is_some() {
                groups.push(&mut g.weights);
            }
            let norm = clip_global_norm(&mut groups, self.cfg.grad_clip);
            if !norm.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    detail: "gradient is not finite".into(),
                });
            }
        }
        self.opt.points.step(&mut self.coreset.points, &g.points, lr);
        if let Some(s) = self.opt.labels.as_mut() {
            s.step(&mut self.coreset.labels, &g.labels, lr);
        }
        if let Some(s) = self.opt.weights.as_mut() {
            s.step(&mut self.coreset.weights, &g.weights, lr);
            project_weights(&mut self.coreset.weights);
        }
        if !self.coreset.all_finite() {
            return Err(Error::Diverged {
                epoch,
                step,
                detail: "coreset parameters became non-finite".into(),
            });
        }
        Ok(())
    }

    fn penalty(&self, full_weight_sum: f64) -> f64 {
        self.cfg.lambda * (full_weight_sum - pairwise_sum(&self.coreset.weights)).abs()
    }
}

/// Tracks the validation-selected snapshot.
struct Selection {
    val_errs: Vec<f64>,
    best: Option<(usize, f64, Coreset)>,
}

impl Selection {
    fn new() -> Self {
        Selection {
            val_errs: Vec::new(),
            best: None,
        }
    }

    fn observe(&mut self, epoch: usize, c: &Coreset, loss: &LossModel, val: Option<&ScoredQueries>, keep: bool) {
        let Some(val) = val.filter(|v| !v.is_empty()) else {
            return;
        };
        let err = mean_ratio_error(c, loss, val.queries(), val.full_costs());
        self.val_errs.push(err);
        if keep && self.best.as_ref().map_or(true, |(_, b, _)| err < *b) {
            self.best = Some((epoch, err, c.clone()));
        }
    }

    fn finish(self, epochs: usize, last: Coreset) -> (usize, Vec<f64>, Coreset) {
        match self.best {
            Some((e, _, c)) => (e, self.val_errs, c),
            None => (epochs - 1, self.val_errs, last),
        }
    }
}

fn prepare(
    p: &WeightedLabeledSet,
    val: Option<&ScoredQueries>,
    loss: &LossModel,
    cfg: &TrainConfig,
) -> Result<(Option<ScoredQueries>, usize)> {
    cfg.validate()?;
    p.check_labels(loss)?;
    Ok(match val {
        Some(v) => {
            let (kept, dropped) = v.above_floor(RATIO_FLOOR);
            if dropped > 0 {
                warn!("{dropped} validation queries have full cost <= {RATIO_FLOOR} and are ignored");
            }
            (Some(kept), dropped)
        }
        None => (None, 0),
    })
}

fn check_init(p: &WeightedLabeledSet, loss: &LossModel, init: &Coreset) -> Result<()> {
    if init.dim() != p.dim() {
        return Err(Error::contract(format!(
            "initial coreset has dimension {}, input has {}",
            init.dim(),
            p.dim()
        )));
    }
    init.labels.iter().try_for_each(|&b| loss.check_label(b))
}

/// Average-loss coreset learning with one full-batch step per epoch.
pub fn autocl_average(
    p: &WeightedLabeledSet,
    train: &[Query],
    loss: &LossModel,
    cfg: &TrainConfig,
) -> Result<(Coreset, TrainReport)> {
    let scored = ScoredQueries::new(p, loss, train)?;
    autocl_average_scored(p, &scored, None, loss, cfg)
}

/// [`autocl_average`] with precomputed full costs and optional validation
/// queries for snapshot selection.
pub fn autocl_average_scored(
    p: &WeightedLabeledSet,
    train: &ScoredQueries,
    val: Option<&ScoredQueries>,
    loss: &LossModel,
    cfg: &TrainConfig,
) -> Result<(Coreset, TrainReport)> {
    let init = init_coreset(p, cfg.coreset_size, cfg.seed, cfg.init, loss)?;
    autocl_average_from(p, train, val, loss, cfg, init)
}

/// [`autocl_average_scored`] starting from a given coreset instead of
/// `cfg.init`; `cfg.coreset_size` is ignored.
pub fn autocl_average_from(
    p: &WeightedLabeledSet,
    train: &ScoredQueries,
    val: Option<&ScoredQueries>,
    loss: &LossModel,
    cfg: &TrainConfig,
    init: Coreset,
) -> Result<(Coreset, TrainReport)> {
    check_init(p, loss, &init)?;
    let (val, filtered_val) = prepare(p, val, loss, cfg)?;
    let wsum = p.weight_sum();
    if (wsum - 1.0).abs() > 1e-9 {
        return Err(Error::contract(format!(
            "input weights must be normalized, sum is {wsum}"
        )));
    }
    if train.is_empty() {
        return Err(Error::contract("training query set is empty"));
    }
    let k = train.len();
    // constant across epochs, so computed once
    let full_mean = pairwise_sum(train.full_costs()) / k as f64;

    let mut trainer = Trainer::new(cfg, init, loss);
    let mut selection = Selection::new();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let g = objective::average_objective(&trainer.coreset, loss, train.queries(), full_mean, wsum, cfg.lambda);
        losses.push(g.value);
        trainer.apply(g, epoch, 0)?;
        selection.observe(epoch, &trainer.coreset, loss, val.as_ref(), cfg.early_stop_on_validation);
    }
    let steps = trainer.opt.points.steps();
    let (best_epoch, val_errs, coreset) = selection.finish(cfg.epochs, trainer.coreset);
    let report = TrainReport {
        algorithm: Algorithm::Average,
        epoch_train_loss: losses,
        epoch_val_err_avg: val_errs,
        best_epoch,
        filtered_train_queries: 0,
        filtered_val_queries: filtered_val,
        optimizer_steps: steps,
        deterministic: true,
        coreset: coreset.clone(),
    };
    Ok((coreset, report))
}

/// Ratio-objective coreset learning over shuffled minibatches.
pub fn autocl_practical(
    p: &WeightedLabeledSet,
    train: &[Query],
    val: &[Query],
    loss: &LossModel,
    cfg: &TrainConfig,
) -> Result<(Coreset, TrainReport)> {
    let train = ScoredQueries::new(p, loss, train)?;
    let val = ScoredQueries::new(p, loss, val)?;
    autocl_practical_scored(p, &train, Some(&val), loss, cfg)
}

/// [`autocl_practical`] with precomputed full costs.
pub fn autocl_practical_scored(
    p: &WeightedLabeledSet,
    train: &ScoredQueries,
    val: Option<&ScoredQueries>,
    loss: &LossModel,
    cfg: &TrainConfig,
) -> Result<(Coreset, TrainReport)> {
    let init = init_coreset(p, cfg.coreset_size, cfg.seed, cfg.init, loss)?;
    autocl_practical_from(p, train, val, loss, cfg, init)
}

/// [`autocl_practical_scored`] starting from a given coreset instead of
/// `cfg.init`; `cfg.coreset_size` is ignored.
pub fn autocl_practical_from(
    p: &WeightedLabeledSet,
    train: &ScoredQueries,
    val: Option<&ScoredQueries>,
    loss: &LossModel,
    cfg: &TrainConfig,
    init: Coreset,
) -> Result<(Coreset, TrainReport)> {
    check_init(p, loss, &init)?;
    let (val, filtered_val) = prepare(p, val, loss, cfg)?;
    let (train, filtered_train) = train.above_floor(RATIO_FLOOR);
    if filtered_train > 0 {
        warn!("{filtered_train} training queries have full cost <= {RATIO_FLOOR} and are excluded");
    }
    if train.len() < cfg.batch_size {
        return Err(Error::contract(format!(
            "{} usable training queries, fewer than batch size {}",
            train.len(),
            cfg.batch_size
        )));
    }
    let k = train.len();
    let wsum = p.weight_sum();

    let mut trainer = Trainer::new(cfg, init, loss);
    let mut selection = Selection::new();
    let mut rng = stream_rng(cfg.seed, "learner/batches");
    let mut order: Vec<usize> = (0..k).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut batch_refs: Vec<&Query> = Vec::with_capacity(cfg.batch_size);
    let mut batch_costs: Vec<f64> = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut ratio_total = 0.0;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch_refs.clear();
            batch_costs.clear();
            for &i in chunk {
                batch_refs.push(&train.queries()[i]);
                batch_costs.push(train.full_costs()[i]);
            }
            let before = trainer.penalty(wsum);
            let g = objective::ratio_objective(&trainer.coreset, loss, &batch_refs, &batch_costs, wsum, cfg.lambda);
            ratio_total += g.value - before;
            trainer.apply(g, epoch, step)?;
        }
        losses.push(ratio_total / k as f64 + trainer.penalty(wsum));
        selection.observe(epoch, &trainer.coreset, loss, val.as_ref(), cfg.early_stop_on_validation);
    }
    let steps = trainer.opt.points.steps();
    let (best_epoch, val_errs, coreset) = selection.finish(cfg.epochs, trainer.coreset);
    let report = TrainReport {
        algorithm: Algorithm::Practical,
        epoch_train_loss: losses,
        epoch_val_err_avg: val_errs,
        best_epoch,
        filtered_train_queries: filtered_train,
        filtered_val_queries: filtered_val,
        optimizer_steps: steps,
        deterministic: true,
        coreset: coreset.clone(),
    };
    Ok((coreset, report))
}

/// Dispatches on `cfg.algorithm`.
pub fn learn_coreset(
    p: &WeightedLabeledSet,
    train: &ScoredQueries,
    val: Option<&ScoredQueries>,
    loss: &LossModel,
    cfg: &TrainConfig,
) -> Result<(Coreset, TrainReport)> {
    match cfg.algorithm {
        Algorithm::Average => autocl_average_scored(p, train, val, loss, cfg),
        Algorithm::Practical => autocl_practical_scored(p, train, val, loss, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::total_cost;

    fn line_set(n: usize) -> WeightedLabeledSet {
        WeightedLabeledSet::uniform(
            (0..n).map(|i| vec![i as f64 / n as f64, 1.0]).collect(),
            (0..n).map(|i| 2.0 * i as f64 / n as f64 + 0.3 * ((i * 7) % 5) as f64).collect(),
        )
        .unwrap()
    }

    fn queries(k: usize) -> Vec<Query> {
        (0..k)
            .map(|i| Query::new(vec![(i as f64 * 0.37).sin() * 2.0, (i as f64 * 0.11).cos()]).unwrap())
            .collect()
    }

    #[test]
    fn init_examples() {
        let p = line_set(6);
        let lin = LossModel::linear();
        let c = init_coreset(&p, 6, 3, InitStrategy::Subsample, &lin).unwrap();
        assert!(c.weights().iter().all(|&w| w == 1.0 / 6.0));
        let mut rows: Vec<Vec<f64>> = c.rows().map(<[f64]>::to_vec).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected: Vec<Vec<f64>> = p.rows().map(<[f64]>::to_vec).collect();
        assert_eq!(rows, expected);

        let c = init_coreset(&p, 1, 3, InitStrategy::Subsample, &lin).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.weights(), &[1.0]);

        for s in [InitStrategy::Subsample, InitStrategy::Gaussian] {
            assert_eq!(
                init_coreset(&p, 4, 9, s, &lin).unwrap(),
                init_coreset(&p, 4, 9, s, &lin).unwrap()
            );
        }
        assert!(init_coreset(&p, 0, 9, InitStrategy::Subsample, &lin).is_err());
    }

    #[test]
    fn frozen_weights_keep_unit_sum() {
        let p = line_set(40);
        let lin = LossModel::linear();
        let cfg = TrainConfig {
            coreset_size: 5,
            epochs: 30,
            lambda: 0.0,
            learn_weights: false,
            algorithm: Algorithm::Average,
            ..TrainConfig::default()
        };
        let (c, report) = autocl_average(&p, &queries(20), &lin, &cfg).unwrap();
        assert_eq!(report.epoch_train_loss.len(), 30);
        assert!((c.weight_sum() - 1.0).abs() < 1e-15);
        assert!(c.weights().iter().all(|&w| w == 0.2));
    }

    #[test]
    fn average_rejects_unnormalized_input() {
        let p = line_set(10).scale_weights(2.0).unwrap();
        let err = autocl_average(&p, &queries(3), &LossModel::linear(), &TrainConfig::default());
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn practical_requires_enough_queries() {
        let p = line_set(10);
        let cfg = TrainConfig {
            batch_size: 25,
            ..TrainConfig::default()
        };
        let err = autocl_practical(&p, &queries(10), &[], &LossModel::linear(), &cfg);
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn practical_filters_zero_cost_queries() {
        // exact fit at q = [2, 0]: label = 2 x
        let p = WeightedLabeledSet::uniform(
            (0..10).map(|i| vec![i as f64, 1.0]).collect(),
            (0..10).map(|i| 2.0 * i as f64).collect(),
        )
        .unwrap();
        let mut qs = queries(30);
        qs.push(Query::new(vec![2.0, 0.0]).unwrap());
        let lin = LossModel::linear();
        assert_eq!(total_cost(&p, &lin, qs.last().unwrap()).unwrap(), 0.0);
        let cfg = TrainConfig {
            coreset_size: 3,
            epochs: 2,
            batch_size: 5,
            ..TrainConfig::default()
        };
        let (_, report) = autocl_practical(&p, &qs, &[], &lin, &cfg).unwrap();
        assert_eq!(report.filtered_train_queries, 1);
    }

    #[test]
    fn practical_weights_stay_nonnegative_and_runs_deterministically() {
        let p = line_set(50);
        let lin = LossModel::linear();
        let cfg = TrainConfig {
            coreset_size: 4,
            epochs: 15,
            batch_size: 5,
            learning_rate: 0.05,
            lambda: 0.5,
            early_stop_on_validation: false,
            ..TrainConfig::default()
        };
        let qs = queries(40);
        let (c1, r1) = autocl_practical(&p, &qs, &qs[..10], &lin, &cfg).unwrap();
        let (c2, r2) = autocl_practical(&p, &qs, &qs[..10], &lin, &cfg).unwrap();
        assert!(c1.weights().iter().all(|&w| w >= 0.0));
        assert_eq!(r1, r2);
        assert_eq!(c1, c2);
        assert_eq!(r1.best_epoch, 14);
        assert_eq!(r1.epoch_val_err_avg.len(), 15);
        assert_eq!(r1.optimizer_steps, 15 * 8);
        let best = r1.best_so_far();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn early_stopping_returns_best_validation_snapshot() {
        let p = line_set(50);
        let lin = LossModel::linear();
        let cfg = TrainConfig {
            coreset_size: 4,
            epochs: 12,
            batch_size: 5,
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let qs = queries(40);
        let (c, r) = autocl_practical(&p, &qs, &qs[30..], &lin, &cfg).unwrap();
        let best = r.epoch_val_err_avg.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(r.epoch_val_err_avg[r.best_epoch], best);
        let val = ScoredQueries::new(&p, &lin, &qs[30..]).unwrap();
        assert_eq!(mean_ratio_error(&c, &lin, val.queries(), val.full_costs()), best);
    }
}
