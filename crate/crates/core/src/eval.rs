//! Coreset quality metrics and size/method sweeps.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{leverage_coreset, solve_optimal, uniform_coreset, Optimum, SolveMethod};
use crate::data::{cost_unchecked, Coreset, LabeledPoints, Query, ScoredQueries, WeightedLabeledSet};
use crate::error::{Error, Result};
use crate::learner::{learn_coreset, TrainConfig, TrainReport};
use crate::losses::LossModel;
use crate::numeric::{mean_std, pairwise_sum_by};
use crate::rng::derive_seed;
use crate::RATIO_FLOOR;

/// `|1 - f(P, q*_c) / f(P, q*)|` given the full-data optimum.
pub fn err_opt_with<C: LabeledPoints + ?Sized>(
    p: &WeightedLabeledSet,
    full_opt: &Optimum,
    coreset: &C,
    loss: &LossModel,
    method: SolveMethod,
) -> Result<f64> {
    if !(full_opt.cost > 0.0) {
        return Err(Error::UndefinedMetric(format!(
            "full-data optimum cost is {}",
            full_opt.cost
        )));
    }
    let qc = solve_optimal(coreset, loss, method)?;
    let at_qc = cost_unchecked(p, loss, qc.query.params());
    Ok((1.0 - at_qc / full_opt.cost).abs())
}

/// Relative loss on `P` of the model fitted to the coreset.
pub fn err_opt<C: LabeledPoints + ?Sized>(p: &WeightedLabeledSet, coreset: &C, loss: &LossModel) -> Result<f64> {
    let full = solve_optimal(p, loss, SolveMethod::Auto)?;
    err_opt_with(p, &full, coreset, loss, SolveMethod::Auto)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrAvg {
    pub value: f64,
    /// Test queries dropped because the full cost was at or below the floor.
    pub filtered: usize,
}

/// Mean of `|1 - f(C,q) / f(P,q)|` over scored test queries.
pub fn err_avg_scored<C: LabeledPoints + ?Sized>(coreset: &C, loss: &LossModel, test: &ScoredQueries) -> Result<ErrAvg> {
    let (kept, filtered) = test.above_floor(RATIO_FLOOR);
    if kept.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "all {} test queries have full cost <= {RATIO_FLOOR}",
            test.len()
        )));
    }
    let (qs, fp) = (kept.queries(), kept.full_costs());
    let value = pairwise_sum_by(qs.len(), |i| (1.0 - cost_unchecked(coreset, loss, qs[i].params()) / fp[i]).abs())
        / qs.len() as f64;
    Ok(ErrAvg { value, filtered })
}

pub fn err_avg<C: LabeledPoints + ?Sized>(
    p: &WeightedLabeledSet,
    coreset: &C,
    loss: &LossModel,
    test: &[Query],
) -> Result<ErrAvg> {
    err_avg_scored(coreset, loss, &ScoredQueries::new(p, loss, test)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Learned,
    Uniform,
    Leverage,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Learned, Method::Uniform, Method::Leverage];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Learned => "learned",
            Method::Uniform => "uniform",
            Method::Leverage => "leverage",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(Method::Learned),
            "uniform" => Ok(Method::Uniform),
            "leverage" => Ok(Method::Leverage),
            _ => Err(Error::Config(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub sizes: Vec<usize>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub seed: u64,
    /// Template for the learned method; size and seed are set per trial.
    pub train: TrainConfig,
    pub solve: SolveMethod,
    /// Skip `Err_opt` (recorded as missing) when optima are not wanted.
    pub err_opt: bool,
}

/// Inputs shared by every cell of a sweep.
pub struct SweepData<'a> {
    pub p: &'a WeightedLabeledSet,
    pub loss: &'a LossModel,
    pub train: &'a ScoredQueries,
    pub val: Option<&'a ScoredQueries>,
    pub test: &'a ScoredQueries,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub size: usize,
    pub method: Method,
    pub trial: usize,
    pub seed: u64,
    pub err_opt: Option<f64>,
    pub err_avg: Option<f64>,
    pub filtered_queries: usize,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

impl TrialRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub size: usize,
    pub method: Method,
    pub trials: usize,
    pub ok: usize,
    pub err_opt_mean: f64,
    pub err_opt_std: f64,
    pub err_avg_mean: f64,
    pub err_avg_std: f64,
    /// Fewer than half the trials succeeded.
    pub flagged: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    /// Ordered by (size, method as listed, trial).
    pub rows: Vec<TrialRow>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabeledReport {
    pub size: usize,
    pub trial: usize,
    pub report: TrainReport,
}

pub struct SweepOutput {
    pub table: ResultTable,
    pub reports: Vec<LabeledReport>,
    pub full_optimum: Option<Optimum>,
}

fn stat(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        mean_std(values)
    }
}

impl ResultTable {
    /// One summary per (size, method) in row order.
    pub fn summarize(&self) -> Vec<CellSummary> {
        let mut out: Vec<CellSummary> = Vec::new();
        let mut i = 0;
        while i < self.rows.len() {
            let (size, method) = (self.rows[i].size, self.rows[i].method);
            let j = i + self.rows[i..]
                .iter()
                .take_while(|r| r.size == size && r.method == method)
                .count();
            let cell = &self.rows[i..j];
            let opt: Vec<f64> = cell.iter().filter(|r| r.ok()).filter_map(|r| r.err_opt).collect();
            let avg: Vec<f64> = cell.iter().filter(|r| r.ok()).filter_map(|r| r.err_avg).collect();
            let ok = cell.iter().filter(|r| r.ok()).count();
            let (err_opt_mean, err_opt_std) = stat(&opt);
            let (err_avg_mean, err_avg_std) = stat(&avg);
            out.push(CellSummary {
                size,
                method,
                trials: cell.len(),
                ok,
                err_opt_mean,
                err_opt_std,
                err_avg_mean,
                err_avg_std,
                flagged: 2 * ok < cell.len(),
            });
            i = j;
        }
        out
    }

    pub fn cell(&self, size: usize, method: Method) -> Option<CellSummary> {
        self.summarize().into_iter().find(|c| c.size == size && c.method == method)
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

/// Columns: size, method, trial, err_opt, err_avg, filtered_queries,
/// wall_time_s, error. Missing metrics are empty cells.
pub fn write_trials_csv<W: Write>(table: &ResultTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "size",
        "method",
        "trial",
        "err_opt",
        "err_avg",
        "filtered_queries",
        "wall_time_s",
        "error",
    ])?;
    for r in &table.rows {
        w.write_record([
            r.size.to_string(),
            r.method.as_str().to_string(),
            r.trial.to_string(),
            fmt_opt(r.err_opt),
            fmt_opt(r.err_avg),
            r.filtered_queries.to_string(),
            format!("{:.6}", r.wall_time_s),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-cell mean and sample standard deviation. Contains no timing, so it is
/// reproducible byte for byte.
pub fn write_aggregate_csv<W: Write>(cells: &[CellSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "size",
        "method",
        "trials",
        "ok",
        "err_opt_mean",
        "err_opt_std",
        "err_avg_mean",
        "err_avg_std",
        "flagged",
    ])?;
    for c in cells {
        w.write_record([
            c.size.to_string(),
            c.method.as_str().to_string(),
            c.trials.to_string(),
            c.ok.to_string(),
            fmt_f64(c.err_opt_mean),
            fmt_f64(c.err_opt_std),
            fmt_f64(c.err_avg_mean),
            fmt_f64(c.err_avg_std),
            c.flagged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn trial_seed(root: u64, size: usize, method: Method, trial: usize) -> u64 {
    derive_seed(root, &format!("sweep/size={size}/method={}/trial={trial}", method.as_str()))
}

fn build_coreset(
    data: &SweepData<'_>,
    spec: &SweepSpec,
    size: usize,
    method: Method,
    seed: u64,
) -> Result<(Coreset, Option<TrainReport>)> {
    match method {
        Method::Uniform => Ok((uniform_coreset(data.p, size, seed)?, None)),
        Method::Leverage => Ok((leverage_coreset(data.p, data.loss, size, seed)?, None)),
        Method::Learned => {
            let cfg = TrainConfig {
                coreset_size: size,
                seed,
                ..spec.train.clone()
            };
            let (c, report) = learn_coreset(data.p, data.train, data.val, data.loss, &cfg)?;
            Ok((c, Some(report)))
        }
    }
}

fn run_trial(
    data: &SweepData<'_>,
    spec: &SweepSpec,
    full_opt: Option<&Optimum>,
    (size, method, trial): (usize, Method, usize),
) -> (TrialRow, Option<TrainReport>) {
    let start = Instant::now();
    let seed = trial_seed(spec.seed, size, method, trial);
    let mut row = TrialRow {
        size,
        method,
        trial,
        seed,
        err_opt: None,
        err_avg: None,
        filtered_queries: 0,
        wall_time_s: 0.0,
        error: None,
    };
    let mut errors = Vec::new();
    let mut report = None;
    match build_coreset(data, spec, size, method, seed) {
        Ok((c, r)) => {
            report = r;
            match err_avg_scored(&c, data.loss, data.test) {
                Ok(e) => {
                    row.err_avg = Some(e.value);
                    row.filtered_queries = e.filtered;
                }
                Err(e) => errors.push(format!("err_avg: {e}")),
            }
            if let Some(opt) = full_opt {
                match err_opt_with(data.p, opt, &c, data.loss, spec.solve) {
                    Ok(v) => row.err_opt = Some(v),
                    Err(e) => errors.push(format!("err_opt: {e}")),
                }
            }
        }
        Err(e) => errors.push(e.to_string()),
    }
    if !errors.is_empty() {
        row.error = Some(errors.join("; "));
    }
    row.wall_time_s = start.elapsed().as_secs_f64();
    (row, report)
}

/// Builds and scores a coreset for every (size, method, trial) cell. Cells
/// run in parallel; a failing trial is recorded in its row, not propagated.
pub fn sweep(data: &SweepData<'_>, spec: &SweepSpec) -> Result<SweepOutput> {
    if spec.sizes.is_empty() || spec.methods.is_empty() {
        return Err(Error::contract("sweep needs at least one size and one method"));
    }
    if spec.trials == 0 {
        return Err(Error::contract("sweep needs at least one trial"));
    }
    if spec.sizes.contains(&0) {
        return Err(Error::contract("coreset sizes must be positive"));
    }
    if data.test.is_empty() {
        return Err(Error::contract("test query set is empty"));
    }
    let full_optimum = if spec.err_opt {
        Some(solve_optimal(data.p, data.loss, spec.solve)?)
    } else {
        None
    };
    let cells: Vec<(usize, Method, usize)> = spec
        .sizes
        .iter()
        .flat_map(|&s| {
            spec.methods
                .iter()
                .flat_map(move |&m| (0..spec.trials).map(move |t| (s, m, t)))
        })
        .collect();
    let results: Vec<(TrialRow, Option<TrainReport>)> = cells
        .par_iter()
        .map(|&cell| run_trial(data, spec, full_optimum.as_ref(), cell))
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut reports = Vec::new();
    for (row, report) in results {
        if let Some(report) = report {
            reports.push(LabeledReport {
                size: row.size,
                trial: row.trial,
                report,
            });
        }
        rows.push(row);
    }
    Ok(SweepOutput {
        table: ResultTable { rows },
        reports,
        full_optimum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::Algorithm;

    fn two_point() -> WeightedLabeledSet {
        WeightedLabeledSet::new(vec![vec![1.0], vec![2.0]], vec![0.5, 0.5], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn err_opt_examples() {
        let p = two_point();
        let lin = LossModel::linear();
        assert_eq!(err_opt(&p, &p.as_coreset(), &lin).unwrap(), 0.0);
        // q* = 0.6 with cost 0.1; the first point alone gives q = 1 with
        // full cost 0.5
        let c = Coreset::new(vec![vec![1.0]], vec![1.0], vec![1.0]).unwrap();
        assert!((err_opt(&p, &c, &lin).unwrap() - 4.0).abs() < 1e-12);
        // same optimum from a different set: scaled copy of P
        let scaled = p.as_coreset().scale_weights(3.0).unwrap();
        assert!(err_opt(&p, &scaled, &lin).unwrap() < 1e-12);
    }

    #[test]
    fn err_opt_undefined_on_realizable_data() {
        let p = WeightedLabeledSet::uniform(vec![vec![1.0], vec![2.0]], vec![2.0, 4.0]).unwrap();
        assert!(matches!(
            err_opt(&p, &p.as_coreset(), &LossModel::linear()),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn err_avg_examples() {
        let lin = LossModel::linear();
        let p = WeightedLabeledSet::new(vec![vec![1.0]], vec![2.0], vec![0.0]).unwrap();
        let q = vec![Query::new(vec![1.0]).unwrap()];
        assert_eq!(err_avg(&p, &p.as_coreset(), &lin, &q).unwrap().value, 0.0);
        let c = Coreset::new(vec![vec![1.0]], vec![3.0], vec![0.0]).unwrap();
        assert_eq!(err_avg(&p, &c, &lin, &q).unwrap().value, 0.5);
        let doubled = p.as_coreset().scale_weights(2.0).unwrap();
        assert_eq!(err_avg(&p, &doubled, &lin, &q).unwrap().value, 1.0);
    }

    #[test]
    fn err_avg_filters_and_reports() {
        let lin = LossModel::linear();
        let p = WeightedLabeledSet::uniform(vec![vec![1.0]], vec![1.0]).unwrap();
        let qs = vec![Query::new(vec![1.0]).unwrap(), Query::new(vec![0.0]).unwrap()];
        let e = err_avg(&p, &p.as_coreset(), &lin, &qs).unwrap();
        assert_eq!(e.filtered, 1);
        assert!(matches!(
            err_avg(&p, &p.as_coreset(), &lin, &qs[..1]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn metrics_invariant_under_joint_weight_scaling() {
        let lin = LossModel::linear();
        let p = WeightedLabeledSet::uniform(
            (0..30).map(|i| vec![(i as f64 * 0.3).sin(), 1.0]).collect(),
            (0..30).map(|i| (i as f64 * 0.7).cos()).collect(),
        )
        .unwrap();
        let c = Coreset::new(
            vec![vec![0.2, 1.0], vec![-0.5, 1.0], vec![0.9, 1.0]],
            vec![0.3, 0.3, 0.4],
            vec![0.1, -0.2, 0.5],
        )
        .unwrap();
        let qs: Vec<Query> = (0..9).map(|k| Query::new(vec![k as f64 * 0.25 - 1.0, 0.3]).unwrap()).collect();
        let a = 4.0;
        let (ps, cs) = (p.scale_weights(a).unwrap(), c.scale_weights(a).unwrap());
        let e1 = err_avg(&p, &c, &lin, &qs).unwrap().value;
        let e2 = err_avg(&ps, &cs, &lin, &qs).unwrap().value;
        assert_eq!(e1, e2);
        let o1 = err_opt(&p, &c, &lin).unwrap();
        let o2 = err_opt(&ps, &cs, &lin).unwrap();
        assert!((o1 - o2).abs() < 1e-9 * o1.max(1.0));
    }

    fn sweep_fixture(n: usize) -> (WeightedLabeledSet, ScoredQueries, ScoredQueries) {
        let lin = LossModel::linear();
        let p = WeightedLabeledSet::uniform(
            (0..n).map(|i| vec![1.0 + 0.1 * ((i * 13) % 7) as f64]).collect(),
            (0..n).map(|i| 2.0 + 0.1 * ((i * 5) % 11) as f64).collect(),
        )
        .unwrap();
        let qs: Vec<Query> = (0..40).map(|k| Query::new(vec![k as f64 * 0.05]).unwrap()).collect();
        let train = ScoredQueries::new(&p, &lin, &qs[..30]).unwrap();
        let test = ScoredQueries::new(&p, &lin, &qs[30..]).unwrap();
        (p, train, test)
    }

    fn spec(sizes: Vec<usize>, methods: Vec<Method>, trials: usize) -> SweepSpec {
        SweepSpec {
            sizes,
            methods,
            trials,
            seed: 9,
            train: TrainConfig {
                epochs: 3,
                batch_size: 10,
                algorithm: Algorithm::Practical,
                ..TrainConfig::default()
            },
            solve: SolveMethod::Auto,
            err_opt: true,
        }
    }

    #[test]
    fn uniform_full_size_is_near_exact() {
        let (p, train, test) = sweep_fixture(400);
        let lin = LossModel::linear();
        let data = SweepData { p: &p, loss: &lin, train: &train, val: None, test: &test };
        let out = sweep(&data, &spec(vec![400], vec![Method::Uniform], 10)).unwrap();
        let cell = out.table.cell(400, Method::Uniform).unwrap();
        assert_eq!(cell.ok, 10);
        assert!(cell.err_avg_mean <= 0.05, "{cell:?}");
    }

    #[test]
    fn single_cell_table_and_determinism() {
        let (p, train, test) = sweep_fixture(60);
        let lin = LossModel::linear();
        let data = SweepData { p: &p, loss: &lin, train: &train, val: None, test: &test };
        let s = spec(vec![5], vec![Method::Learned], 1);
        let a = sweep(&data, &s).unwrap();
        assert_eq!(a.table.rows.len(), 1);
        assert_eq!(a.reports.len(), 1);
        let b = sweep(&data, &s).unwrap();
        let strip = |t: &ResultTable| {
            t.rows.iter().map(|r| (r.err_opt, r.err_avg, r.filtered_queries, r.error.clone())).collect::<Vec<_>>()
        };
        assert_eq!(strip(&a.table), strip(&b.table));
    }

    #[test]
    fn summaries_match_rows_and_flag_failures() {
        let (p, train, test) = sweep_fixture(60);
        let lin = LossModel::linear();
        let data = SweepData { p: &p, loss: &lin, train: &train, val: None, test: &test };
        // size 61 exceeds n for uniform sampling, so every uniform trial fails
        let out = sweep(&data, &spec(vec![10, 61], vec![Method::Uniform, Method::Leverage], 4)).unwrap();
        let cells = out.table.summarize();
        assert_eq!(cells.len(), 4);
        for c in &cells {
            let vals: Vec<f64> = out
                .table
                .rows
                .iter()
                .filter(|r| r.size == c.size && r.method == c.method && r.ok())
                .filter_map(|r| r.err_avg)
                .collect();
            if !vals.is_empty() {
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                assert!((mean - c.err_avg_mean).abs() < 1e-12);
            }
        }
        assert!(out.table.cell(61, Method::Uniform).unwrap().flagged);
        assert!(!out.table.cell(10, Method::Uniform).unwrap().flagged);
        let mut buf = Vec::new();
        write_aggregate_csv(&cells, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }
}
