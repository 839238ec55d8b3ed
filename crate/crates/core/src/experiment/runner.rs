//! Full experiment: load, generate queries, split, sweep, write artifacts.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{DataSource, ExperimentConfig};
use super::dataset::{load_dataset, DatasetMeta};
use super::synth::synth_dataset;
use crate::data::{LabeledPoints, ScoredQueries, WeightedLabeledSet};
use crate::error::{Error, Result};
use crate::eval::{sweep, write_aggregate_csv, write_trials_csv, CellSummary, ResultTable, SweepData, SweepSpec};
use crate::queries::{read_pool_csv, split_queries, trajectory_queries, TrajectoryConfig};
use crate::rng::derive_seed;

pub const TRIALS_CSV: &str = "trials.csv";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const REPORTS_JSON: &str = "train_reports.json";
pub const CONFIG_JSON: &str = "config.json";

/// Command-line values that replace config keys.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.out_dir {
            cfg.output.dir = d.to_string_lossy().into_owned();
        }
        if let Some(t) = self.threads {
            cfg.output.threads = Some(t);
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Seeds {
    pub root: u64,
    pub data: u64,
    pub queries: u64,
    pub split: u64,
    pub sweep: u64,
}

impl Seeds {
    pub fn from_root(root: u64) -> Self {
        Seeds {
            root,
            data: derive_seed(root, "experiment/data"),
            queries: derive_seed(root, "experiment/queries"),
            split: derive_seed(root, "experiment/split"),
            sweep: derive_seed(root, "experiment/sweep"),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
    pub seeds: Seeds,
    pub points: usize,
    pub dim: usize,
    pub dataset: Option<DatasetMeta>,
    pub query_pool: usize,
    pub split: [usize; 3],
    pub filtered_test_queries: usize,
    pub full_optimum_cost: Option<f64>,
    pub files: Vec<&'static str>,
    /// Effective configuration after command-line overrides.
    pub config: ExperimentConfig,
}

#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub table: ResultTable,
    pub cells: Vec<CellSummary>,
    pub manifest: Manifest,
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_json().as_bytes()))
}

fn load_data(cfg: &ExperimentConfig, seeds: &Seeds) -> Result<(WeightedLabeledSet, Option<DatasetMeta>)> {
    match &cfg.dataset.source {
        DataSource::Csv(schema) => {
            let d = load_dataset(Path::new(&schema.path), schema)?;
            Ok((d.set, Some(d.meta)))
        }
        DataSource::Synth(s) => Ok((synth_dataset(s, seeds.data)?.set, None)),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(())
}

/// Runs the experiment described by `cfg` (after `overrides`) and writes
/// its artifacts to the output directory. Validation errors surface before
/// any data is loaded.
pub fn run_experiment(cfg: &ExperimentConfig, overrides: &Overrides) -> Result<RunSummary> {
    let mut cfg = cfg.clone();
    overrides.apply(&mut cfg);
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.output.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_inner(cfg))
}

fn run_inner(cfg: ExperimentConfig) -> Result<RunSummary> {
    let seeds = Seeds::from_root(cfg.seed);
    let loss = cfg.dataset.loss_model();
    let (p, meta) = load_data(&cfg, &seeds)?;
    p.check_labels(&loss)?;
    info!("loaded {} points of dimension {}", p.len(), p.dim());

    let pool = match &cfg.queries.pool_csv {
        Some(path) => read_pool_csv(File::open(path)?)?,
        None => trajectory_queries(
            &p,
            &loss,
            &TrajectoryConfig {
                n_starts: cfg.queries.n_starts,
                steps_per_start: cfg.queries.steps_per_start,
                gd_lr: cfg.queries.gd_lr,
                init_scale: cfg.queries.init_scale,
                seed: seeds.queries,
            },
        )?,
    };
    if let Some(q) = pool.first() {
        if q.dim() != loss.query_dim(p.dim()) {
            return Err(Error::Config(format!(
                "query pool has dimension {}, the loss needs {}",
                q.dim(),
                loss.query_dim(p.dim())
            )));
        }
    }
    let [a, b, c] = cfg.queries.split;
    let (train, val, test) = split_queries(&pool, (a, b, c), seeds.split)?;
    let train = ScoredQueries::new(&p, &loss, &train.queries)?;
    let val = ScoredQueries::new(&p, &loss, &val.queries)?;
    let test = ScoredQueries::new(&p, &loss, &test.queries)?;
    let filtered_test_queries = test.above_floor(crate::RATIO_FLOOR).1;

    let spec = SweepSpec {
        sizes: cfg.sweep.sizes.clone(),
        methods: cfg.sweep.methods.clone(),
        trials: cfg.sweep.trials,
        seed: seeds.sweep,
        train: cfg.train_config(),
        solve: cfg.sweep.solve,
        err_opt: cfg.sweep.err_opt,
    };
    let data = SweepData {
        p: &p,
        loss: &loss,
        train: &train,
        val: (!val.is_empty()).then_some(&val),
        test: &test,
    };
    let out = sweep(&data, &spec)?;
    let cells = out.table.summarize();
    for c in cells.iter().filter(|c| c.flagged) {
        log::warn!("size {} {}: only {}/{} trials succeeded", c.size, c.method.as_str(), c.ok, c.trials);
    }

    let dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&dir)?;
    write_trials_csv(&out.table, BufWriter::new(File::create(dir.join(TRIALS_CSV))?))?;
    write_aggregate_csv(&cells, BufWriter::new(File::create(dir.join(AGGREGATE_CSV))?))?;
    write_json(&dir.join(REPORTS_JSON), &out.reports)?;
    fs::write(dir.join(CONFIG_JSON), cfg.to_json() + "\n")?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: config_hash(&cfg),
        seeds,
        points: p.len(),
        dim: p.dim(),
        dataset: meta,
        query_pool: pool.len(),
        split: cfg.queries.split,
        filtered_test_queries,
        full_optimum_cost: out.full_optimum.as_ref().map(|o| o.cost),
        files: vec![TRIALS_CSV, AGGREGATE_CSV, REPORTS_JSON, CONFIG_JSON, MANIFEST_JSON],
        config: cfg,
    };
    write_json(&dir.join(MANIFEST_JSON), &manifest)?;
    info!("wrote results to {}", dir.display());
    Ok(RunSummary {
        out_dir: dir,
        table: out.table,
        cells,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::from_json(
            r#"{
            "seed": 3,
            "dataset": {"source": {"type": "synth", "kind": "linear", "n": 40, "d": 2}, "loss": "linear_regression"},
            "queries": {"n_starts": 3, "steps_per_start": 9, "split": [20, 5, 5]},
            "learner": {"epochs": 2, "batch_size": 5},
            "sweep": {"sizes": [1], "trials": 1}
        }"#,
        )
        .unwrap();
        cfg.output.dir = dir.to_string_lossy().into_owned();
        cfg
    }

    #[test]
    fn smoke_run_writes_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let start = std::time::Instant::now();
        let s = run_experiment(&tiny(tmp.path()), &Overrides::default()).unwrap();
        assert!(start.elapsed().as_secs_f64() < 5.0);
        assert_eq!(s.table.rows.len(), 3);
        for f in s.manifest.files.iter() {
            assert!(tmp.path().join(f).exists(), "{f}");
        }
        let agg = fs::read_to_string(tmp.path().join(AGGREGATE_CSV)).unwrap();
        assert_eq!(agg.lines().count(), 4);
    }

    #[test]
    fn overrides_change_seed_and_hash() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tiny(tmp.path());
        let mut other = cfg.clone();
        Overrides { seed: Some(99), ..Default::default() }.apply(&mut other);
        assert_eq!(other.seed, 99);
        assert_ne!(config_hash(&cfg), config_hash(&other));
    }

    #[test]
    fn invalid_config_fails_before_compute() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny(tmp.path());
        cfg.sweep.trials = 0;
        let e = run_experiment(&cfg, &Overrides::default()).unwrap_err();
        assert!(e.is_validation());
        assert!(!tmp.path().join(MANIFEST_JSON).exists());
    }
}
