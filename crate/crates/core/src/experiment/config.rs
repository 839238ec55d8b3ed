//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::{CsvSchema, LabelMap};
use super::synth::{SynthConfig, SynthKind};
use crate::baselines::SolveMethod;
use crate::error::{Error, Result};
use crate::eval::Method;
use crate::learner::TrainConfig;
use crate::losses::{LossKind, LossModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DataSource {
    Csv(CsvSchema),
    Synth(SynthConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DataSource,
    pub loss: LossKind,
    #[serde(default)]
    pub intercept: bool,
}

impl DatasetConfig {
    pub fn loss_model(&self) -> LossModel {
        LossModel {
            kind: self.loss,
            intercept: self.intercept,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueriesConfig {
    pub n_starts: usize,
    pub steps_per_start: usize,
    pub gd_lr: f64,
    pub init_scale: f64,
    /// Train, validation and test sizes.
    pub split: [usize; 3],
    /// Read the pool from this CSV instead of generating trajectories.
    pub pool_csv: Option<String>,
}

impl Default for QueriesConfig {
    fn default() -> Self {
        QueriesConfig {
            n_starts: 20,
            steps_per_start: 119,
            gd_lr: 0.01,
            init_scale: 1.0,
            split: [2000, 200, 200],
            pool_csv: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_solve")]
    pub solve: SolveMethod,
    #[serde(default = "yes")]
    pub err_opt: bool,
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_trials() -> usize {
    10
}

fn default_solve() -> SolveMethod {
    SolveMethod::Auto
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    /// Worker threads; `None` uses all cores.
    pub threads: Option<usize>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: "results".into(),
            threads: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root of every random stream in the run.
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub queries: QueriesConfig,
    /// Omitted: defaults for the loss. Size and seed are set per trial.
    #[serde(default)]
    pub learner: Option<TrainConfig>,
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        // CSV paths are relative to the config file
        if let DataSource::Csv(schema) = &mut cfg.dataset.source {
            let p = PathBuf::from(&schema.path);
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    schema.path = dir.join(p).to_string_lossy().into_owned();
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn train_config(&self) -> TrainConfig {
        let first = self.sweep.sizes.first().copied().unwrap_or(1);
        self.learner
            .clone()
            .unwrap_or_else(|| TrainConfig::defaults_for(&self.dataset.loss_model(), first))
    }

    /// Checks everything that can be checked before loading data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.sweep.sizes.is_empty() {
            return bad("sweep.sizes is empty");
        }
        if self.sweep.sizes.contains(&0) {
            return bad("sweep.sizes must be positive");
        }
        if self.sweep.methods.is_empty() {
            return bad("sweep.methods is empty");
        }
        if self.sweep.trials == 0 {
            return bad("sweep.trials must be positive");
        }
        let [tr, _, te] = self.queries.split;
        if tr == 0 || te == 0 {
            return bad("queries.split needs non-empty train and test parts");
        }
        if self.queries.pool_csv.is_none() {
            if self.queries.n_starts == 0 {
                return bad("queries.n_starts must be positive");
            }
            let pool = self.queries.n_starts * (self.queries.steps_per_start + 1);
            if pool < self.queries.split.iter().sum::<usize>() {
                return Err(Error::InsufficientPool {
                    requested: self.queries.split.iter().sum(),
                    available: pool,
                });
            }
        }
        if !(self.queries.gd_lr > 0.0) {
            return bad("queries.gd_lr must be positive");
        }
        if self.output.threads == Some(0) {
            return bad("output.threads must be positive");
        }
        if let Some(t) = &self.learner {
            t.validate().map_err(|e| Error::Config(format!("learner: {e}")))?;
        }
        let logistic = self.dataset.loss == LossKind::LogisticRegression;
        match &self.dataset.source {
            DataSource::Synth(s) if logistic && s.kind != SynthKind::Logistic => {
                return bad("logistic loss needs logistic synthetic labels");
            }
            DataSource::Csv(s) if s.features.is_empty() => return bad("dataset.source.features is empty"),
            DataSource::Csv(s) if logistic && s.label_map != LabelMap::Pm1 => {
                log::warn!("logistic loss without label_map pm1; labels must already be +-1");
            }
            _ => {}
        }
        if self.sweep.methods.contains(&Method::Leverage) && logistic {
            return bad("leverage sampling is defined for linear regression only");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
        "seed": 7,
        "dataset": {
            "source": {"type": "synth", "kind": "linear", "n": 100, "d": 3},
            "loss": "linear_regression"
        },
        "queries": {"n_starts": 4, "steps_per_start": 9, "split": [20, 10, 10]},
        "learner": {"epochs": 2, "batch_size": 5},
        "sweep": {"sizes": [5, 10], "trials": 2},
        "output": {"dir": "out"}
    }"#;

    #[test]
    fn round_trip_is_identity() {
        let a = ExperimentConfig::from_json(EXAMPLE).unwrap();
        let b = ExperimentConfig::from_json(&a.to_json()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.sweep.methods, Method::ALL.to_vec());
        a.validate().unwrap();
    }

    #[test]
    fn csv_source_round_trips() {
        let text = r#"{
            "dataset": {
                "source": {"type": "csv", "path": "d.csv", "features": [0, "lat"], "label": "h",
                           "label_map": "pm1", "standardize": true},
                "loss": "logistic_regression", "intercept": true
            },
            "sweep": {"sizes": [3], "methods": ["learned", "uniform"]}
        }"#;
        let a = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(a, ExperimentConfig::from_json(&a.to_json()).unwrap());
        a.validate().unwrap();
        assert!(!a.train_config().learn_weights);
    }

    #[test]
    fn validation_errors() {
        let mut c = ExperimentConfig::from_json(EXAMPLE).unwrap();
        c.sweep.sizes.clear();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::from_json(EXAMPLE).unwrap();
        c.queries.split = [100, 10, 10];
        assert!(matches!(c.validate(), Err(Error::InsufficientPool { .. })));
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }
}
