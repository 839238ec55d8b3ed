//! End-to-end experiments: dataset ingestion, synthetic stand-ins, JSON
//! configuration and the sweep runner that writes result artifacts.

pub mod config;
pub mod dataset;
pub mod runner;
pub mod synth;

pub use config::{DataSource, DatasetConfig, ExperimentConfig, OutputConfig, QueriesConfig, SweepConfig};
pub use dataset::{load_dataset, Column, CsvSchema, DatasetMeta, LabelMap, LoadedDataset};
pub use runner::{run_experiment, Overrides, RunSummary};
pub use synth::{synth_dataset, SynthConfig, SynthKind};
