//! CSV dataset ingestion.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{normalize_weights, WeightedLabeledSet};
use crate::error::{Error, Result};

/// A column addressed by zero-based index or by header name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Column {
    Index(usize),
    Name(String),
}

impl std::fmt::Display for Column {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Column::Index(i) => write!(f, "#{i}"),
            Column::Name(n) => f.write_str(n),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMap {
    /// Labels used as read.
    #[default]
    Identity,
    /// `{0, 1}` mapped to `{-1, +1}`; `-1` and `+1` pass through.
    Pm1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub path: String,
    pub features: Vec<Column>,
    pub label: Column,
    #[serde(default)]
    pub weight: Option<Column>,
    /// `None` detects a header from the first row.
    #[serde(default)]
    pub header: Option<bool>,
    #[serde(default)]
    pub label_map: LabelMap,
    /// Rescale each feature to mean 0, variance 1.
    #[serde(default)]
    pub standardize: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub rows: usize,
    pub feature_columns: Vec<String>,
    pub label_column: String,
    pub weight_column: Option<String>,
    pub had_header: bool,
    /// Per-feature `(mean, std)` removed when standardizing.
    pub standardization: Option<Vec<(f64, f64)>>,
}

#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub set: WeightedLabeledSet,
    pub meta: DatasetMeta,
}

fn parse_err(line: u64, column: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column: column.into(),
        message: message.into(),
    }
}

fn resolve(col: &Column, header: Option<&csv::StringRecord>, width: usize) -> Result<(usize, String)> {
    match col {
        Column::Index(i) if *i < width => {
            let name = header.and_then(|h| h.get(*i)).map(str::to_string).unwrap_or_else(|| format!("#{i}"));
            Ok((*i, name))
        }
        Column::Index(i) => Err(parse_err(1, format!("#{i}"), format!("column index out of range ({width} columns)"))),
        Column::Name(n) => {
            let h = header.ok_or_else(|| parse_err(1, n.clone(), "named column requires a header row"))?;
            h.iter()
                .position(|c| c.trim() == n)
                .map(|i| (i, n.clone()))
                .ok_or_else(|| parse_err(1, n.clone(), "missing column"))
        }
    }
}

/// Reads a CSV dataset. Without a weight column every row gets weight 1;
/// weights are then normalized to sum to 1.
pub fn load_dataset(path: &Path, schema: &CsvSchema) -> Result<LoadedDataset> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_dataset(&text, schema)
}

pub fn parse_dataset(text: &str, schema: &CsvSchema) -> Result<LoadedDataset> {
    if schema.features.is_empty() {
        return Err(Error::Config("schema lists no feature columns".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for rec in reader.records() {
        records.push(rec?);
    }
    if records.is_empty() {
        return Err(parse_err(1, "", "empty file"));
    }
    let had_header = match schema.header {
        Some(h) => h,
        None => records[0].iter().any(|c| c.parse::<f64>().is_err()),
    };
    let header = had_header.then(|| records.remove(0));
    if records.is_empty() {
        return Err(parse_err(2, "", "no data rows"));
    }
    let width = records[0].len();
    let feats = schema
        .features
        .iter()
        .map(|c| resolve(c, header.as_ref(), width))
        .collect::<Result<Vec<_>>>()?;
    let label = resolve(&schema.label, header.as_ref(), width)?;
    let weight = schema.weight.as_ref().map(|c| resolve(c, header.as_ref(), width)).transpose()?;

    let n = records.len();
    let d = feats.len();
    let mut points = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for rec in &records {
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let cell = |(idx, name): &(usize, String)| -> Result<f64> {
            let raw = rec
                .get(*idx)
                .ok_or_else(|| parse_err(line, name.clone(), format!("row has {} columns", rec.len())))?;
            let v: f64 = raw
                .parse()
                .map_err(|_| parse_err(line, name.clone(), format!("non-numeric cell {raw:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(line, name.clone(), format!("non-finite cell {raw:?}")));
            }
            Ok(v)
        };
        for f in &feats {
            points.push(cell(f)?);
        }
        let mut b = cell(&label)?;
        if schema.label_map == LabelMap::Pm1 {
            b = match b {
                x if x == 0.0 || x == -1.0 => -1.0,
                x if x == 1.0 => 1.0,
                x => return Err(parse_err(line, label.1.clone(), format!("label {x} is not binary"))),
            };
        }
        labels.push(b);
        weights.push(match &weight {
            Some(w) => {
                let v = cell(w)?;
                if v < 0.0 {
                    return Err(parse_err(line, w.1.clone(), "negative weight"));
                }
                v
            }
            None => 1.0,
        });
    }

    let standardization = schema.standardize.then(|| standardize(&mut points, d));
    let set = normalize_weights(&WeightedLabeledSet::from_flat(d, points, weights, labels)?)?;
    Ok(LoadedDataset {
        set,
        meta: DatasetMeta {
            rows: n,
            feature_columns: feats.into_iter().map(|f| f.1).collect(),
            label_column: label.1,
            weight_column: weight.map(|w| w.1),
            had_header,
            standardization,
        },
    })
}

/// Centers and scales each column of a row-major matrix in place. Constant
/// columns are only centered.
pub fn standardize(points: &mut [f64], d: usize) -> Vec<(f64, f64)> {
    let n = points.len() / d;
    (0..d)
        .map(|j| {
            let col: Vec<f64> = (0..n).map(|i| points[i * d + j]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            let std = if var > 0.0 { var.sqrt() } else { 1.0 };
            for i in 0..n {
                points[i * d + j] = (points[i * d + j] - mean) / std;
            }
            (mean, std)
        })
        .collect()
}
