//! Synthetic regression and classification data with a planted model.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::WeightedLabeledSet;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// `b = <x, beta> + noise * N(0, 1)`.
    Linear,
    /// `b = sign(<x, beta> + noise * N(0, 1))`, labels in `{-1, +1}`.
    Logistic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub kind: SynthKind,
    pub n: usize,
    pub d: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Added to every planted-model score; only meaningful with an
    /// intercept column in the loss.
    #[serde(default)]
    pub offset: f64,
}

fn default_noise() -> f64 {
    0.1
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub set: WeightedLabeledSet,
    pub beta: Vec<f64>,
}

/// Standard-normal features, planted coefficients drawn from `N(0, 1)`,
/// uniform weights `1/n`.
pub fn synth_dataset(cfg: &SynthConfig, seed: u64) -> Result<SynthData> {
    if cfg.n < 1 || cfg.d < 1 {
        return Err(Error::Config("synthetic data needs n >= 1 and d >= 1".into()));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(Error::Config("noise must be nonnegative".into()));
    }
    let mut rng = stream_rng(seed, "synth/beta");
    let beta: Vec<f64> = (0..cfg.d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut rng = stream_rng(seed, "synth/rows");
    let mut points = Vec::with_capacity(cfg.n);
    let mut labels = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let x: Vec<f64> = (0..cfg.d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let e: f64 = StandardNormal.sample(&mut rng);
        let score = x.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + cfg.offset + cfg.noise * e;
        labels.push(match cfg.kind {
            SynthKind::Linear => score,
            SynthKind::Logistic if score > 0.0 => 1.0,
            SynthKind::Logistic if score < 0.0 => -1.0,
            SynthKind::Logistic => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        });
        points.push(x);
    }
    Ok(SynthData {
        set: WeightedLabeledSet::uniform(points, labels)?,
        beta,
    })
}
