//! Per-point losses `f(p, b, q)` and their analytic gradients.
//!
//! Both supported losses depend on the query only through the margin
//! `z = <p, q>` (plus `q[d]` when an intercept is used), so the gradient
//! machinery works with the scalar slopes `df/dz` and `df/db`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::dot;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    LinearRegression,
    LogisticRegression,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LossModel {
    pub kind: LossKind,
    /// Appends a constant-1 feature, so queries carry one extra coordinate.
    #[serde(default)]
    pub intercept: bool,
}

/// Value and slopes of one per-point loss evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossEval {
    pub value: f64,
    /// `df/dz` where `z` is the margin.
    pub dz: f64,
    /// `df/db`.
    pub db: f64,
}

/// Gradients of `u * f(p, b, q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGradients {
    pub point: Vec<f64>,
    pub label: f64,
    pub weight: f64,
    pub query: Vec<f64>,
}

#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `(<p, q> - b)^2`.
pub fn linreg_loss(p: &[f64], b: f64, q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let r = dot(p, q) - b;
    r * r
}

/// `log(1 + exp(-b <p, q>))` for `b` in `{-1, +1}`.
pub fn logreg_loss(p: &[f64], b: f64, q: &[f64]) -> Result<f64> {
    check_pm1(b)?;
    debug_assert_eq!(p.len(), q.len());
    Ok(softplus(-b * dot(p, q)))
}

fn check_pm1(b: f64) -> Result<()> {
    if b == 1.0 || b == -1.0 {
        Ok(())
    } else {
        Err(Error::contract(format!(
            "logistic label must be -1 or +1, got {b}"
        )))
    }
}

impl LossModel {
    pub const fn linear() -> Self {
        LossModel {
            kind: LossKind::LinearRegression,
            intercept: false,
        }
    }

    pub const fn logistic() -> Self {
        LossModel {
            kind: LossKind::LogisticRegression,
            intercept: false,
        }
    }

    pub const fn with_intercept(mut self, intercept: bool) -> Self {
        self.intercept = intercept;
        self
    }

    /// Number of query coordinates for points of dimension `point_dim`.
    pub fn query_dim(&self, point_dim: usize) -> usize {
        point_dim + usize::from(self.intercept)
    }

    /// Coreset labels are learnable only where the loss is defined for
    /// arbitrary real labels.
    pub fn labels_learnable(&self) -> bool {
        matches!(self.kind, LossKind::LinearRegression)
    }

    pub fn check_label(&self, b: f64) -> Result<()> {
        match self.kind {
            LossKind::LinearRegression => Ok(()),
            LossKind::LogisticRegression => check_pm1(b),
        }
    }

    #[inline]
    pub fn margin(&self, p: &[f64], q: &[f64]) -> f64 {
        let d = p.len();
        let z = dot(p, &q[..d]);
        if self.intercept {
            z + q[d]
        } else {
            z
        }
    }

    #[inline]
    pub fn value(&self, p: &[f64], b: f64, q: &[f64]) -> f64 {
        let z = self.margin(p, q);
        match self.kind {
            LossKind::LinearRegression => {
                let r = z - b;
                r * r
            }
            LossKind::LogisticRegression => softplus(-b * z),
        }
    }

    /// Value together with `df/dz` and `df/db`. `value` is computed with the
    /// same arithmetic as [`LossModel::value`].
    #[inline]
    pub fn eval(&self, p: &[f64], b: f64, q: &[f64]) -> LossEval {
        let z = self.margin(p, q);
        match self.kind {
            LossKind::LinearRegression => {
                let r = z - b;
                LossEval {
                    value: r * r,
                    dz: 2.0 * r,
                    db: -2.0 * r,
                }
            }
            LossKind::LogisticRegression => {
                let t = -b * z;
                let s = sigmoid(t);
                LossEval {
                    value: softplus(t),
                    dz: -b * s,
                    db: -z * s,
                }
            }
        }
    }

    /// Gradients of `u * f(p, b, q)` with respect to `p`, `b`, `u` and `q`.
    pub fn gradients(&self, p: &[f64], b: f64, u: f64, q: &[f64]) -> LossGradients {
        let d = p.len();
        let e = self.eval(p, b, q);
        let point = q[..d].iter().map(|qi| u * e.dz * qi).collect();
        let mut query: Vec<f64> = p.iter().map(|pi| u * e.dz * pi).collect();
        if self.intercept {
            query.push(u * e.dz);
        }
        LossGradients {
            point,
            label: u * e.db,
            weight: e.value,
            query,
        }
    }
}

/// Free-function form of [`LossModel::gradients`].
pub fn loss_gradients(loss: &LossModel, p: &[f64], b: f64, u: f64, q: &[f64]) -> LossGradients {
    loss.gradients(p, b, u, q)
}
