//! Learned weighted coresets.
//!
//! A coreset here is a small synthetic weighted labeled set `(C, u, y)` whose
//! total cost tracks the cost of the full input `(P, w, b)` over a
//! distribution of queries. The crate learns such sets by gradient descent
//! ([`learner`]), builds sampling baselines ([`baselines`]), scores them
//! ([`eval`]), computes and empirically checks the Hoeffding sample-size
//! bounds that back the generalization argument ([`theory`]), and drives
//! whole experiments from a JSON config ([`experiment`]).

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod learner;
pub mod losses;
pub mod numeric;
pub mod queries;
pub mod rng;
pub mod theory;

pub use data::{
    expected_cost, normalize_weights, total_cost, Coreset, LabeledPoints, MeasurableQuerySpace,
    Query, ScoredQueries, WeightedLabeledSet,
};
pub use error::{Error, Result};
pub use learner::{autocl_average, autocl_practical, Algorithm, TrainConfig, TrainReport};
pub use losses::{LossKind, LossModel};
pub use queries::{QueryBatch, QueryRole};

/// Queries whose full-data cost falls at or below this value are excluded
/// from ratio objectives and ratio metrics.
pub const RATIO_FLOOR: f64 = 1e-12;
