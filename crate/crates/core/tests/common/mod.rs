#![allow(dead_code)]

use corelearn::learner::objective::{
    average_objective, average_objective_value, ratio_objective, ratio_objective_value,
};
use corelearn::{total_cost, Coreset, LabeledPoints, LossModel, Query, WeightedLabeledSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const FD_STEP: f64 = 1e-6;
pub const FD_REL: f64 = 1e-4;
pub const FD_FLOOR: f64 = 1e-8;

/// `|analytic - numeric| <= 1e-4 * max(|analytic|, |numeric|)`, or within the
/// absolute floor.
pub fn fd_close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= FD_FLOOR || diff <= FD_REL * analytic.abs().max(numeric.abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    Average,
    Ratio,
}

pub struct FdCase {
    pub loss: LossModel,
    pub objective: Objective,
    pub full: WeightedLabeledSet,
    pub coreset: Coreset,
    pub queries: Vec<Query>,
    pub lambda: f64,
}

impl FdCase {
    fn full_costs(&self) -> Vec<f64> {
        self.queries.iter().map(|q| total_cost(&self.full, &self.loss, q).unwrap()).collect()
    }

    pub fn value(&self, c: &Coreset) -> f64 {
        let fp = self.full_costs();
        let ws = self.full.weight_sum();
        match self.objective {
            Objective::Average => {
                let mean = fp.iter().sum::<f64>() / fp.len() as f64;
                average_objective_value(c, &self.loss, &self.queries, mean, ws, self.lambda)
            }
            Objective::Ratio => {
                let refs: Vec<&Query> = self.queries.iter().collect();
                ratio_objective_value(c, &self.loss, &refs, &fp, ws, self.lambda)
            }
        }
    }

    /// Analytic gradient flattened as points, labels, weights.
    pub fn analytic(&self) -> (f64, Vec<f64>) {
        let fp = self.full_costs();
        let ws = self.full.weight_sum();
        let g = match self.objective {
            Objective::Average => {
                let mean = fp.iter().sum::<f64>() / fp.len() as f64;
                average_objective(&self.coreset, &self.loss, &self.queries, mean, ws, self.lambda)
            }
            Objective::Ratio => {
                let refs: Vec<&Query> = self.queries.iter().collect();
                ratio_objective(&self.coreset, &self.loss, &refs, &fp, ws, self.lambda)
            }
        };
        let mut flat = g.points.clone();
        flat.extend(&g.labels);
        flat.extend(&g.weights);
        (g.value, flat)
    }

    /// Every absolute-value argument is at least `margin` from zero, so the
    /// objective is smooth within the finite-difference stencil.
    pub fn away_from_kinks(&self, margin: f64) -> bool {
        let fp = self.full_costs();
        let gap = (self.full.weight_sum() - self.coreset.weight_sum()).abs();
        if self.lambda > 0.0 && gap < margin {
            return false;
        }
        let fc: Vec<f64> = self.queries.iter().map(|q| total_cost(&self.coreset, &self.loss, q).unwrap()).collect();
        match self.objective {
            Objective::Ratio => fp.iter().zip(&fc).all(|(p, c)| (1.0 - c / p).abs() >= margin),
            Objective::Average => {
                let k = fp.len() as f64;
                (fp.iter().sum::<f64>() / k - fc.iter().sum::<f64>() / k).abs() >= margin
            }
        }
    }

    /// Central differences over every point, label (where learnable) and
    /// weight coordinate. Returns (coordinate, analytic, numeric) failures
    /// and the number of coordinates checked.
    pub fn check(&self) -> (Vec<(usize, f64, f64)>, usize) {
        let (_, grad) = self.analytic();
        let c = &self.coreset;
        let (m, d) = (c.len(), c.dim());
        let base_pts = c.points_flat().to_vec();
        let base_lab = c.labels().to_vec();
        let base_w = c.weights().to_vec();
        let build = |pts: &[f64], lab: &[f64], w: &[f64]| {
            Coreset::from_flat(d, pts.to_vec(), w.to_vec(), lab.to_vec()).unwrap()
        };
        let mut failures = Vec::new();
        let mut checked = 0;
        for idx in 0..grad.len() {
            let (mut pp, mut pl, mut pw) = (base_pts.clone(), base_lab.clone(), base_w.clone());
            let (mut mp, mut ml, mut mw) = (base_pts.clone(), base_lab.clone(), base_w.clone());
            if idx < m * d {
                pp[idx] += FD_STEP;
                mp[idx] -= FD_STEP;
            } else if idx < m * d + m {
                if !self.loss.labels_learnable() {
                    continue;
                }
                pl[idx - m * d] += FD_STEP;
                ml[idx - m * d] -= FD_STEP;
            } else {
                pw[idx - m * d - m] += FD_STEP;
                mw[idx - m * d - m] -= FD_STEP;
            }
            let num = (self.value(&build(&pp, &pl, &pw)) - self.value(&build(&mp, &ml, &mw))) / (2.0 * FD_STEP);
            checked += 1;
            if !fd_close(grad[idx], num) {
                failures.push((idx, grad[idx], num));
            }
        }
        (failures, checked)
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// A random smooth configuration; `None` if it lands near a kink.
pub fn random_case(seed: u64, loss: LossModel, objective: Objective) -> Option<FdCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=3);
    let n = rng.random_range(3..=8);
    let m = rng.random_range(1..=4);
    let k = rng.random_range(1..=5);
    let logistic = !loss.labels_learnable();
    let label = |rng: &mut ChaCha8Rng| {
        if logistic {
            if rng.random::<bool>() { 1.0 } else { -1.0 }
        } else {
            gaussian(rng)
        }
    };
    let row = |rng: &mut ChaCha8Rng| (0..d).map(|_| gaussian(rng)).collect::<Vec<f64>>();
    let pts: Vec<Vec<f64>> = (0..n).map(|_| row(&mut rng)).collect();
    let labels: Vec<f64> = (0..n).map(|_| label(&mut rng)).collect();
    let full = WeightedLabeledSet::uniform(pts, labels).unwrap();
    let cpts: Vec<Vec<f64>> = (0..m).map(|_| row(&mut rng)).collect();
    let clabels: Vec<f64> = (0..m).map(|_| label(&mut rng)).collect();
    let cw: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
    let coreset = Coreset::new(cpts, cw, clabels).unwrap();
    let qd = loss.query_dim(d);
    let queries = (0..k).map(|_| Query::new(row(&mut rng).into_iter().chain((qd > d).then(|| gaussian(&mut rng))).collect()).unwrap()).collect();
    let lambda = if rng.random::<bool>() { rng.random_range(0.0..2.0) } else { 0.0 };
    let case = FdCase { loss, objective, full, coreset, queries, lambda };
    case.away_from_kinks(1e-3).then_some(case)
}

/// Runs `per_combo` smooth configurations for each loss (with and without
/// intercept) and objective. Returns (configurations, coordinates, failures).
pub fn gradient_suite(per_combo: usize) -> (usize, usize, Vec<String>) {
    let mut configs = 0;
    let mut coords = 0;
    let mut failures = Vec::new();
    let losses = [
        LossModel::linear(),
        LossModel::linear().with_intercept(true),
        LossModel::logistic(),
        LossModel::logistic().with_intercept(true),
    ];
    for (li, loss) in losses.iter().enumerate() {
        for objective in [Objective::Average, Objective::Ratio] {
            let mut found = 0;
            let mut seed = 1000 * li as u64 + if objective == Objective::Ratio { 500_000 } else { 0 };
            while found < per_combo {
                seed += 1;
                let Some(case) = random_case(seed, *loss, objective) else { continue };
                found += 1;
                let (bad, n) = case.check();
                coords += n;
                for (i, a, num) in bad {
                    failures.push(format!("{loss:?} {objective:?} seed {seed} coord {i}: analytic {a} numeric {num}"));
                }
            }
            configs += found;
        }
    }
    (configs, coords, failures)
}

/// Central-difference check of the per-point loss gradients with respect
/// to point, label, weight and query.
pub fn loss_gradient_suite(n: usize) -> Vec<String> {
    let mut failures = Vec::new();
    for seed in 0..n as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 77);
        for loss in [LossModel::linear(), LossModel::logistic(), LossModel::linear().with_intercept(true)] {
            let d = rng.random_range(1..=4);
            let p: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
            let q: Vec<f64> = (0..loss.query_dim(d)).map(|_| gaussian(&mut rng)).collect();
            let b = if loss.labels_learnable() { gaussian(&mut rng) } else { 1.0 };
            let u = rng.random_range(0.1..2.0);
            let g = loss.gradients(&p, b, u, &q);
            let f = |p: &[f64], b: f64, u: f64, q: &[f64]| u * loss.value(p, b, q);
            let mut check = |what: &str, a: f64, num: f64| {
                if !fd_close(a, num) {
                    failures.push(format!("{loss:?} seed {seed} {what}: analytic {a} numeric {num}"));
                }
            };
            for i in 0..d {
                let (mut hi, mut lo) = (p.clone(), p.clone());
                hi[i] += FD_STEP;
                lo[i] -= FD_STEP;
                check("point", g.point[i], (f(&hi, b, u, &q) - f(&lo, b, u, &q)) / (2.0 * FD_STEP));
            }
            for i in 0..q.len() {
                let (mut hi, mut lo) = (q.clone(), q.clone());
                hi[i] += FD_STEP;
                lo[i] -= FD_STEP;
                check("query", g.query[i], (f(&p, b, u, &hi) - f(&p, b, u, &lo)) / (2.0 * FD_STEP));
            }
            check("weight", g.weight, (f(&p, b, u + FD_STEP, &q) - f(&p, b, u - FD_STEP, &q)) / (2.0 * FD_STEP));
            if loss.labels_learnable() {
                check("label", g.label, (f(&p, b + FD_STEP, u, &q) - f(&p, b - FD_STEP, u, &q)) / (2.0 * FD_STEP));
            }
        }
    }
    failures
}
