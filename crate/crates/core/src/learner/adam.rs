use serde::{Deserialize, Serialize};

/// Adam moment accumulators for one flat parameter group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter shape mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient shape mismatch");
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Moments for every learnable part of a coreset. Frozen parts carry no
/// state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizerState {
    pub points: AdamState,
    pub labels: Option<AdamState>,
    pub weights: Option<AdamState>,
}

impl OptimizerState {
    pub fn new(n_points: usize, dim: usize, learn_labels: bool, learn_weights: bool) -> Self {
        OptimizerState {
            points: AdamState::new(n_points * dim),
            labels: learn_labels.then(|| AdamState::new(n_points)),
            weights: learn_weights.then(|| AdamState::new(n_points)),
        }
    }
}

/// Elementwise `max(0, u_i)`.
pub fn project_weights(u: &mut [f64]) {
    for x in u.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Scales all gradient groups so their joint Euclidean norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(groups: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = groups
        .iter()
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in groups.iter_mut() {
            g.iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_unit_step() {
        let mut s = AdamState::new(1);
        let mut p = [0.0];
        s.step(&mut p, &[1.0], 0.01);
        assert_eq!(p[0], -0.01 / (1.0 + 1e-8));
        assert_eq!(s.steps(), 1);
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut s = AdamState::new(3);
        let mut p = [1.0, -2.0, 0.5];
        s.step(&mut p, &[0.0; 3], 0.1);
        assert_eq!(p, [1.0, -2.0, 0.5]);
    }

    #[test]
    fn two_identical_steps() {
        // hand recurrence: both bias-corrected moments equal the gradient
        let mut s = AdamState::new(1);
        let mut p = [0.0];
        s.step(&mut p, &[1.0], 0.01);
        s.step(&mut p, &[1.0], 0.01);
        assert!((p[0] + 0.02).abs() < 1e-4);
        assert!((p[0] + 0.02 / (1.0 + 1e-8)).abs() < 1e-12);
    }

    #[test]
    fn projection() {
        let mut u = [0.2, -0.1];
        project_weights(&mut u);
        assert_eq!(u, [0.2, 0.0]);
        let mut u = [0.3, 0.0, 4.0];
        project_weights(&mut u);
        assert_eq!(u, [0.3, 0.0, 4.0]);
        let mut u = [-1.0, -2.0];
        project_weights(&mut u);
        assert_eq!(u, [0.0, 0.0]);
    }

    #[test]
    fn clipping_caps_joint_norm() {
        let mut a = vec![3000.0, 0.0];
        let mut b = vec![4000.0];
        let n = clip_global_norm(&mut [&mut a, &mut b], 1e3);
        assert_eq!(n, 5000.0);
        assert!((a[0] - 600.0).abs() < 1e-9 && (b[0] - 800.0).abs() < 1e-9);
        let mut c = vec![1.0];
        clip_global_norm(&mut [&mut c], 1e3);
        assert_eq!(c, vec![1.0]);
    }
}
