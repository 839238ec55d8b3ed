//! Python bindings: weighted sets, coresets, losses, learners, baselines,
//! metrics and sample-size bounds.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use corelearn::baselines::{leverage_coreset as lev_coreset, uniform_coreset as uni_coreset};
use corelearn::eval;
use corelearn::learner::{self, Algorithm, TrainConfig};
use corelearn::queries::{self, TrajectoryConfig};
use corelearn::theory;
use corelearn::{LabeledPoints, LossKind, Query, ScoredQueries};

fn to_py(e: corelearn::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn to_queries(qs: Vec<Vec<f64>>) -> PyResult<Vec<Query>> {
    qs.into_iter().map(|q| Query::new(q).map_err(to_py)).collect()
}

fn rows<S: LabeledPoints>(s: &S) -> Vec<Vec<f64>> {
    (0..s.len()).map(|i| s.point(i).to_vec()).collect()
}

/// Input set `(P, w, b)`.
#[pyclass(name = "WeightedLabeledSet", from_py_object)]
#[derive(Clone)]
pub struct PySet {
    inner: corelearn::WeightedLabeledSet,
}

#[pymethods]
impl PySet {
    #[new]
    #[pyo3(signature = (points, labels, weights=None))]
    fn new(points: Vec<Vec<f64>>, labels: Vec<f64>, weights: Option<Vec<f64>>) -> PyResult<Self> {
        let inner = match weights {
            Some(w) => corelearn::WeightedLabeledSet::new(points, w, labels),
            None => corelearn::WeightedLabeledSet::uniform(points, labels),
        }
        .map_err(to_py)?;
        Ok(PySet { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        rows(&self.inner)
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn labels(&self) -> Vec<f64> {
        self.inner.labels().to_vec()
    }

    fn weight_sum(&self) -> f64 {
        self.inner.weight_sum()
    }

    fn as_coreset(&self) -> PyCoreset {
        PyCoreset { inner: self.inner.as_coreset() }
    }

    fn total_cost(&self, loss: &PyLoss, q: Vec<f64>) -> PyResult<f64> {
        corelearn::total_cost(&self.inner, &loss.inner, &Query::new(q).map_err(to_py)?).map_err(to_py)
    }
}

/// Learnable weighted synthetic set `(C, u, y)`.
#[pyclass(name = "Coreset", from_py_object)]
#[derive(Clone)]
pub struct PyCoreset {
    inner: corelearn::Coreset,
}

#[pymethods]
impl PyCoreset {
    #[new]
    fn new(points: Vec<Vec<f64>>, weights: Vec<f64>, labels: Vec<f64>) -> PyResult<Self> {
        Ok(PyCoreset { inner: corelearn::Coreset::new(points, weights, labels).map_err(to_py)? })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        rows(&self.inner)
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn labels(&self) -> Vec<f64> {
        self.inner.labels().to_vec()
    }

    fn weight_sum(&self) -> f64 {
        self.inner.weight_sum()
    }

    fn total_cost(&self, loss: &PyLoss, q: Vec<f64>) -> PyResult<f64> {
        corelearn::total_cost(&self.inner, &loss.inner, &Query::new(q).map_err(to_py)?).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let raw: corelearn::Coreset = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let inner = corelearn::Coreset::from_flat(raw.dim(), raw.points_flat().to_vec(), raw.weights().to_vec(), raw.labels().to_vec())
            .map_err(to_py)?;
        Ok(PyCoreset { inner })
    }
}

/// Per-point loss: "linreg" (squared residual) or "logreg" (logistic, labels +-1).
#[pyclass(name = "LossModel", from_py_object)]
#[derive(Clone)]
pub struct PyLoss {
    inner: corelearn::LossModel,
}

#[pymethods]
impl PyLoss {
    #[new]
    #[pyo3(signature = (kind, intercept=false))]
    fn new(kind: &str, intercept: bool) -> PyResult<Self> {
        let kind = match kind {
            "linreg" | "linear_regression" => LossKind::LinearRegression,
            "logreg" | "logistic_regression" => LossKind::LogisticRegression,
            _ => return Err(PyValueError::new_err(format!("unknown loss {kind:?}"))),
        };
        Ok(PyLoss { inner: corelearn::LossModel { kind, intercept } })
    }

    fn value(&self, p: Vec<f64>, b: f64, q: Vec<f64>) -> PyResult<f64> {
        if q.len() != self.inner.query_dim(p.len()) {
            return Err(PyValueError::new_err("query dimension does not match the point"));
        }
        self.inner.check_label(b).map_err(to_py)?;
        Ok(self.inner.value(&p, b, &q))
    }

    fn query_dim(&self, point_dim: usize) -> usize {
        self.inner.query_dim(point_dim)
    }
}

#[pyfunction]
fn hoeffding_k(eps: f64, delta: f64, m: f64) -> PyResult<u64> {
    theory::hoeffding_k(eps, delta, m).map_err(to_py)
}

#[pyfunction]
fn claim2_k(eps: f64, delta: f64, m: f64) -> PyResult<u64> {
    theory::claim2_k(eps, delta, m).map_err(to_py)
}

#[pyfunction]
fn relate_eps(eps_prime: f64, m: f64) -> PyResult<f64> {
    theory::relate_eps(eps_prime, m).map_err(to_py)
}

#[pyfunction]
fn estimate_m(p: &PySet, loss: &PyLoss, pool: Vec<Vec<f64>>) -> PyResult<f64> {
    theory::estimate_m(&p.inner, &loss.inner, &to_queries(pool)?).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (p, m, seed=0))]
fn uniform_coreset(p: &PySet, m: usize, seed: u64) -> PyResult<PyCoreset> {
    Ok(PyCoreset { inner: uni_coreset(&p.inner, m, seed).map_err(to_py)? })
}

#[pyfunction]
#[pyo3(signature = (p, loss, m, seed=0))]
fn leverage_coreset(p: &PySet, loss: &PyLoss, m: usize, seed: u64) -> PyResult<PyCoreset> {
    Ok(PyCoreset { inner: lev_coreset(&p.inner, &loss.inner, m, seed).map_err(to_py)? })
}

#[pyfunction]
#[pyo3(signature = (p, loss, n_starts=20, steps_per_start=119, gd_lr=0.01, init_scale=1.0, seed=0))]
fn trajectory_queries(
    p: &PySet,
    loss: &PyLoss,
    n_starts: usize,
    steps_per_start: usize,
    gd_lr: f64,
    init_scale: f64,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let cfg = TrajectoryConfig { n_starts, steps_per_start, gd_lr, init_scale, seed };
    let pool = queries::trajectory_queries(&p.inner, &loss.inner, &cfg).map_err(to_py)?;
    Ok(pool.into_iter().map(Query::into_inner).collect())
}

/// Learns a coreset; returns `(coreset, report_json)`.
#[pyfunction]
#[pyo3(signature = (p, loss, train, size, val=None, algorithm="practical", epochs=None, learning_rate=None,
                    lambda_=None, batch_size=None, learn_weights=None, seed=0))]
#[allow(clippy::too_many_arguments)]
fn learn_coreset(
    p: &PySet,
    loss: &PyLoss,
    train: Vec<Vec<f64>>,
    size: usize,
    val: Option<Vec<Vec<f64>>>,
    algorithm: &str,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    lambda_: Option<f64>,
    batch_size: Option<usize>,
    learn_weights: Option<bool>,
    seed: u64,
) -> PyResult<(PyCoreset, String)> {
    let mut cfg = TrainConfig::defaults_for(&loss.inner, size);
    cfg.seed = seed;
    cfg.algorithm = match algorithm {
        "average" => Algorithm::Average,
        "practical" => Algorithm::Practical,
        _ => return Err(PyValueError::new_err(format!("unknown algorithm {algorithm:?}"))),
    };
    if let Some(v) = epochs {
        cfg.epochs = v;
    }
    if let Some(v) = learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = lambda_ {
        cfg.lambda = v;
    }
    if let Some(v) = batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = learn_weights {
        cfg.learn_weights = v;
    }
    cfg.validate().map_err(to_py)?;
    let train = ScoredQueries::new(&p.inner, &loss.inner, &to_queries(train)?).map_err(to_py)?;
    let val = val
        .map(|v| to_queries(v).and_then(|q| ScoredQueries::new(&p.inner, &loss.inner, &q).map_err(to_py)))
        .transpose()?;
    let (c, report) = learner::learn_coreset(&p.inner, &train, val.as_ref(), &loss.inner, &cfg).map_err(to_py)?;
    let json = serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((PyCoreset { inner: c }, json))
}

/// Mean relative cost deviation over test queries; returns `(value, filtered)`.
#[pyfunction]
fn err_avg(p: &PySet, coreset: &PyCoreset, loss: &PyLoss, test: Vec<Vec<f64>>) -> PyResult<(f64, usize)> {
    let e = eval::err_avg(&p.inner, &coreset.inner, &loss.inner, &to_queries(test)?).map_err(to_py)?;
    Ok((e.value, e.filtered))
}

/// Relative full-data loss of the coreset-optimal model.
#[pyfunction]
fn err_opt(p: &PySet, coreset: &PyCoreset, loss: &PyLoss) -> PyResult<f64> {
    eval::err_opt(&p.inner, &coreset.inner, &loss.inner).map_err(to_py)
}

#[pymodule]
fn corelearn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySet>()?;
    m.add_class::<PyCoreset>()?;
    m.add_class::<PyLoss>()?;
    m.add_function(wrap_pyfunction!(hoeffding_k, m)?)?;
    m.add_function(wrap_pyfunction!(claim2_k, m)?)?;
    m.add_function(wrap_pyfunction!(relate_eps, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_m, m)?)?;
    m.add_function(wrap_pyfunction!(uniform_coreset, m)?)?;
    m.add_function(wrap_pyfunction!(leverage_coreset, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory_queries, m)?)?;
    m.add_function(wrap_pyfunction!(learn_coreset, m)?)?;
    m.add_function(wrap_pyfunction!(err_avg, m)?)?;
    m.add_function(wrap_pyfunction!(err_opt, m)?)?;
    Ok(())
}
