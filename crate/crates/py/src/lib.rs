//! Python bindings: schedules, targets, samplers, score training, bounds,
//! metrics, and preprocessing.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use pyo3::IntoPyObjectExt;

use sgmsched_core::diffusion::{self, Scheme, ScoreSource, Stage, TimeGrid};
use sgmsched_core::scorenet::{self, LossKind, TrainConfig};
use sgmsched_core::targets::{self, BoundConstants, GaussianTarget};
use sgmsched_core::{bounds, metrics, preprocess, Error};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Config(_) | Error::Format(_) | Error::Unsupported(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn rows_to_matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("need at least one row"));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("ragged rows"));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(DMatrix::from_row_slice(flat.len() / d, d, &flat))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn batch_from_rows(rows: Vec<Vec<f64>>) -> PyResult<diffusion::SampleBatch> {
    Ok(diffusion::SampleBatch::new(rows_to_matrix(rows)?, 0, Stage::Data))
}

fn parse_scheme(name: &str) -> PyResult<Scheme> {
    match name {
        "em" => Ok(Scheme::Em),
        "ei" => Ok(Scheme::Ei),
        other => Err(PyValueError::new_err(format!("scheme must be em or ei, got {other}"))),
    }
}

/// Noise schedule with closed-form β, ∫β, and the forward scalars.
#[pyclass(frozen, skip_from_py_object, name = "Schedule")]
#[derive(Clone)]
struct PySchedule {
    inner: sgmsched_core::Schedule,
}

#[pymethods]
impl PySchedule {
    #[staticmethod]
    fn linear(beta0: f64, beta1: f64, horizon: f64, sigma2: f64) -> PyResult<Self> {
        Ok(PySchedule {
            inner: sgmsched_core::Schedule::linear(beta0, beta1, horizon, sigma2)
                .map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn parametric(a: f64, beta0: f64, beta1: f64, horizon: f64, sigma2: f64) -> PyResult<Self> {
        Ok(PySchedule {
            inner: sgmsched_core::Schedule::parametric(a, beta0, beta1, horizon, sigma2)
                .map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn cosine(s: f64, horizon: f64, sigma2: f64) -> PyResult<Self> {
        Ok(PySchedule {
            inner: sgmsched_core::Schedule::cosine(s, horizon, sigma2).map_err(to_py_err)?,
        })
    }

    /// The paper-standard parametric family: β(0)=0.1, β(T)=20, T=1, σ²=1.
    #[staticmethod]
    fn standard_parametric(a: f64) -> Self {
        PySchedule { inner: sgmsched_core::Schedule::standard_parametric(a) }
    }

    #[staticmethod]
    fn standard_cosine() -> Self {
        PySchedule { inner: sgmsched_core::Schedule::standard_cosine() }
    }

    fn beta(&self, t: f64) -> PyResult<f64> {
        self.inner.beta(t).map_err(to_py_err)
    }

    fn beta_unclipped(&self, t: f64) -> PyResult<f64> {
        self.inner.beta_unclipped(t).map_err(to_py_err)
    }

    fn beta_integral(&self, t0: f64, t1: f64) -> PyResult<f64> {
        self.inner.beta_integral(t0, t1).map_err(to_py_err)
    }

    fn m_sigma(&self, t: f64) -> PyResult<(f64, f64)> {
        self.inner.m_sigma(t).map_err(to_py_err)
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon
    }

    #[getter]
    fn sigma2(&self) -> f64 {
        self.inner.sigma2
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Target data distribution.
#[pyclass(frozen, skip_from_py_object, name = "Target")]
#[derive(Clone)]
struct PyTarget {
    inner: targets::Target,
}

#[pymethods]
impl PyTarget {
    #[staticmethod]
    fn iso(dim: usize) -> PyResult<Self> {
        Ok(PyTarget { inner: targets::Target::iso(dim).map_err(to_py_err)? })
    }

    #[staticmethod]
    fn heterosc(dim: usize) -> PyResult<Self> {
        Ok(PyTarget { inner: targets::Target::heterosc(dim).map_err(to_py_err)? })
    }

    #[staticmethod]
    fn corr(dim: usize) -> PyResult<Self> {
        Ok(PyTarget { inner: targets::Target::corr(dim).map_err(to_py_err)? })
    }

    #[staticmethod]
    fn funnel(dim: usize) -> PyResult<Self> {
        Ok(PyTarget { inner: targets::Target::funnel(dim).map_err(to_py_err)? })
    }

    #[staticmethod]
    fn gmm25(dim: usize) -> PyResult<Self> {
        Ok(PyTarget { inner: targets::Target::gmm25(dim).map_err(to_py_err)? })
    }

    #[staticmethod]
    fn gaussian(mu: Vec<f64>, sigma: Vec<Vec<f64>>) -> PyResult<Self> {
        let g = GaussianTarget::new(DVector::from_vec(mu), rows_to_matrix(sigma)?)
            .map_err(to_py_err)?;
        Ok(PyTarget { inner: targets::Target::Gaussian(g) })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let batch = self.inner.sample(n, seed).map_err(to_py_err)?;
        Ok(matrix_to_rows(batch.data()))
    }

    fn log_density(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.log_density(&DVector::from_vec(x)).map_err(to_py_err)
    }

    /// Exact marginal score of the forward process (Gaussian targets only).
    fn score(&self, sched: &PySchedule, t: f64, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let g = self.inner.as_gaussian().map_err(to_py_err)?;
        let s = g.score(&sched.inner, t, &DVector::from_vec(x)).map_err(to_py_err)?;
        Ok(s.iter().copied().collect())
    }

    /// `(C_t, L_t)` from the Gaussian contraction lemma.
    fn contraction_constants(&self, sched: &PySchedule, t: f64) -> PyResult<(f64, f64)> {
        let g = self.inner.as_gaussian().map_err(to_py_err)?;
        g.contraction_constants(&sched.inner, t).map_err(to_py_err)
    }

    fn fisher_to_stationary(&self, sigma2: f64) -> PyResult<f64> {
        let g = self.inner.as_gaussian().map_err(to_py_err)?;
        Ok(g.fisher_to_stationary(sigma2))
    }
}

/// Trained score network `s_θ(t, x)`.
#[pyclass(frozen, skip_from_py_object, name = "ScoreNet")]
#[derive(Clone)]
struct PyScoreNet {
    params: scorenet::ScoreNetParams,
}

#[pymethods]
impl PyScoreNet {
    fn forward(&self, t: f64, x: Vec<f64>) -> Vec<f64> {
        self.params.forward(t, &DVector::from_vec(x)).iter().copied().collect()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.params.dim()
    }

    #[getter]
    fn width(&self) -> usize {
        self.params.width()
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        sgmsched_core::io::write_params(&path, &self.params).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(PyScoreNet { params: sgmsched_core::io::read_params(&path).map_err(to_py_err)? })
    }
}

/// Trains the score network; returns the net and the per-epoch losses.
#[pyfunction]
#[pyo3(signature = (target, sched, loss, epochs, lr, n_train, seed, batch_size=64, width=256))]
#[allow(clippy::too_many_arguments)]
fn train(
    target: &PyTarget,
    sched: &PySchedule,
    loss: &str,
    epochs: usize,
    lr: f64,
    n_train: usize,
    seed: u64,
    batch_size: usize,
    width: usize,
) -> PyResult<(PyScoreNet, Vec<f64>)> {
    let loss = match loss {
        "explicit" => LossKind::Explicit,
        "conditional" => LossKind::Conditional,
        other => return Err(PyValueError::new_err(format!("unknown loss {other}"))),
    };
    let cfg = TrainConfig { loss, epochs, batch_size, learning_rate: lr, width, seed };
    let result = scorenet::train(&target.inner, &sched.inner, &cfg, n_train, seed ^ 0x5eed)
        .map_err(to_py_err)?;
    Ok((PyScoreNet { params: result.params }, result.epoch_losses))
}

fn build_score(
    score: &str,
    net: Option<&PyScoreNet>,
    target: &PyTarget,
    sched: &PySchedule,
) -> PyResult<ScoreSource> {
    match score {
        "exact" => Ok(ScoreSource::AnalyticGaussian {
            target: target.inner.as_gaussian().map_err(to_py_err)?.clone(),
            sched: sched.inner,
        }),
        "zero" => Ok(ScoreSource::ZeroModified {
            dim: target.inner.dim(),
            sigma2: sched.inner.sigma2,
        }),
        "net" => {
            let net = net.ok_or_else(|| PyValueError::new_err("score='net' needs net=..."))?;
            Ok(ScoreSource::Learned { params: net.params.clone(), sigma2: sched.inner.sigma2 })
        }
        other => Err(PyValueError::new_err(format!(
            "score must be exact, zero, or net; got {other}"
        ))),
    }
}

/// Exact forward-marginal samples at time `t`.
#[pyfunction]
fn forward_exact(
    target: &PyTarget,
    sched: &PySchedule,
    t: f64,
    n: usize,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let batch =
        diffusion::forward_exact(&target.inner, &sched.inner, t, n, seed).map_err(to_py_err)?;
    Ok(matrix_to_rows(batch.data()))
}

/// Backward-sampler draws with the chosen scheme and score source.
#[pyfunction]
#[pyo3(signature = (target, sched, steps, n, seed, scheme="em", score="exact", net=None))]
#[allow(clippy::too_many_arguments)]
fn generate(
    target: &PyTarget,
    sched: &PySchedule,
    steps: usize,
    n: usize,
    seed: u64,
    scheme: &str,
    score: &str,
    net: Option<&PyScoreNet>,
) -> PyResult<Vec<Vec<f64>>> {
    let grid = TimeGrid::new(steps, sched.inner.horizon).map_err(to_py_err)?;
    let source = build_score(score, net, target, sched)?;
    let batch = diffusion::generate(parse_scheme(scheme)?, &source, &sched.inner, &grid, n, seed)
        .map_err(to_py_err)?;
    Ok(matrix_to_rows(batch.data()))
}

/// Closed-form `(KL(p‖q), W2(p, q))` between Gaussian targets.
#[pyfunction]
fn closed_form_divergences(p: &PyTarget, q: &PyTarget) -> PyResult<(f64, f64)> {
    let gp = p.inner.as_gaussian().map_err(to_py_err)?;
    let gq = q.inner.as_gaussian().map_err(to_py_err)?;
    targets::closed_form_divergences(gp, gq).map_err(to_py_err)
}

/// Fits a Gaussian target to samples (mean + unbiased covariance).
#[pyfunction]
fn fit_gaussian(samples: Vec<Vec<f64>>) -> PyResult<PyTarget> {
    let fitted = metrics::fit_gaussian(&batch_from_rows(samples)?).map_err(to_py_err)?;
    Ok(PyTarget { inner: targets::Target::Gaussian(fitted) })
}

#[pyfunction]
#[pyo3(signature = (a, b, n_proj=2000, seed=0))]
fn sliced_w2(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, n_proj: usize, seed: u64) -> PyResult<f64> {
    metrics::sliced_w2(&batch_from_rows(a)?, &batch_from_rows(b)?, n_proj, seed).map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (p, q, k=None))]
fn knn_kl(p: Vec<Vec<f64>>, q: Vec<Vec<f64>>, k: Option<usize>) -> PyResult<f64> {
    let bp = batch_from_rows(p)?;
    let bq = batch_from_rows(q)?;
    let k = k.unwrap_or_else(|| metrics::knn_default_k(bp.dim()));
    metrics::knn_kl(&bp, &bq, k).map_err(to_py_err)
}

#[pyfunction]
fn nll(target: &PyTarget, samples: Vec<Vec<f64>>) -> PyResult<f64> {
    metrics::nll(&target.inner, &batch_from_rows(samples)?).map_err(to_py_err)
}

fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    Ok(match value {
        serde_json::Value::Null => py.None(),
        serde_json::Value::Bool(b) => b.into_py_any(py)?,
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_py_any(py)?
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_py_any(py)?
            }
        }
        serde_json::Value::String(s) => s.into_py_any(py)?,
        serde_json::Value::Array(items) => {
            let list = pyo3::types::PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_py_any(py)?
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_py_any(py)?
        }
    })
}

fn report_to_dict<T: serde::Serialize>(py: Python<'_>, report: &T) -> PyResult<Py<PyAny>> {
    let value = serde_json::to_value(report)
        .map_err(|e| PyRuntimeError::new_err(format!("report serialization: {e}")))?;
    json_to_py(py, &value)
}

/// Theorem-1 KL upper bound as a dict of terms.
#[pyfunction]
#[pyo3(signature = (target, sched, steps, score="exact", net=None, n_mc=500, seed=0, refined=false))]
#[allow(clippy::too_many_arguments)]
fn kl_bound(
    py: Python<'_>,
    target: &PyTarget,
    sched: &PySchedule,
    steps: usize,
    score: &str,
    net: Option<&PyScoreNet>,
    n_mc: usize,
    seed: u64,
    refined: bool,
) -> PyResult<Py<PyAny>> {
    let g = target.inner.as_gaussian().map_err(to_py_err)?;
    let grid = TimeGrid::new(steps, sched.inner.horizon).map_err(to_py_err)?;
    let source = build_score(score, net, target, sched)?;
    let report = bounds::kl_bound(g, &sched.inner, &grid, &source, n_mc, seed, refined)
        .map_err(to_py_err)?;
    report_to_dict(py, &report)
}

/// Theorem-2 W2 upper bound as a dict of terms.
#[pyfunction]
#[pyo3(signature = (target, sched, steps, eps=0.0))]
fn w2_bound(
    py: Python<'_>,
    target: &PyTarget,
    sched: &PySchedule,
    steps: usize,
    eps: f64,
) -> PyResult<Py<PyAny>> {
    let g = target.inner.as_gaussian().map_err(to_py_err)?;
    let grid = TimeGrid::new(steps, sched.inner.horizon).map_err(to_py_err)?;
    let constants = BoundConstants::from_gaussian(g, &sched.inner, &grid).map_err(to_py_err)?;
    let report =
        bounds::w2_bound(g, &sched.inner, &grid, &constants, Some(eps)).map_err(to_py_err)?;
    report_to_dict(py, &report)
}

/// Standardize-and-rescale transform.
#[pyclass(frozen, skip_from_py_object, name = "PreprocessTransform")]
#[derive(Clone)]
struct PyTransform {
    inner: preprocess::PreprocessTransform,
}

#[pymethods]
impl PyTransform {
    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.inner.mu.clone()
    }

    #[getter]
    fn d_scale(&self) -> Vec<f64> {
        self.inner.d_scale.clone()
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }

    fn apply(&self, samples: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let out = self.inner.apply(&batch_from_rows(samples)?).map_err(to_py_err)?;
        Ok(matrix_to_rows(out.data()))
    }

    fn inverse(&self, samples: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let out = self.inner.inverse(&batch_from_rows(samples)?).map_err(to_py_err)?;
        Ok(matrix_to_rows(out.data()))
    }

    fn transfer_bound(&self, w2_scaled: f64) -> PyResult<f64> {
        self.inner.transfer_bound(w2_scaled).map_err(to_py_err)
    }
}

/// Fits the rescaling transform; returns `(transform, scaled_samples)`.
#[pyfunction]
fn fit_transform(samples: Vec<Vec<f64>>) -> PyResult<(PyTransform, Vec<Vec<f64>>)> {
    let (tr, scaled) = preprocess::fit_transform(&batch_from_rows(samples)?).map_err(to_py_err)?;
    Ok((PyTransform { inner: tr }, matrix_to_rows(scaled.data())))
}

/// Sweeps the exact-score bound over the parametric family; returns one dict
/// per `a` with the term decomposition.
#[pyfunction]
#[pyo3(signature = (metric, target, steps, a_values, seed=0))]
fn sweep_bound(
    py: Python<'_>,
    metric: &str,
    target: &PyTarget,
    steps: usize,
    a_values: Vec<f64>,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let g = target.inner.as_gaussian().map_err(to_py_err)?;
    let grid = TimeGrid::new(steps, 1.0).map_err(to_py_err)?;
    let list = pyo3::types::PyList::empty(py);
    for &a in &a_values {
        let sched = sgmsched_core::Schedule::standard_parametric(a);
        let entry = PyDict::new(py);
        entry.set_item("a", a)?;
        match metric {
            "kl" => {
                let score = ScoreSource::AnalyticGaussian { target: g.clone(), sched };
                let report = bounds::kl_bound(g, &sched, &grid, &score, 2, seed, false)
                    .map_err(to_py_err)?;
                entry.set_item("total", report.total)?;
                entry.set_item("report", report_to_dict(py, &report)?)?;
            }
            "w2" => {
                let constants =
                    BoundConstants::from_gaussian(g, &sched, &grid).map_err(to_py_err)?;
                let report = bounds::w2_bound(g, &sched, &grid, &constants, Some(0.0))
                    .map_err(to_py_err)?;
                entry.set_item("total", report.total)?;
                entry.set_item("report", report_to_dict(py, &report)?)?;
            }
            other => return Err(PyValueError::new_err(format!("metric must be kl or w2, got {other}"))),
        }
        list.append(entry)?;
    }
    Ok(list.into_py_any(py)?)
}

#[pymodule]
fn sgmsched(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchedule>()?;
    m.add_class::<PyTarget>()?;
    m.add_class::<PyScoreNet>()?;
    m.add_class::<PyTransform>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(forward_exact, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_divergences, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(sliced_w2, m)?)?;
    m.add_function(wrap_pyfunction!(knn_kl, m)?)?;
    m.add_function(wrap_pyfunction!(nll, m)?)?;
    m.add_function(wrap_pyfunction!(kl_bound, m)?)?;
    m.add_function(wrap_pyfunction!(w2_bound, m)?)?;
    m.add_function(wrap_pyfunction!(fit_transform, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_bound, m)?)?;
    Ok(())
}
