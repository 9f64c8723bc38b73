//! Python bindings: a thin layer over the survlda crate exposing the
//! corpus/model types and the train / infer / simulate / KM / mixture
//! entry points. Long-running calls release the GIL.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use survlda::corpus::{load_corpus, save_corpus, Corpus};
use survlda::docbuild::mixture::{fit_two_component_mixture, is_multimodal};
use survlda::error::Error;
use survlda::predict::infer_corpus;
use survlda::simgen::{generate_corpus, random_params, CensorDist};
use survlda::survival::BaselineHazard;
use survlda::trainer::{
    fit, load_model, save_model, topic_survival_curves, BackgroundSpec, FittedModel, TrainConfig,
};

/// Numerical breakdowns become RuntimeError; everything the caller can fix
/// (bad paths, malformed specs, shape mismatches) becomes ValueError.
fn to_py(e: Error) -> PyErr {
    match &e {
        Error::Numerical(_) | Error::OptimFailed { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// A tokenized corpus with optional survival outcomes per document.
#[pyclass(name = "Corpus", module = "survlda_py", skip_from_py_object)]
#[derive(Clone)]
struct PyCorpus {
    inner: Corpus,
}

#[pymethods]
impl PyCorpus {
    /// Reads the JSONL corpus format written by `save`.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyCorpus {
            inner: load_corpus(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_corpus(&self.inner, path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.n_documents()
    }

    /// All terms, indexed by token id.
    fn vocabulary(&self) -> Vec<String> {
        self.inner.vocabulary.terms().to_vec()
    }

    fn document_ids(&self) -> Vec<String> {
        self.inner.documents.iter().map(|d| d.id.clone()).collect()
    }

    /// (time, event) per document, None where no outcome is attached.
    fn outcomes(&self) -> Vec<Option<(f64, bool)>> {
        self.inner
            .documents
            .iter()
            .map(|d| d.outcome.map(|o| (o.time, o.event)))
            .collect()
    }

    fn total_tokens(&self) -> usize {
        self.inner.total_tokens()
    }

    /// True when every document carries an outcome.
    fn fully_observed(&self) -> bool {
        self.inner.fully_observed()
    }

    fn __repr__(&self) -> String {
        format!(
            "Corpus({} documents, {} terms)",
            self.inner.n_documents(),
            self.inner.vocabulary.len()
        )
    }
}

/// A fitted model: topic distributions, survival coefficients, and the
/// baseline hazard when trained in survival mode.
#[pyclass(name = "TrainedModel", module = "survlda_py", skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: FittedModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: load_model(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_model(&self.inner, path).map_err(to_py)
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.alpha.clone()
    }

    /// Topic-word probabilities, one row per topic.
    #[getter]
    fn tau(&self) -> Vec<Vec<f64>> {
        self.inner.tau.clone()
    }

    #[getter]
    fn beta(&self) -> Vec<f64> {
        self.inner.beta.clone()
    }

    /// Hazard spec string ("exponential:RATE", "weibull:SCALE,SHAPE",
    /// "breslow[N steps]") or None for a plain topic model.
    #[getter]
    fn hazard(&self) -> Option<String> {
        self.inner.hazard.as_ref().map(|h| match h {
            BaselineHazard::Exponential { lambda } => format!("exponential:{lambda}"),
            BaselineHazard::Weibull { lambda, rho } => format!("weibull:{lambda},{rho}"),
            BaselineHazard::Breslow { steps } => format!("breslow[{} steps]", steps.len()),
        })
    }

    #[getter]
    fn elbo_trace(&self) -> Vec<f64> {
        self.inner.elbo_trace.clone()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn n_topics(&self) -> usize {
        self.inner.n_topics()
    }

    #[getter]
    fn n_words(&self) -> usize {
        self.inner.n_words()
    }

    #[getter]
    fn vocabulary(&self) -> Vec<String> {
        self.inner.vocabulary.terms().to_vec()
    }

    fn final_elbo(&self) -> f64 {
        self.inner.final_elbo()
    }

    /// The n heaviest (word, probability) pairs per topic.
    #[pyo3(signature = (n = 10))]
    fn top_words(&self, n: usize) -> Vec<Vec<(String, f64)>> {
        self.inner.top_words(n)
    }

    fn __repr__(&self) -> String {
        format!(
            "TrainedModel(k={}, v={}, mode={}, converged={})",
            self.inner.n_topics(),
            self.inner.n_words(),
            self.inner.config.mode,
            self.inner.converged
        )
    }
}

/// Fits a model to `corpus`. `mode` is "lda" or "survlda"; `hazard_family`
/// is "exponential", "weibull", or "breslow". `background` maps words to
/// weights for a pinned background topic. Options left at None keep the
/// trainer defaults.
#[pyfunction]
#[pyo3(signature = (corpus, k, *, mode = "survlda", hazard_family = "exponential",
    alpha0 = None, background = None, reference_topic = None,
    em_tol = None, em_max_iters = None, seed = 0, restarts = None))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    corpus: &PyCorpus,
    k: usize,
    mode: &str,
    hazard_family: &str,
    alpha0: Option<f64>,
    background: Option<BTreeMap<String, f64>>,
    reference_topic: Option<usize>,
    em_tol: Option<f64>,
    em_max_iters: Option<usize>,
    seed: u64,
    restarts: Option<usize>,
) -> PyResult<PyModel> {
    let mut config = TrainConfig {
        k,
        mode: mode.parse().map_err(to_py)?,
        hazard_family: hazard_family.parse().map_err(to_py)?,
        background: background.map(BackgroundSpec::new),
        reference_topic,
        seed,
        ..TrainConfig::default()
    };
    if let Some(x) = alpha0 {
        config.alpha0 = x;
    }
    if let Some(x) = em_tol {
        config.em_tol = x;
    }
    if let Some(x) = em_max_iters {
        config.em_max_iters = x;
    }
    if let Some(x) = restarts {
        config.restarts = x;
    }
    let data = corpus.inner.clone();
    let model = py.detach(move || fit(&data, &config)).map_err(to_py)?;
    Ok(PyModel { inner: model })
}

/// Posterior summaries for every document in `corpus` under `model`; one
/// dict per document. `median_lifetime` is None for plain topic models and
/// inf when the predicted survival never reaches 1/2.
#[pyfunction]
fn infer(py: Python<'_>, corpus: &PyCorpus, model: &PyModel) -> PyResult<Vec<Py<PyDict>>> {
    let preds = infer_corpus(&corpus.inner, &model.inner).map_err(to_py)?;
    preds
        .into_iter()
        .map(|p| {
            let d = PyDict::new(py);
            d.set_item("id", p.id)?;
            d.set_item("theta_hat", p.theta_hat)?;
            d.set_item("gamma", p.gamma_new)?;
            d.set_item("z_bar", p.z_bar_new)?;
            d.set_item("linear_predictor", p.linear_predictor)?;
            d.set_item("median_lifetime", p.median_lifetime)?;
            d.set_item("n_oov_dropped", p.n_oov_dropped)?;
            d.set_item("empty_after_filtering", p.empty_after_filtering)?;
            Ok(d.unbind())
        })
        .collect()
}

/// Draws a synthetic corpus from random flat-Dirichlet topics. `hazard` is
/// "exponential:RATE" or "weibull:SCALE,SHAPE"; `censor` is "none",
/// "exponential:RATE", or "administrative:TIME". Returns (corpus, truth)
/// where truth holds the generating parameters and the latent draws.
#[pyfunction]
#[pyo3(signature = (k, v, d, n, *, beta = None, hazard = "exponential:1.0",
    censor = "none", alpha0 = 1.0, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    k: usize,
    v: usize,
    d: usize,
    n: usize,
    beta: Option<Vec<f64>>,
    hazard: &str,
    censor: &str,
    alpha0: f64,
    seed: u64,
) -> PyResult<(PyCorpus, Py<PyDict>)> {
    let beta = beta.unwrap_or_else(|| vec![0.0; k]);
    let hazard: BaselineHazard = hazard.parse().map_err(to_py)?;
    let censor: CensorDist = censor.parse().map_err(to_py)?;
    let params = random_params(k, v, alpha0, beta, hazard, seed).map_err(to_py)?;
    let (corpus, truth) = py
        .detach(move || generate_corpus(&params, d, n, censor, seed))
        .map_err(to_py)?;

    let tau: Vec<Vec<f64>> = truth
        .params
        .log_tau
        .iter()
        .map(|row| row.iter().map(|x| x.exp()).collect())
        .collect();
    let t = PyDict::new(py);
    t.set_item("alpha", truth.params.alpha)?;
    t.set_item("tau", tau)?;
    t.set_item("beta", truth.params.beta)?;
    t.set_item("theta", truth.theta_true)?;
    t.set_item("z_bar", truth.z_bar_true)?;
    t.set_item("censoring_rate_target", truth.censoring_rate_target)?;
    Ok((PyCorpus { inner: corpus }, t.unbind()))
}

/// Product-limit survival curve as [(time, survival), ...] starting at
/// (0, 1). Omitting `weights` gives the classical Kaplan-Meier estimate.
#[pyfunction]
#[pyo3(signature = (times, events, weights = None))]
fn weighted_km(
    times: Vec<f64>,
    events: Vec<bool>,
    weights: Option<Vec<f64>>,
) -> PyResult<Vec<(f64, f64)>> {
    let w = weights.unwrap_or_else(|| vec![1.0; times.len()]);
    let curve = survlda::survival::weighted_km(&times, &events, &w).map_err(to_py)?;
    Ok(curve.points.iter().map(|p| (p.time, p.survival)).collect())
}

/// One responsibility-weighted survival curve per topic of `model`,
/// estimated from the outcomes in `corpus`.
#[pyfunction]
fn topic_km(model: &PyModel, corpus: &PyCorpus) -> PyResult<Vec<Vec<(f64, f64)>>> {
    let curves = topic_survival_curves(&model.inner, &corpus.inner).map_err(to_py)?;
    Ok(curves
        .iter()
        .map(|c| c.points.iter().map(|p| (p.time, p.survival)).collect())
        .collect())
}

/// One- vs two-component Gaussian mixture diagnostics for a feature's
/// values: component parameters, both BICs, and whether the two-component
/// model is preferred.
#[pyfunction]
#[pyo3(signature = (values, seed = 0))]
fn fit_mixture(py: Python<'_>, values: Vec<f64>, seed: u64) -> PyResult<Py<PyDict>> {
    let f = fit_two_component_mixture(&values, seed).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("mu1", f.mu1)?;
    d.set_item("mu2", f.mu2)?;
    d.set_item("sigma1", f.sigma1)?;
    d.set_item("sigma2", f.sigma2)?;
    d.set_item("pi_minor", f.pi_minor)?;
    d.set_item("loglik_1comp", f.loglik_1comp)?;
    d.set_item("loglik_2comp", f.loglik_2comp)?;
    d.set_item("bic_1comp", f.bic_1comp)?;
    d.set_item("bic_2comp", f.bic_2comp)?;
    d.set_item("n", f.n)?;
    d.set_item("multimodal", is_multimodal(&f))?;
    Ok(d.unbind())
}

#[pymodule]
fn survlda_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(infer, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_km, m)?)?;
    m.add_function(wrap_pyfunction!(topic_km, m)?)?;
    m.add_function(wrap_pyfunction!(fit_mixture, m)?)?;
    Ok(())
}
