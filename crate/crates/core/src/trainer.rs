//! Corpus-level variational EM: E-step dispatch over documents, the topic
//! M-step, the survival M-step, background-topic constraints, restarts,
//! and model (de)serialization.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Vocabulary};
use crate::error::{Error, Result};
use crate::survival::{
    breslow_update, optimize_breslow, optimize_parametric, weighted_km, BaselineHazard,
    HazardFamily, KMCurve, ParametricOptions, SurvivalDesign,
};
use crate::vem::{compute_elbo, e_step_warm, Mode, ModelParams, VariationalState};

fn default_alpha0() -> f64 {
    1.0
}
fn default_em_tol() -> f64 {
    1e-5
}
fn default_em_max_iters() -> usize {
    100
}
fn default_estep_tol() -> f64 {
    1e-6
}
fn default_estep_max_iters() -> usize {
    200
}
fn default_tau_smoothing() -> f64 {
    1e-8
}
fn default_restarts() -> usize {
    3
}
fn default_hazard_family() -> HazardFamily {
    HazardFamily::Exponential
}

/// Training configuration. α is the symmetric vector (α₀/K, …, α₀/K).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k: usize,
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
    pub mode: Mode,
    #[serde(default = "default_hazard_family")]
    pub hazard_family: HazardFamily,
    #[serde(default)]
    pub background: Option<BackgroundSpec>,
    /// Alternative to a background topic: pin this topic's β to 0.
    #[serde(default)]
    pub reference_topic: Option<usize>,
    #[serde(default = "default_em_tol")]
    pub em_tol: f64,
    #[serde(default = "default_em_max_iters")]
    pub em_max_iters: usize,
    #[serde(default = "default_estep_tol")]
    pub estep_tol: f64,
    #[serde(default = "default_estep_max_iters")]
    pub estep_max_iters: usize,
    #[serde(default = "default_tau_smoothing")]
    pub tau_smoothing: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 2,
            alpha0: default_alpha0(),
            mode: Mode::Lda,
            hazard_family: default_hazard_family(),
            background: None,
            reference_topic: None,
            em_tol: default_em_tol(),
            em_max_iters: default_em_max_iters(),
            estep_tol: default_estep_tol(),
            estep_max_iters: default_estep_max_iters(),
            tau_smoothing: default_tau_smoothing(),
            seed: 0,
            restarts: default_restarts(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if !(self.alpha0 > 0.0) {
            return Err(Error::config("alpha0 must be positive"));
        }
        if self.background.is_some() && self.k < 2 {
            return Err(Error::config("a background topic needs k >= 2"));
        }
        if let Some(r) = self.reference_topic {
            if r >= self.k {
                return Err(Error::config("reference_topic out of range"));
            }
        }
        if self.mode == Mode::Survlda
            && self.k >= 2
            && self.background.is_none()
            && self.reference_topic.is_none()
        {
            return Err(Error::config(
                "supervised training with k >= 2 needs a background topic or a \
                 reference topic to anchor beta",
            ));
        }
        if !(self.tau_smoothing > 0.0) {
            return Err(Error::config("tau_smoothing must be positive"));
        }
        if self.restarts == 0 {
            return Err(Error::config("restarts must be at least 1"));
        }
        Ok(())
    }

    /// The symmetric Dirichlet prior (α₀/K, …, α₀/K).
    pub fn alpha(&self) -> Vec<f64> {
        vec![self.alpha0 / self.k as f64; self.k]
    }

    /// β coordinates pinned to 0 during the survival M-step.
    fn pinned(&self) -> Vec<usize> {
        if self.background.is_some() {
            vec![self.k - 1]
        } else if let Some(r) = self.reference_topic {
            vec![r]
        } else {
            Vec::new()
        }
    }
}

/// Fixed word distribution for the background topic: listed words get
/// their weights, every other word gets `epsilon`, and the row is
/// normalized once at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    pub word_weights: BTreeMap<String, f64>,
    #[serde(default = "default_background_epsilon")]
    pub epsilon: f64,
}

fn default_background_epsilon() -> f64 {
    0.001
}

impl BackgroundSpec {
    pub fn new(word_weights: BTreeMap<String, f64>) -> Self {
        BackgroundSpec {
            word_weights,
            epsilon: default_background_epsilon(),
        }
    }

    /// The normalized τ row over `vocabulary`.
    pub fn tau_row(&self, vocabulary: &Vocabulary) -> Result<Vec<f64>> {
        if !(self.epsilon > 0.0) {
            return Err(Error::config("background epsilon must be positive"));
        }
        if !self.word_weights.values().any(|&w| w > 0.0) {
            return Err(Error::config(
                "background needs at least one positive weight",
            ));
        }
        for (w, &x) in &self.word_weights {
            if x < 0.0 {
                return Err(Error::Config(format!(
                    "negative background weight for {w:?}"
                )));
            }
            if vocabulary.index_of(w).is_none() {
                return Err(Error::Config(format!(
                    "background word {w:?} is not in the vocabulary"
                )));
            }
        }
        let mut row: Vec<f64> = vocabulary
            .terms()
            .iter()
            .map(|t| self.word_weights.get(t).copied().unwrap_or(self.epsilon))
            .collect();
        let total: f64 = row.iter().sum();
        for x in row.iter_mut() {
            *x /= total;
        }
        Ok(row)
    }
}

/// Per-document posterior summaries of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentFit {
    pub id: String,
    pub gamma: Vec<f64>,
    pub phi_bar: Vec<f64>,
    pub theta_hat: Vec<f64>,
}

/// A trained model: topic parameters (τ kept as probabilities, so a fixed
/// background row is preserved bit-for-bit), survival parameters, the
/// vocabulary, per-document summaries, and the training trace.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub alpha: Vec<f64>,
    pub tau: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub hazard: Option<BaselineHazard>,
    pub vocabulary: Vocabulary,
    pub per_document: Vec<DocumentFit>,
    pub elbo_trace: Vec<f64>,
    pub config: TrainConfig,
    pub converged: bool,
}

impl FittedModel {
    pub fn n_topics(&self) -> usize {
        self.alpha.len()
    }

    pub fn n_words(&self) -> usize {
        self.tau.first().map_or(0, Vec::len)
    }

    pub fn final_elbo(&self) -> f64 {
        self.elbo_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// Inference-ready parameter view (log τ derived from τ).
    pub fn params(&self) -> ModelParams {
        ModelParams {
            alpha: self.alpha.clone(),
            log_tau: self
                .tau
                .iter()
                .map(|row| row.iter().map(|&p| p.ln()).collect())
                .collect(),
            beta: self.beta.clone(),
            hazard: self.hazard.clone(),
        }
    }

    /// Per-topic words ranked by probability, `n` per topic.
    pub fn top_words(&self, n: usize) -> Vec<Vec<(String, f64)>> {
        self.tau
            .iter()
            .map(|row| {
                let mut ranked: Vec<(String, f64)> = row
                    .iter()
                    .enumerate()
                    .map(|(v, &p)| (self.vocabulary.term(v).to_owned(), p))
                    .collect();
                ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
                ranked.truncate(n);
                ranked
            })
            .collect()
    }
}

/// τ̂_kv ∝ ε + Σ_i Σ_j 1[W_ij = v]·φ_ijk, each row normalized. When a
/// background row is given it is copied into the last topic unchanged.
pub fn mstep_tau(
    states: &[VariationalState],
    corpus: &Corpus,
    k: usize,
    smoothing: f64,
    background_row: Option<&[f64]>,
) -> Vec<Vec<f64>> {
    let v = corpus.vocabulary.len();
    let mut tau = vec![vec![smoothing; v]; k];
    for (doc, state) in corpus.documents.iter().zip(states) {
        for (j, &w) in doc.tokens.iter().enumerate() {
            for (kk, row) in tau.iter_mut().enumerate() {
                row[w] += state.phi[j][kk];
            }
        }
    }
    for row in tau.iter_mut() {
        let total: f64 = row.iter().sum();
        for x in row.iter_mut() {
            *x /= total;
        }
    }
    if let Some(bg) = background_row {
        tau[k - 1] = bg.to_vec();
    }
    tau
}

fn make_params(
    alpha: &[f64],
    tau: &[Vec<f64>],
    beta: &[f64],
    hazard: Option<&BaselineHazard>,
) -> ModelParams {
    ModelParams {
        alpha: alpha.to_vec(),
        log_tau: tau
            .iter()
            .map(|row| row.iter().map(|&p| p.ln()).collect())
            .collect(),
        beta: beta.to_vec(),
        hazard: hazard.cloned(),
    }
}

/// Smoothed empirical word distribution blended with 5% topic-specific
/// flat-Dirichlet noise; deterministic given the RNG stream.
fn init_tau(corpus: &Corpus, k: usize, smoothing: f64, rng: &mut ChaCha12Rng) -> Vec<Vec<f64>> {
    let v = corpus.vocabulary.len();
    let mut counts = vec![smoothing; v];
    for doc in &corpus.documents {
        for &w in &doc.tokens {
            counts[w] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    let empirical: Vec<f64> = counts.iter().map(|c| c / total).collect();

    (0..k)
        .map(|_| {
            // Dirichlet(1,…,1) via normalized Exp(1) draws.
            let draws: Vec<f64> = (0..v).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let dt: f64 = draws.iter().sum();
            let row: Vec<f64> = empirical
                .iter()
                .zip(&draws)
                .map(|(&e, &g)| 0.95 * e + 0.05 * g / dt)
                .collect();
            let rt: f64 = row.iter().sum();
            row.into_iter().map(|x| x / rt).collect()
        })
        .collect()
}

/// (times, events) over the non-empty documents, which are the ones the
/// survival design can include.
fn survival_times(corpus: &Corpus) -> (Vec<f64>, Vec<bool>) {
    let mut times = Vec::new();
    let mut events = Vec::new();
    for d in &corpus.documents {
        if let (false, Some(o)) = (d.is_empty(), &d.outcome) {
            times.push(o.time);
            events.push(o.event);
        }
    }
    (times, events)
}

/// Baseline fit at β = 0 (used to initialize the EM): occurrence/exposure
/// for the exponential, a short 2-parameter fit for the Weibull, and the
/// β = 0 Breslow estimate.
fn marginal_hazard(times: &[f64], events: &[bool], family: HazardFamily) -> Result<BaselineHazard> {
    let n_events = events.iter().filter(|&&e| e).count();
    if n_events == 0 {
        return Err(Error::DegenerateData(
            "no observed events; cannot fit a baseline hazard".into(),
        ));
    }
    let exposure: f64 = times.iter().sum();
    let lambda0 = n_events as f64 / exposure;
    // A one-topic design with unit responsibilities makes the survival
    // objective the plain (unsupervised) hazard likelihood.
    let design = SurvivalDesign {
        phi_bars: vec![vec![1.0]; times.len()],
        phis: vec![vec![vec![1.0]]; times.len()],
        times: times.to_vec(),
        events: events.to_vec(),
    };
    match family {
        HazardFamily::Exponential => Ok(BaselineHazard::Exponential { lambda: lambda0 }),
        HazardFamily::Weibull => {
            let opts = ParametricOptions {
                pinned: vec![0],
                ..Default::default()
            };
            let (_, hz) = optimize_parametric(
                &design,
                HazardFamily::Weibull,
                &[0.0],
                &BaselineHazard::Exponential { lambda: lambda0 },
                &opts,
            )?;
            Ok(hz)
        }
        HazardFamily::Breslow => breslow_update(&[0.0], &design),
    }
}

fn corpus_elbo(
    corpus: &Corpus,
    states: &[VariationalState],
    params: &ModelParams,
    mode: Mode,
) -> Result<f64> {
    let mut total = 0.0;
    for (doc, state) in corpus.documents.iter().zip(states) {
        total += compute_elbo(state, params, doc, mode)?;
    }
    Ok(total)
}

/// Variational EM with restarts; returns the restart with the highest
/// final corpus ELBO. The per-iteration corpus ELBO is logged to the
/// `log` facade at info level.
pub fn fit(corpus: &Corpus, config: &TrainConfig) -> Result<FittedModel> {
    config.validate()?;
    corpus.validate()?;
    if corpus.vocabulary.is_empty() || corpus.documents.is_empty() {
        return Err(Error::validation("cannot train on an empty corpus"));
    }
    if config.mode == Mode::Survlda {
        if let Some(d) = corpus.documents.iter().find(|d| d.outcome.is_none()) {
            return Err(Error::Validation(format!(
                "supervised mode requires outcomes; document {:?} has none",
                d.id
            )));
        }
    }
    for d in &corpus.documents {
        if d.is_empty() {
            log::warn!("document {:?} has no words", d.id);
        }
    }
    let background_row = config
        .background
        .as_ref()
        .map(|b| b.tau_row(&corpus.vocabulary))
        .transpose()?;

    let mut best: Option<FittedModel> = None;
    for restart in 0..config.restarts {
        let model = fit_once(corpus, config, background_row.as_deref(), restart as u64)?;
        if best
            .as_ref()
            .is_none_or(|b| model.final_elbo() > b.final_elbo())
        {
            best = Some(model);
        }
    }
    Ok(best.unwrap())
}

fn fit_once(
    corpus: &Corpus,
    config: &TrainConfig,
    background_row: Option<&[f64]>,
    stream: u64,
) -> Result<FittedModel> {
    let k = config.k;
    let alpha = config.alpha();
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);

    let mut tau = init_tau(corpus, k, config.tau_smoothing, &mut rng);
    if let Some(bg) = background_row {
        tau[k - 1] = bg.to_vec();
    }
    let mut beta = vec![0.0; k];
    let (times, events) = survival_times(corpus);
    let mut hazard = match config.mode {
        Mode::Lda => None,
        Mode::Survlda => Some(marginal_hazard(&times, &events, config.hazard_family)?),
    };
    let pinned = config.pinned();

    let mut params = make_params(&alpha, &tau, &beta, hazard.as_ref());
    params.validate()?;
    let mut states: Vec<VariationalState> = Vec::new();
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;

    for iter in 1..=config.em_max_iters {
        let warm = std::mem::take(&mut states);
        states = corpus
            .documents
            .par_iter()
            .enumerate()
            .map(|(i, doc)| {
                e_step_warm(
                    doc,
                    &params,
                    config.mode,
                    config.estep_tol,
                    config.estep_max_iters,
                    warm.get(i),
                )
            })
            .collect::<Result<_>>()?;

        let elbo = corpus_elbo(corpus, &states, &params, config.mode)?;
        log::info!("em iteration {iter}: elbo {elbo:.6}");
        let done = trace
            .last()
            .is_some_and(|prev| (elbo - prev).abs() <= config.em_tol * prev.abs().max(1e-12));
        trace.push(elbo);
        if done {
            converged = true;
            break;
        }

        // M-step: topics, then survival parameters.
        tau = mstep_tau(&states, corpus, k, config.tau_smoothing, background_row);
        if config.mode == Mode::Survlda {
            let design = design_from_states(corpus, &states);
            let opts = ParametricOptions {
                pinned: pinned.clone(),
                fix_shape: None,
                bfgs: Default::default(),
            };
            let (b, hz) = match config.hazard_family {
                HazardFamily::Breslow => optimize_breslow(&design, &beta, &opts)?,
                family => {
                    optimize_parametric(&design, family, &beta, hazard.as_ref().unwrap(), &opts)?
                }
            };
            beta = b;
            hazard = Some(hz);
        }
        params = make_params(&alpha, &tau, &beta, hazard.as_ref());
    }

    let per_document = corpus
        .documents
        .iter()
        .zip(&states)
        .map(|(doc, s)| DocumentFit {
            id: doc.id.clone(),
            gamma: s.gamma.clone(),
            phi_bar: s.phi_bar.clone(),
            theta_hat: s.theta_hat(),
        })
        .collect();

    Ok(FittedModel {
        alpha,
        tau,
        beta,
        hazard,
        vocabulary: corpus.vocabulary.clone(),
        per_document,
        elbo_trace: trace,
        config: config.clone(),
        converged,
    })
}

/// Collects φ̄, φ, T, δ for all non-empty documents.
fn design_from_states(corpus: &Corpus, states: &[VariationalState]) -> SurvivalDesign {
    let mut design = SurvivalDesign {
        phi_bars: Vec::new(),
        phis: Vec::new(),
        times: Vec::new(),
        events: Vec::new(),
    };
    for (doc, state) in corpus.documents.iter().zip(states) {
        let Some(o) = &doc.outcome else { continue };
        if doc.is_empty() {
            continue;
        }
        design.phi_bars.push(state.phi_bar.clone());
        design.phis.push(state.phi.clone());
        design.times.push(o.time);
        design.events.push(o.event);
    }
    design
}

/// One weighted Kaplan-Meier curve per topic, with patient weights θ̂_ik.
/// A topic with zero total weight yields an empty curve (no points).
pub fn topic_survival_curves(model: &FittedModel, corpus: &Corpus) -> Result<Vec<KMCurve>> {
    if model.per_document.len() != corpus.n_documents() {
        return Err(Error::validation(
            "model and corpus have different document counts",
        ));
    }
    let mut times = Vec::with_capacity(corpus.n_documents());
    let mut events = Vec::with_capacity(corpus.n_documents());
    for (doc, fitdoc) in corpus.documents.iter().zip(&model.per_document) {
        if doc.id != fitdoc.id {
            return Err(Error::validation("model and corpus document ids disagree"));
        }
        let o = doc
            .outcome
            .as_ref()
            .ok_or_else(|| Error::Validation(format!("document {:?} has no outcome", doc.id)))?;
        times.push(o.time);
        events.push(o.event);
    }
    (0..model.n_topics())
        .map(|kk| {
            let weights: Vec<f64> = model.per_document.iter().map(|d| d.theta_hat[kk]).collect();
            match weighted_km(&times, &events, &weights) {
                Ok(curve) => Ok(curve),
                Err(Error::DegenerateData(_)) => Ok(KMCurve {
                    points: Vec::new(),
                    weights_used: 0.0,
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Reference serialization of [`topic_survival_curves`]: three tab-separated
/// columns (topic, time, survival), one row per curve point.
pub fn topic_curves_tsv(curves: &[KMCurve]) -> String {
    let mut out = String::from("topic\ttime\tsurvival\n");
    for (kk, curve) in curves.iter().enumerate() {
        for p in &curve.points {
            out.push_str(&format!("{kk}\t{}\t{}\n", p.time, p.survival));
        }
    }
    out
}

const MODEL_FORMAT: &str = "survlda-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    config: TrainConfig,
    alpha: Vec<f64>,
    vocabulary: Vec<String>,
    tau: Vec<Vec<f64>>,
    beta: Vec<f64>,
    hazard: Option<BaselineHazard>,
    per_document: Vec<DocumentFit>,
    elbo_trace: Vec<f64>,
    converged: bool,
}

/// Writes the model as versioned JSON. Numbers are serialized with the
/// shortest representation that round-trips exactly, so save → load →
/// save is byte-stable.
pub fn save_model(model: &FittedModel, path: impl AsRef<Path>) -> Result<()> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        config: model.config.clone(),
        alpha: model.alpha.clone(),
        vocabulary: model.vocabulary.terms().to_vec(),
        tau: model.tau.clone(),
        beta: model.beta.clone(),
        hazard: model.hazard.clone(),
        per_document: model.per_document.clone(),
        elbo_trace: model.elbo_trace.clone(),
        converged: model.converged,
    };
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    serde_json::to_writer_pretty(&mut w, &file).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FittedModel> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    let file: ModelFile = serde_json::from_reader(reader).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    if file.format != MODEL_FORMAT {
        return Err(Error::Validation(format!(
            "not a model file (format {:?})",
            file.format
        )));
    }
    if file.version != MODEL_VERSION {
        return Err(Error::VersionMismatch {
            found: file.version,
            expected: MODEL_VERSION,
        });
    }
    let k = file.alpha.len();
    if file.tau.len() != k || file.beta.len() != k {
        return Err(Error::validation(
            "model file is inconsistent: tau/beta shape does not match alpha",
        ));
    }
    let v = file.vocabulary.len();
    if file.tau.iter().any(|row| row.len() != v) {
        return Err(Error::validation(
            "model file is inconsistent: tau width does not match the vocabulary",
        ));
    }
    let model = FittedModel {
        alpha: file.alpha,
        tau: file.tau,
        beta: file.beta,
        hazard: file.hazard,
        vocabulary: Vocabulary::new(file.vocabulary)?,
        per_document: file.per_document,
        elbo_trace: file.elbo_trace,
        config: file.config,
        converged: file.converged,
    };
    if let Some(h) = &model.hazard {
        h.validate()?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, SurvivalOutcome};
    use crate::vem::VariationalState;

    fn tiny_corpus(with_outcomes: bool) -> Corpus {
        let vocab = Vocabulary::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let mk = |id: &str, tokens: Vec<usize>, t: f64, e: bool| Document {
            id: id.into(),
            tokens,
            outcome: with_outcomes.then(|| SurvivalOutcome::new(t, e).unwrap()),
        };
        Corpus::new(
            vocab,
            vec![
                mk("d1", vec![0, 0, 1], 2.0, true),
                mk("d2", vec![1, 2], 3.0, false),
                mk("d3", vec![2, 2, 2, 0], 1.0, true),
                mk("d4", vec![0, 1, 2], 4.0, true),
            ],
        )
        .unwrap()
    }

    #[test]
    fn config_validation_catches_missing_anchor() {
        let config = TrainConfig {
            k: 3,
            mode: Mode::Survlda,
            ..Default::default()
        };
        assert!(matches!(config.validate().unwrap_err(), Error::Config(_)));
        let ok = TrainConfig {
            k: 3,
            mode: Mode::Survlda,
            reference_topic: Some(2),
            ..Default::default()
        };
        ok.validate().unwrap();
    }

    #[test]
    fn background_row_uses_epsilon_filler() {
        let vocab = Vocabulary::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let spec = BackgroundSpec::new(BTreeMap::from([
            ("a".to_string(), 2.0),
            ("b".to_string(), 1.0),
        ]));
        let row = spec.tau_row(&vocab).unwrap();
        let total = 2.0 + 1.0 + 0.001;
        assert!((row[0] - 2.0 / total).abs() < 1e-15);
        assert!((row[1] - 1.0 / total).abs() < 1e-15);
        assert!((row[2] - 0.001 / total).abs() < 1e-15);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn background_word_must_be_in_vocabulary() {
        let vocab = Vocabulary::new(vec!["a".into()]).unwrap();
        let spec = BackgroundSpec::new(BTreeMap::from([("zzz".to_string(), 1.0)]));
        assert!(spec.tau_row(&vocab).is_err());
    }

    #[test]
    fn tau_mstep_single_word_mass() {
        let vocab = Vocabulary::new(vec!["w".into(), "x".into(), "y".into()]).unwrap();
        let corpus = Corpus::new(
            vocab,
            vec![Document {
                id: "d".into(),
                tokens: vec![0],
                outcome: None,
            }],
        )
        .unwrap();
        let params = make_params(
            &[0.5, 0.5],
            &[vec![1.0 / 3.0; 3], vec![1.0 / 3.0; 3]],
            &[0.0, 0.0],
            None,
        );
        let mut state = VariationalState::new(&corpus.documents[0], &params);
        state.phi[0] = vec![1.0, 0.0];
        let eps = 1e-8;
        let tau = mstep_tau(&[state], &corpus, 2, eps, None);
        // Topic 1 puts (1+ε)/(1+3ε) mass on w, ε/(1+3ε) on the others.
        assert!((tau[0][0] - (1.0 + eps) / (1.0 + 3.0 * eps)).abs() < 1e-15);
        assert!((tau[0][1] - eps / (1.0 + 3.0 * eps)).abs() < 1e-15);
        // Topic 2 saw nothing: uniform.
        assert!((tau[1][0] - 1.0 / 3.0).abs() < 1e-12);
        for row in &tau {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tau_mstep_uniform_phi_gives_empirical_distribution() {
        let corpus = tiny_corpus(false);
        let k = 2;
        let params = make_params(
            &[0.5; 2],
            &[vec![1.0 / 3.0; 3], vec![1.0 / 3.0; 3]],
            &[0.0; 2],
            None,
        );
        let states: Vec<VariationalState> = corpus
            .documents
            .iter()
            .map(|d| VariationalState::new(d, &params))
            .collect();
        // Uniform φ: every topic row equals the smoothed corpus distribution.
        let tau = mstep_tau(&states, &corpus, k, 1e-8, None);
        let n = corpus.total_tokens() as f64;
        let counts = [4.0, 3.0, 5.0];
        for row in &tau {
            for (v, &c) in counts.iter().enumerate() {
                let expected = (c / k as f64 + 1e-8) / (n / k as f64 + 3.0 * 1e-8);
                assert!((row[v] - expected).abs() < 1e-12);
            }
        }
        assert_eq!(tau[0], tau[1]);
    }

    #[test]
    fn lda_fit_trace_is_nondecreasing_and_ignores_outcomes() {
        let config = TrainConfig {
            k: 2,
            em_max_iters: 15,
            restarts: 2,
            seed: 5,
            ..Default::default()
        };
        let with = fit(&tiny_corpus(true), &config).unwrap();
        let without = fit(&tiny_corpus(false), &config).unwrap();
        for w in with.elbo_trace.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-6 * w[0].abs(),
                "trace {:?}",
                with.elbo_trace
            );
        }
        assert_eq!(with.tau, without.tau);
        assert_eq!(with.elbo_trace, without.elbo_trace);
    }

    #[test]
    fn survlda_fit_runs_and_pins_background() {
        let corpus = tiny_corpus(true);
        let config = TrainConfig {
            k: 2,
            mode: Mode::Survlda,
            hazard_family: HazardFamily::Exponential,
            background: Some(BackgroundSpec::new(BTreeMap::from([(
                "c".to_string(),
                1.0,
            )]))),
            em_max_iters: 10,
            restarts: 1,
            seed: 3,
            ..Default::default()
        };
        let model = fit(&corpus, &config).unwrap();
        assert_eq!(model.beta[1], 0.0);
        let expected_bg = config
            .background
            .as_ref()
            .unwrap()
            .tau_row(&corpus.vocabulary)
            .unwrap();
        assert_eq!(model.tau[1], expected_bg);
        for w in model.elbo_trace.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-6 * w[0].abs(),
                "trace {:?}",
                model.elbo_trace
            );
        }
        assert!(model.hazard.is_some());
    }

    #[test]
    fn single_topic_curve_is_classical_km() {
        let corpus = tiny_corpus(true);
        let config = TrainConfig {
            k: 1,
            mode: Mode::Survlda,
            em_max_iters: 5,
            restarts: 1,
            ..Default::default()
        };
        let model = fit(&corpus, &config).unwrap();
        let curves = topic_survival_curves(&model, &corpus).unwrap();
        assert_eq!(curves.len(), 1);
        let times = [2.0, 3.0, 1.0, 4.0];
        let events = [true, false, true, true];
        let classical = weighted_km(&times, &events, &[1.0; 4]).unwrap();
        for (a, b) in curves[0].points.iter().zip(&classical.points) {
            assert!((a.survival - b.survival).abs() < 1e-12);
        }
    }

    #[test]
    fn model_round_trip_is_lossless_and_byte_stable() {
        let corpus = tiny_corpus(true);
        let config = TrainConfig {
            k: 2,
            mode: Mode::Survlda,
            hazard_family: HazardFamily::Breslow,
            reference_topic: Some(1),
            em_max_iters: 6,
            restarts: 1,
            ..Default::default()
        };
        let model = fit(&corpus, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("m1.json");
        let p2 = dir.path().join("m2.json");
        save_model(&model, &p1).unwrap();
        let loaded = load_model(&p1).unwrap();
        assert_eq!(loaded, model);
        save_model(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn load_rejects_bad_version_and_shape() {
        let corpus = tiny_corpus(false);
        let config = TrainConfig {
            k: 2,
            em_max_iters: 3,
            restarts: 1,
            ..Default::default()
        };
        let model = fit(&corpus, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&model, &path).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let bad_version = text.replacen("\"version\": 1", "\"version\": 99", 1);
        let vpath = dir.path().join("v.json");
        std::fs::write(&vpath, bad_version).unwrap();
        assert!(matches!(
            load_model(&vpath).unwrap_err(),
            Error::VersionMismatch {
                found: 99,
                expected: 1
            }
        ));

        // K mismatch: drop one beta entry.
        let bad_shape = text.replacen(
            "\"beta\": [\n    0.0,\n    0.0\n  ]",
            "\"beta\": [\n    0.0\n  ]",
            1,
        );
        assert_ne!(bad_shape, text, "fixture edit failed to apply");
        let spath = dir.path().join("s.json");
        std::fs::write(&spath, bad_shape).unwrap();
        assert!(load_model(&spath).is_err());
    }

    #[test]
    fn restart_selection_keeps_the_best_elbo() {
        let corpus = tiny_corpus(false);
        let base = TrainConfig {
            k: 2,
            em_max_iters: 12,
            seed: 11,
            ..Default::default()
        };
        let best = fit(
            &corpus,
            &TrainConfig {
                restarts: 3,
                ..base.clone()
            },
        )
        .unwrap();
        for r in 0..3 {
            let single = fit_once(
                &corpus,
                &TrainConfig {
                    restarts: 3,
                    ..base.clone()
                },
                None,
                r,
            )
            .unwrap();
            assert!(best.final_elbo() >= single.final_elbo() - 1e-12);
        }
    }
}
