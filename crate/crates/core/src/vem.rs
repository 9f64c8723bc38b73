//! Per-document variational inference: coordinate-ascent updates for the
//! Dirichlet factor γ and the per-word topic responsibilities φ, plus the
//! evidence lower bound (ELBO), in plain LDA mode and in the
//! survival-supervised mode.
//!
//! In the supervised mode each word's update carries an extra exponent
//! δ·β_k/N − H₀(T)·(Π_{m≠j} exp(β/N)′φ_m)·exp(β_k/N); the leave-one-out
//! product is maintained incrementally with periodic full recomputation to
//! control drift.

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, SurvivalOutcome};
use crate::error::{Error, Result};
use crate::math::{digamma, ln_gamma, logsumexp, softmax_in_place};
use crate::survival::BaselineHazard;

/// Incremental cache refresh cadence for the hazard product, in word
/// updates.
const RECOMPUTE_EVERY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Lda,
    Survlda,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Lda => "lda",
            Mode::Survlda => "survlda",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lda" => Ok(Mode::Lda),
            "survlda" => Ok(Mode::Survlda),
            _ => Err(Error::config(format!(
                "unknown mode {s:?} (expected lda or survlda)"
            ))),
        }
    }
}

/// System-wide parameters: Dirichlet prior α, per-topic log word
/// distributions, survival coefficients β, and the baseline hazard
/// (`None` in LDA mode, where β is all zeros).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub alpha: Vec<f64>,
    pub log_tau: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub hazard: Option<BaselineHazard>,
}

impl ModelParams {
    pub fn n_topics(&self) -> usize {
        self.alpha.len()
    }

    pub fn n_words(&self) -> usize {
        self.log_tau.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_topics();
        if k == 0 {
            return Err(Error::validation("need at least one topic"));
        }
        if self.alpha.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::validation(
                "alpha entries must be positive and finite",
            ));
        }
        if self.log_tau.len() != k || self.beta.len() != k {
            return Err(Error::validation("parameter dimensions disagree"));
        }
        let v = self.n_words();
        for (kk, row) in self.log_tau.iter().enumerate() {
            if row.len() != v {
                return Err(Error::validation("ragged log_tau rows"));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!(
                    "log_tau row {kk} has non-finite entries (smoothing missing?)"
                )));
            }
            let total = logsumexp(row);
            if total.abs() > 1e-10 {
                return Err(Error::Validation(format!(
                    "tau row {kk} sums to exp({total:.3e}) instead of 1"
                )));
            }
        }
        if let Some(h) = &self.hazard {
            h.validate()?;
        }
        Ok(())
    }

    /// Word probabilities of topic `k`.
    pub fn tau_row(&self, k: usize) -> Vec<f64> {
        self.log_tau[k].iter().map(|&l| l.exp()).collect()
    }
}

/// Variational state for one document: Dirichlet parameter γ, per-word
/// responsibilities φ, and caches (ψ_k = Ψ(γ_k) − Ψ(Σγ), ξ_jk = log
/// τ_k,W_j, φ̄, and the running hazard product Π_j exp(β/N)′φ_j).
#[derive(Debug, Clone)]
pub struct VariationalState {
    pub gamma: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub psi: Vec<f64>,
    pub xi: Vec<Vec<f64>>,
    pub phi_bar: Vec<f64>,
    pub hazard_product: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Per-iteration ELBO values recorded by [`e_step`].
    pub elbo_trace: Vec<f64>,
    /// Set when a supervised E-step fell back to the plain update because
    /// the document has no words (the survival exponent divides by N).
    pub lda_fallback: bool,
    updates_since_recompute: usize,
}

impl VariationalState {
    /// Uniform-responsibility initialization; γ starts at its coordinate
    /// optimum α + N/K for uniform φ.
    pub fn new(doc: &Document, params: &ModelParams) -> VariationalState {
        let k = params.n_topics();
        let n = doc.len();
        let phi = vec![vec![1.0 / k as f64; k]; n];
        let xi = doc
            .tokens
            .iter()
            .map(|&w| (0..k).map(|kk| params.log_tau[kk][w]).collect())
            .collect();
        let mut state = VariationalState {
            gamma: vec![0.0; k],
            phi,
            psi: vec![0.0; k],
            xi,
            phi_bar: vec![0.0; k],
            hazard_product: 1.0,
            converged: false,
            iterations: 0,
            elbo_trace: Vec::new(),
            lda_fallback: false,
            updates_since_recompute: 0,
        };
        state.update_gamma(&params.alpha);
        state.recompute_phi_caches(&params.beta);
        state
    }

    pub fn n_words(&self) -> usize {
        self.phi.len()
    }

    /// γ ← α + Σ_j φ_j; refreshes the cached ψ. Returns the new γ.
    pub fn update_gamma(&mut self, alpha: &[f64]) -> &[f64] {
        for (k, g) in self.gamma.iter_mut().enumerate() {
            *g = alpha[k] + self.phi.iter().map(|row| row[k]).sum::<f64>();
        }
        let psi_total = digamma(self.gamma.iter().sum());
        for (k, p) in self.psi.iter_mut().enumerate() {
            *p = digamma(self.gamma[k]) - psi_total;
        }
        &self.gamma
    }

    /// Recomputes φ̄ and the hazard product from scratch.
    pub fn recompute_phi_caches(&mut self, beta: &[f64]) {
        let n = self.n_words();
        for pb in self.phi_bar.iter_mut() {
            *pb = 0.0;
        }
        self.hazard_product = 1.0;
        if n == 0 {
            return;
        }
        let n_f = n as f64;
        for row in &self.phi {
            for (k, pb) in self.phi_bar.iter_mut().enumerate() {
                *pb += row[k] / n_f;
            }
            self.hazard_product *= word_factor(row, beta, n_f);
        }
        self.updates_since_recompute = 0;
    }

    /// Plain update: φ_jk ∝ exp(ψ_k + ξ_jk). Returns the new row.
    pub fn update_phi_lda(&mut self, j: usize) -> Result<&[f64]> {
        let logits: Vec<f64> = self
            .psi
            .iter()
            .zip(&self.xi[j])
            .map(|(p, x)| p + x)
            .collect();
        self.apply_phi_row(j, logits, &[])
    }

    /// Supervised update: φ_jk ∝ exp(ψ_k + ξ_jk + δβ_k/N −
    /// H₀(T)·(Π_{m≠j} exp(β/N)′φ_m)·exp(β_k/N)). `h0_cum_at_t` is H₀(T_i)
    /// under the hazard snapshot for this E-step. Returns the new row.
    pub fn update_phi_survlda(
        &mut self,
        params: &ModelParams,
        j: usize,
        outcome: &SurvivalOutcome,
        h0_cum_at_t: f64,
    ) -> Result<&[f64]> {
        let k = self.psi.len();
        let n_f = self.n_words() as f64;
        let beta = &params.beta;

        // Leave-one-out product from the running cache.
        let old_factor = word_factor(&self.phi[j], beta, n_f);
        let loo = if old_factor > 0.0 {
            self.hazard_product / old_factor
        } else {
            f64::INFINITY // forces the error path below
        };
        let delta = if outcome.event { 1.0 } else { 0.0 };

        let mut logits = vec![0.0; k];
        for kk in 0..k {
            logits[kk] = self.psi[kk] + self.xi[j][kk] + delta * beta[kk] / n_f
                - h0_cum_at_t * loo * (beta[kk] / n_f).exp();
        }
        self.apply_phi_row(j, logits, beta)
    }

    /// Normalizes `logits` into φ_j and maintains the φ̄/product caches.
    fn apply_phi_row(&mut self, j: usize, mut logits: Vec<f64>, beta: &[f64]) -> Result<&[f64]> {
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite responsibility exponent at word {j}"
            )));
        }
        softmax_in_place(&mut logits);
        let n_f = self.n_words() as f64;
        if beta.is_empty() {
            for (k, pb) in self.phi_bar.iter_mut().enumerate() {
                *pb += (logits[k] - self.phi[j][k]) / n_f;
            }
        } else {
            let old_factor = word_factor(&self.phi[j], beta, n_f);
            let new_factor = word_factor(&logits, beta, n_f);
            self.hazard_product = self.hazard_product / old_factor * new_factor;
            for (k, pb) in self.phi_bar.iter_mut().enumerate() {
                *pb += (logits[k] - self.phi[j][k]) / n_f;
            }
        }
        self.phi[j] = logits;
        self.updates_since_recompute += 1;
        if self.updates_since_recompute >= RECOMPUTE_EVERY && !beta.is_empty() {
            self.recompute_phi_caches(beta);
        }
        Ok(&self.phi[j])
    }

    /// Posterior-mean topic proportions γ/Σγ.
    pub fn theta_hat(&self) -> Vec<f64> {
        let total: f64 = self.gamma.iter().sum();
        self.gamma.iter().map(|&g| g / total).collect()
    }
}

/// exp(β/N)′φ_j for one word.
fn word_factor(phi_row: &[f64], beta: &[f64], n_f: f64) -> f64 {
    if beta.is_empty() {
        return 1.0;
    }
    phi_row
        .iter()
        .zip(beta)
        .map(|(&p, &b)| p * (b / n_f).exp())
        .sum()
}

/// Evidence lower bound for one document at the current state. The
/// supervised mode adds δ·log h₀(T) + δ·β′φ̄ − H₀(T)·Π_j exp(β/N)′φ_j;
/// the product is recomputed exactly here rather than read from the cache.
pub fn compute_elbo(
    state: &VariationalState,
    params: &ModelParams,
    doc: &Document,
    mode: Mode,
) -> Result<f64> {
    let alpha = &params.alpha;
    let alpha_total: f64 = alpha.iter().sum();
    let gamma_total: f64 = state.gamma.iter().sum();

    // E[log p(θ|α)] under q.
    let mut elbo = ln_gamma(alpha_total);
    for (&a, &psi) in alpha.iter().zip(&state.psi) {
        elbo -= ln_gamma(a);
        elbo += (a - 1.0) * psi;
    }

    // E[log p(Z|θ)] + E[log p(W|Z,τ)] and the φ part of the entropy.
    for (j, row) in state.phi.iter().enumerate() {
        for ((&p, &psi), &xi) in row.iter().zip(&state.psi).zip(&state.xi[j]) {
            if p > 0.0 {
                elbo += p * (psi + xi - p.ln());
            }
        }
    }

    // Dirichlet part of the entropy: −E[log q(θ)].
    elbo -= ln_gamma(gamma_total);
    for (&g, &psi) in state.gamma.iter().zip(&state.psi) {
        elbo += ln_gamma(g);
        elbo -= (g - 1.0) * psi;
    }

    if mode == Mode::Survlda && !state.lda_fallback {
        let outcome = doc
            .outcome
            .as_ref()
            .ok_or_else(|| Error::validation("supervised ELBO requires a survival outcome"))?;
        let hazard = params
            .hazard
            .as_ref()
            .ok_or_else(|| Error::validation("supervised ELBO requires a baseline hazard"))?;
        let n_f = doc.len() as f64;
        let mut log_product = 0.0;
        for row in &state.phi {
            log_product += word_factor(row, &params.beta, n_f).ln();
        }
        let cum = hazard.cumulative_at(outcome.time);
        if outcome.event {
            let h = hazard.hazard_at(outcome.time);
            if h <= 0.0 {
                return Err(Error::Numerical(format!(
                    "zero baseline hazard at event time {}",
                    outcome.time
                )));
            }
            let lin: f64 = params
                .beta
                .iter()
                .zip(&state.phi_bar)
                .map(|(&b, &p)| b * p)
                .sum();
            elbo += h.ln() + lin;
        }
        elbo -= cum * log_product.exp();
    }

    if !elbo.is_finite() {
        return Err(Error::numerical("ELBO is not finite"));
    }
    Ok(elbo)
}

/// Runs coordinate ascent (γ update, then a sweep of φ updates in document
/// order) until the relative ELBO change drops below `tol` or `max_iters`
/// is reached. Never errors on plain non-convergence; the state's
/// `converged` flag reports it.
pub fn e_step(
    doc: &Document,
    params: &ModelParams,
    mode: Mode,
    tol: f64,
    max_iters: usize,
) -> Result<VariationalState> {
    params.validate()?;
    e_step_inner(doc, params, mode, tol, max_iters, None)
}

/// [`e_step`] continued from an earlier state's responsibilities. The φ
/// rows are kept; ξ, ψ, and the caches are rebuilt against the current
/// parameters. Starting from the previous EM iteration's state keeps the
/// corpus objective monotone across EM iterations.
pub fn e_step_warm(
    doc: &Document,
    params: &ModelParams,
    mode: Mode,
    tol: f64,
    max_iters: usize,
    warm: Option<&VariationalState>,
) -> Result<VariationalState> {
    params.validate()?;
    e_step_inner(doc, params, mode, tol, max_iters, warm)
}

fn e_step_inner(
    doc: &Document,
    params: &ModelParams,
    mode: Mode,
    tol: f64,
    max_iters: usize,
    warm: Option<&VariationalState>,
) -> Result<VariationalState> {
    let mut state = VariationalState::new(doc, params);
    if let Some(w) = warm {
        if w.phi.len() == doc.len() && w.psi.len() == params.n_topics() {
            state.phi = w.phi.clone();
            state.update_gamma(&params.alpha);
            state.recompute_phi_caches(&params.beta);
        }
    }
    let mut effective_mode = mode;
    if mode == Mode::Survlda {
        if doc.outcome.is_none() {
            return Err(Error::Validation(format!(
                "document {:?} has no outcome but the mode is supervised",
                doc.id
            )));
        }
        if doc.is_empty() {
            // The survival exponent divides by N; an empty document has no
            // words to update anyway, so fall back to the plain updates.
            state.lda_fallback = true;
            effective_mode = Mode::Lda;
        }
    }

    // Snapshot of the cumulative hazard at this document's time, fixed for
    // the whole E-step even when the hazard is a Breslow estimate.
    let h0_cum_at_t = match (effective_mode, &doc.outcome, &params.hazard) {
        (Mode::Survlda, Some(o), Some(h)) => h.cumulative_at(o.time),
        (Mode::Survlda, _, None) => {
            return Err(Error::validation(
                "supervised E-step requires a baseline hazard",
            ))
        }
        _ => 0.0,
    };

    let mut prev = compute_elbo(&state, params, doc, mode)?;
    state.elbo_trace.push(prev);
    for iter in 1..=max_iters {
        state.update_gamma(&params.alpha);
        for j in 0..doc.len() {
            match effective_mode {
                Mode::Lda => {
                    state.update_phi_lda(j).map_err(|e| augment(e, &doc.id))?;
                }
                Mode::Survlda => {
                    state
                        .update_phi_survlda(params, j, doc.outcome.as_ref().unwrap(), h0_cum_at_t)
                        .map_err(|e| augment(e, &doc.id))?;
                }
            }
        }
        state.recompute_phi_caches(&params.beta);
        let elbo = compute_elbo(&state, params, doc, mode)?;
        state.elbo_trace.push(elbo);
        state.iterations = iter;
        let rel = (elbo - prev).abs() / prev.abs().max(1e-12);
        prev = elbo;
        if rel < tol || doc.is_empty() {
            state.converged = true;
            break;
        }
    }
    // Leave γ consistent with the final φ.
    state.update_gamma(&params.alpha);
    Ok(state)
}

fn augment(e: Error, doc_id: &str) -> Error {
    match e {
        Error::Numerical(m) => Error::Numerical(format!("document {doc_id:?}: {m}")),
        other => other,
    }
}
