//! Held-out inference: topic proportions for new documents (no outcome
//! needed) and the survival predictions derived from them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Vocabulary};
use crate::error::{Error, Result};
use crate::survival::BaselineHazard;
use crate::trainer::FittedModel;
use crate::vem::{e_step, Mode};

/// Posterior summary for one held-out document.
///
/// `median_lifetime` is filled when the model carries a baseline hazard;
/// `f64::INFINITY` means the predicted survival curve never falls to 1/2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub gamma_new: Vec<f64>,
    pub z_bar_new: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub linear_predictor: f64,
    pub median_lifetime: Option<f64>,
    /// Tokens dropped because the model vocabulary does not contain them.
    pub n_oov_dropped: usize,
    /// No tokens were left after filtering; γ = α and `z_bar_new` falls
    /// back to the prior-mean proportions.
    pub empty_after_filtering: bool,
}

/// Runs the unsupervised coordinate ascent (γ = α + Σφ_j; φ_jk ∝
/// exp(ψ_k + ξ_jk)) for `doc` against the fitted topics. `vocabulary` is
/// the one `doc.tokens` indexes into; tokens whose term is absent from
/// the model's vocabulary are dropped and counted.
pub fn infer_new_document(
    doc: &Document,
    vocabulary: &Vocabulary,
    model: &FittedModel,
) -> Result<Prediction> {
    let mut tokens = Vec::with_capacity(doc.tokens.len());
    let mut dropped = 0usize;
    for &w in &doc.tokens {
        if w >= vocabulary.len() {
            return Err(Error::Validation(format!(
                "document {:?} has token index {w} outside its vocabulary",
                doc.id
            )));
        }
        match model.vocabulary.index_of(vocabulary.term(w)) {
            Some(v) => tokens.push(v),
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!(
            "document {:?}: dropped {dropped} word(s) outside the model vocabulary",
            doc.id
        );
    }
    let filtered = Document {
        id: doc.id.clone(),
        tokens,
        outcome: None,
    };
    let params = model.params();
    let state = e_step(
        &filtered,
        &params,
        Mode::Lda,
        model.config.estep_tol,
        model.config.estep_max_iters,
    )?;
    let theta_hat = state.theta_hat();
    let empty = filtered.is_empty();
    // An empty document has no word assignments to average, so the
    // prior-mean proportions stand in for Z̄.
    let z_bar_new = if empty {
        theta_hat.clone()
    } else {
        state.phi_bar.clone()
    };
    let linear_predictor: f64 = model.beta.iter().zip(&z_bar_new).map(|(b, z)| b * z).sum();
    let mut pred = Prediction {
        id: doc.id.clone(),
        gamma_new: state.gamma.clone(),
        z_bar_new,
        theta_hat,
        linear_predictor,
        median_lifetime: None,
        n_oov_dropped: dropped,
        empty_after_filtering: empty,
    };
    if model.hazard.is_some() {
        pred.median_lifetime = Some(predicted_median_lifetime(&pred, model)?);
    }
    Ok(pred)
}

/// Inference for every document of a corpus, in corpus order.
pub fn infer_corpus(corpus: &Corpus, model: &FittedModel) -> Result<Vec<Prediction>> {
    corpus
        .documents
        .par_iter()
        .map(|d| infer_new_document(d, &corpus.vocabulary, model))
        .collect()
}

/// Solves exp[−H₀(t)·exp(β′Z̄)] = 1/2 for t. Closed form for the
/// exponential and Weibull families; for a step-function baseline, the
/// first step time where survival reaches 1/2, or +∞ if it never does.
pub fn predicted_median_lifetime(pred: &Prediction, model: &FittedModel) -> Result<f64> {
    let hazard = model.hazard.as_ref().ok_or_else(|| {
        Error::Unsupported("median lifetime needs a survival model, not a plain topic model".into())
    })?;
    let risk = pred.linear_predictor.exp();
    let target = std::f64::consts::LN_2 / risk; // H₀(t) at the median
    match hazard {
        BaselineHazard::Exponential { lambda } => Ok(target / lambda),
        BaselineHazard::Weibull { lambda, rho } => Ok((target / lambda).powf(1.0 / rho)),
        BaselineHazard::Breslow { steps } => {
            let mut cum = 0.0;
            for s in steps {
                cum += s.hazard * s.interval;
                if cum >= target {
                    return Ok(s.time);
                }
            }
            Ok(f64::INFINITY)
        }
    }
}

/// Document ids split by their weight in one topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub topic: usize,
    pub threshold_hi: f64,
    pub threshold_lo: f64,
    /// θ̂_topic > hi
    pub high: Vec<String>,
    /// θ̂_topic < lo
    pub low: Vec<String>,
    /// everything else
    pub middle: Vec<String>,
}

/// Partitions predictions by θ̂_topic into {> hi}, {< lo}, and the rest.
pub fn topic_membership_report(
    preds: &[Prediction],
    threshold_hi: f64,
    threshold_lo: f64,
    topic: usize,
) -> Result<MembershipReport> {
    if !(0.0 < threshold_lo && threshold_lo < threshold_hi && threshold_hi < 1.0) {
        return Err(Error::config("thresholds must satisfy 0 < lo < hi < 1"));
    }
    if let Some(p) = preds.iter().find(|p| topic >= p.theta_hat.len()) {
        return Err(Error::Validation(format!(
            "topic {topic} out of range for prediction {:?}",
            p.id
        )));
    }
    let mut report = MembershipReport {
        topic,
        threshold_hi,
        threshold_lo,
        high: Vec::new(),
        low: Vec::new(),
        middle: Vec::new(),
    };
    for p in preds {
        let w = p.theta_hat[topic];
        if w > threshold_hi {
            report.high.push(p.id.clone());
        } else if w < threshold_lo {
            report.low.push(p.id.clone());
        } else {
            report.middle.push(p.id.clone());
        }
    }
    Ok(report)
}
