//! Synthetic corpora with known parameters, for recovery tests: draw
//! topic proportions, assignments, words, and a censored event time per
//! document, all reproducible from a single seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, SurvivalOutcome, Vocabulary};
use crate::error::{Error, Result};
use crate::survival::BaselineHazard;
use crate::vem::ModelParams;

/// Independent censoring mechanism applied on top of the event times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum CensorDist {
    /// Every event is observed.
    None,
    /// Censoring time ~ Exponential(rate).
    Exponential { rate: f64 },
    /// Fixed end-of-study time.
    Administrative { time: f64 },
}

impl CensorDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CensorDist::None => Ok(()),
            CensorDist::Exponential { rate } if rate > 0.0 && rate.is_finite() => Ok(()),
            CensorDist::Administrative { time } if time > 0.0 && time.is_finite() => Ok(()),
            _ => Err(Error::config(
                "censoring parameters must be positive and finite",
            )),
        }
    }
}

/// Parses `"none"`, `"exponential:RATE"`, or `"administrative:TIME"`.
impl std::str::FromStr for CensorDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "none" {
            return Ok(CensorDist::None);
        }
        let parsed = match s.split_once(':') {
            Some(("exponential", p)) => p
                .trim()
                .parse()
                .ok()
                .map(|rate| CensorDist::Exponential { rate }),
            Some(("administrative", p)) => p
                .trim()
                .parse()
                .ok()
                .map(|time| CensorDist::Administrative { time }),
            _ => None,
        };
        parsed.ok_or_else(|| {
            Error::config(format!(
                "censoring spec {s:?}: expected none, exponential:RATE, or administrative:TIME"
            ))
        })
    }
}

/// Everything the generator knew: the parameters plus the latent draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub params: ModelParams,
    pub theta_true: Vec<Vec<f64>>,
    pub z_true: Vec<Vec<usize>>,
    pub z_bar_true: Vec<Vec<f64>>,
    /// Expected censored fraction given the realized Z̄s.
    pub censoring_rate_target: f64,
}

/// Inverse-CDF draw: the time t with S(t) = u for an Exponential(rate).
pub fn exponential_inverse_sample(u: f64, rate: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::validation("u must lie strictly between 0 and 1"));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::validation("rate must be positive and finite"));
    }
    Ok(-u.ln() / rate)
}

/// Weibull analogue: solves exp(−λ' t^ρ) = u.
pub fn weibull_inverse_sample(u: f64, lambda: f64, rho: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::validation("u must lie strictly between 0 and 1"));
    }
    if !(lambda > 0.0 && rho > 0.0) {
        return Err(Error::validation("scale and shape must be positive"));
    }
    Ok((-u.ln() / lambda).powf(1.0 / rho))
}

/// A uniform draw guaranteed to lie in the open interval (0, 1).
fn open_unit(rng: &mut ChaCha12Rng) -> f64 {
    loop {
        let u = rng.random::<f64>();
        if u > 0.0 {
            return u;
        }
    }
}

fn categorical(rng: &mut ChaCha12Rng, probs: &[f64]) -> usize {
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// P(censoring time < event time) for one document with risk multiplier
/// `risk`, used to report the designed censored fraction.
fn censor_probability(hazard: &BaselineHazard, risk: f64, censor: CensorDist) -> f64 {
    match censor {
        CensorDist::None => 0.0,
        CensorDist::Administrative { time } => (-hazard.cumulative_at(time) * risk).exp(),
        CensorDist::Exponential { rate } => match *hazard {
            BaselineHazard::Exponential { lambda } => rate / (rate + lambda * risk),
            BaselineHazard::Weibull { lambda, rho } => {
                // ∫₀^∞ c·e^{−ct}·exp(−λ r t^ρ) dt, substituting u = e^{−ct}:
                // ∫₀¹ exp(−λ r (−ln u / c)^ρ) du, by composite Simpson.
                let f = |u: f64| {
                    if u <= 0.0 {
                        0.0
                    } else if u >= 1.0 {
                        1.0
                    } else {
                        (-lambda * risk * (-u.ln() / rate).powf(rho)).exp()
                    }
                };
                let n = 2000usize;
                let h = 1.0 / n as f64;
                let mut total = f(0.0) + f(1.0);
                for i in 1..n {
                    let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                    total += w * f(i as f64 * h);
                }
                total * h / 3.0
            }
            BaselineHazard::Breslow { .. } => f64::NAN,
        },
    }
}

/// A quick synthetic model: flat-Dirichlet topic rows over `v` words, a
/// symmetric prior summing to `alpha0`, and the given survival part. Rows
/// are drawn on a generator stream far away from the per-document streams
/// [`generate_corpus`] uses, so corpus and topics can share one seed.
pub fn random_params(
    k: usize,
    v: usize,
    alpha0: f64,
    beta: Vec<f64>,
    hazard: BaselineHazard,
    seed: u64,
) -> Result<ModelParams> {
    if k == 0 || v == 0 {
        return Err(Error::config("k and v must be positive"));
    }
    if beta.len() != k {
        return Err(Error::config(format!(
            "beta lists {} coefficients for k = {k}",
            beta.len()
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let log_tau = (0..k)
        .map(|_| {
            let mut row: Vec<f64> = (0..v)
                .map(|_| -rng.random::<f64>().max(1e-300).ln())
                .collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x = (*x / total).ln());
            row
        })
        .collect();
    let params = ModelParams {
        alpha: vec![alpha0 / k as f64; k],
        log_tau,
        beta,
        hazard: Some(hazard),
    };
    params.validate()?;
    Ok(params)
}

/// Draws `d` documents of `n_per_doc` words each from `params` and pairs
/// each with a censored event time whose hazard is h₀(t)·exp(β′Z̄).
/// Document `i` uses its own generator stream, so the output is fully
/// determined by `seed` and stable under re-runs.
pub fn generate_corpus(
    params: &ModelParams,
    d: usize,
    n_per_doc: usize,
    censor: CensorDist,
    seed: u64,
) -> Result<(Corpus, SimTruth)> {
    params.validate()?;
    censor.validate()?;
    if d == 0 {
        return Err(Error::config("need at least one document"));
    }
    let hazard = params
        .hazard
        .as_ref()
        .ok_or_else(|| Error::config("generation requires a baseline hazard"))?;
    if let BaselineHazard::Breslow { .. } = hazard {
        return Err(Error::Unsupported(
            "a step-function baseline cannot be sampled beyond its support; \
             use an exponential or Weibull baseline"
                .into(),
        ));
    }
    let k = params.n_topics();
    let v = params.n_words();
    let tau: Vec<Vec<f64>> = params
        .log_tau
        .iter()
        .map(|row| row.iter().map(|&l| l.exp()).collect())
        .collect();
    let gammas: Vec<Gamma<f64>> = params
        .alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).map_err(|_| Error::config("alpha must be positive")))
        .collect::<Result<_>>()?;

    let vocabulary = Vocabulary::new((0..v).map(|i| format!("w{i}")).collect())?;
    let width = (d.max(2) - 1).to_string().len();
    let mut documents = Vec::with_capacity(d);
    let mut theta_true = Vec::with_capacity(d);
    let mut z_true = Vec::with_capacity(d);
    let mut z_bar_true = Vec::with_capacity(d);
    let mut censor_target = 0.0;

    for i in 0..d {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);

        let mut theta: Vec<f64> = gammas
            .iter()
            .map(|g| g.sample(&mut rng).max(1e-300))
            .collect();
        let t_sum: f64 = theta.iter().sum();
        for x in theta.iter_mut() {
            *x /= t_sum;
        }

        let mut z = Vec::with_capacity(n_per_doc);
        let mut tokens = Vec::with_capacity(n_per_doc);
        let mut counts = vec![0usize; k];
        for _ in 0..n_per_doc {
            let zj = categorical(&mut rng, &theta);
            counts[zj] += 1;
            z.push(zj);
            tokens.push(categorical(&mut rng, &tau[zj]));
        }
        let z_bar: Vec<f64> = if n_per_doc == 0 {
            vec![0.0; k]
        } else {
            counts
                .iter()
                .map(|&c| c as f64 / n_per_doc as f64)
                .collect()
        };

        let lp: f64 = params.beta.iter().zip(&z_bar).map(|(b, zk)| b * zk).sum();
        let risk = lp.exp();
        let u = open_unit(&mut rng);
        let event_time = match *hazard {
            BaselineHazard::Exponential { lambda } => exponential_inverse_sample(u, lambda * risk)?,
            BaselineHazard::Weibull { lambda, rho } => {
                weibull_inverse_sample(u, lambda * risk, rho)?
            }
            BaselineHazard::Breslow { .. } => unreachable!(),
        };
        let (time, event) = match censor {
            CensorDist::None => (event_time, true),
            CensorDist::Exponential { rate } => {
                let c = exponential_inverse_sample(open_unit(&mut rng), rate)?;
                (event_time.min(c), event_time <= c)
            }
            CensorDist::Administrative { time } => (event_time.min(time), event_time <= time),
        };
        censor_target += censor_probability(hazard, risk, censor);

        documents.push(Document {
            id: format!("sim-{i:0width$}"),
            tokens,
            outcome: Some(SurvivalOutcome::new(time.max(1e-300), event)?),
        });
        theta_true.push(theta);
        z_true.push(z);
        z_bar_true.push(z_bar);
    }

    let corpus = Corpus::new(vocabulary, documents)?;
    let truth = SimTruth {
        params: params.clone(),
        theta_true,
        z_true,
        z_bar_true,
        censoring_rate_target: censor_target / d as f64,
    };
    Ok((corpus, truth))
}

const TRUTH_FORMAT: &str = "survlda-sim-truth";
const TRUTH_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TruthFile {
    format: String,
    version: u32,
    alpha: Vec<f64>,
    tau: Vec<Vec<f64>>,
    beta: Vec<f64>,
    hazard: BaselineHazard,
    censoring_rate_target: f64,
    theta_true: Vec<Vec<f64>>,
    z_bar_true: Vec<Vec<f64>>,
}

/// Writes the generating parameters and per-document latent summaries
/// (τ, β, hazard, θ rows, Z̄ rows) as JSON.
pub fn save_truth(truth: &SimTruth, path: impl AsRef<Path>) -> Result<()> {
    let file = TruthFile {
        format: TRUTH_FORMAT.into(),
        version: TRUTH_VERSION,
        alpha: truth.params.alpha.clone(),
        tau: truth
            .params
            .log_tau
            .iter()
            .map(|row| row.iter().map(|&l| l.exp()).collect())
            .collect(),
        beta: truth.params.beta.clone(),
        hazard: truth
            .params
            .hazard
            .clone()
            .ok_or_else(|| Error::validation("truth has no hazard"))?,
        censoring_rate_target: truth.censoring_rate_target,
        theta_true: truth.theta_true.clone(),
        z_bar_true: truth.z_bar_true.clone(),
    };
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    serde_json::to_writer(&mut w, &file).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim_params(beta: Vec<f64>, hazard: BaselineHazard) -> ModelParams {
        let tau: [Vec<f64>; 2] = [vec![0.6, 0.3, 0.05, 0.05], vec![0.05, 0.05, 0.3, 0.6]];
        ModelParams {
            alpha: vec![0.5; 2],
            log_tau: tau
                .iter()
                .map(|r| r.iter().map(|p| p.ln()).collect())
                .collect(),
            beta,
            hazard: Some(hazard),
        }
    }

    #[test]
    fn inverse_samples_hit_known_points() {
        assert!((exponential_inverse_sample((-1.0f64).exp(), 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(
            (exponential_inverse_sample(0.5, std::f64::consts::LN_2).unwrap() - 1.0).abs() < 1e-15
        );
        assert!(exponential_inverse_sample(0.0, 1.0).is_err());
        assert!(exponential_inverse_sample(1.0, 1.0).is_err());
        assert!(exponential_inverse_sample(0.5, 0.0).is_err());
        // Weibull with ρ=1 degenerates to the exponential.
        for u in [0.1, 0.4, 0.9] {
            let w = weibull_inverse_sample(u, 0.7, 1.0).unwrap();
            let e = exponential_inverse_sample(u, 0.7).unwrap();
            assert!((w - e).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_sample_mean_matches_moment() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let rate = 2.5;
        let n = 1_000_000;
        let mut total = 0.0;
        for _ in 0..n {
            total += exponential_inverse_sample(open_unit(&mut rng), rate).unwrap();
        }
        let mean = total / n as f64;
        assert!(
            (mean - 1.0 / rate).abs() < 0.005 / rate,
            "mean {mean} vs expected {}",
            1.0 / rate
        );
    }

    #[test]
    fn same_seed_same_output() {
        let params = sim_params(vec![1.0, 0.0], BaselineHazard::Exponential { lambda: 0.4 });
        let a = generate_corpus(&params, 50, 20, CensorDist::Exponential { rate: 0.2 }, 9).unwrap();
        let b = generate_corpus(&params, 50, 20, CensorDist::Exponential { rate: 0.2 }, 9).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c =
            generate_corpus(&params, 50, 20, CensorDist::Exponential { rate: 0.2 }, 10).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn document_streams_are_stable_under_d() {
        // Growing the corpus does not disturb earlier documents.
        let params = sim_params(vec![0.5, 0.0], BaselineHazard::Exponential { lambda: 1.0 });
        let small = generate_corpus(&params, 10, 15, CensorDist::None, 3).unwrap();
        let large = generate_corpus(&params, 40, 15, CensorDist::None, 3).unwrap();
        for i in 0..10 {
            assert_eq!(small.0.documents[i].tokens, large.0.documents[i].tokens);
            assert_eq!(small.1.theta_true[i], large.1.theta_true[i]);
        }
    }

    #[test]
    fn z_bar_consistent_with_assignments() {
        let params = sim_params(
            vec![0.0, 0.0],
            BaselineHazard::Weibull {
                lambda: 0.5,
                rho: 1.5,
            },
        );
        let (_, truth) =
            generate_corpus(&params, 30, 17, CensorDist::Administrative { time: 2.0 }, 4).unwrap();
        for (z, z_bar) in truth.z_true.iter().zip(&truth.z_bar_true) {
            let mut counts = [0usize; 2];
            for &zj in z {
                counts[zj] += 1;
            }
            for (kk, &c) in counts.iter().enumerate() {
                assert_eq!(z_bar[kk], c as f64 / 17.0);
            }
        }
    }

    #[test]
    fn censor_dist_none_observes_everything() {
        let params = sim_params(vec![0.3, 0.0], BaselineHazard::Exponential { lambda: 0.8 });
        let (corpus, truth) = generate_corpus(&params, 40, 10, CensorDist::None, 5).unwrap();
        assert!(corpus
            .documents
            .iter()
            .all(|d| d.outcome.as_ref().unwrap().event));
        assert_eq!(truth.censoring_rate_target, 0.0);
    }

    #[test]
    fn administrative_censoring_truncates_at_cutoff() {
        let params = sim_params(vec![0.0, 0.0], BaselineHazard::Exponential { lambda: 0.2 });
        let (corpus, _) =
            generate_corpus(&params, 200, 5, CensorDist::Administrative { time: 1.5 }, 6).unwrap();
        let mut censored = 0;
        for d in &corpus.documents {
            let o = d.outcome.as_ref().unwrap();
            assert!(o.time <= 1.5);
            if !o.event {
                assert_eq!(o.time, 1.5);
                censored += 1;
            }
        }
        // S(1.5) = e^{−0.3} ≈ 0.74: expect roughly 148 of 200 censored.
        assert!(censored > 100, "only {censored} censored");
    }

    #[test]
    fn censoring_rate_matches_design() {
        let params = sim_params(vec![0.7, 0.0], BaselineHazard::Exponential { lambda: 0.5 });
        let dist = CensorDist::Exponential { rate: 0.4 };
        let (corpus, truth) = generate_corpus(&params, 5000, 10, dist, 11).unwrap();
        let censored = corpus
            .documents
            .iter()
            .filter(|d| !d.outcome.as_ref().unwrap().event)
            .count() as f64
            / 5000.0;
        let p = truth.censoring_rate_target;
        let tol = 3.0 * (p * (1.0 - p) / 5000.0).sqrt();
        assert!(
            (censored - p).abs() < tol,
            "censored fraction {censored} vs designed {p} (tol {tol})"
        );
    }

    #[test]
    fn weibull_censor_probability_agrees_with_monte_carlo() {
        let hazard = BaselineHazard::Weibull {
            lambda: 0.6,
            rho: 1.8,
        };
        let dist = CensorDist::Exponential { rate: 0.5 };
        let analytic = censor_probability(&hazard, 1.3, dist);
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let n = 200_000;
        let mut hits = 0;
        for _ in 0..n {
            let t = weibull_inverse_sample(open_unit(&mut rng), 0.6 * 1.3, 1.8).unwrap();
            let c = exponential_inverse_sample(open_unit(&mut rng), 0.5).unwrap();
            if c < t {
                hits += 1;
            }
        }
        let mc = hits as f64 / n as f64;
        assert!(
            (analytic - mc).abs() < 0.005,
            "quadrature {analytic} vs monte carlo {mc}"
        );
    }

    #[test]
    fn breslow_baseline_rejected() {
        let params = ModelParams {
            hazard: Some(BaselineHazard::Breslow { steps: vec![] }),
            ..sim_params(vec![0.0, 0.0], BaselineHazard::Exponential { lambda: 1.0 })
        };
        assert!(matches!(
            generate_corpus(&params, 5, 5, CensorDist::None, 0).unwrap_err(),
            Error::Unsupported(_)
        ));
    }

    #[test]
    fn truth_file_round_trips_shape() {
        let params = sim_params(vec![0.2, 0.0], BaselineHazard::Exponential { lambda: 1.0 });
        let (_, truth) = generate_corpus(&params, 8, 6, CensorDist::None, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.json");
        save_truth(&truth, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["format"], "survlda-sim-truth");
        assert_eq!(parsed["theta_true"].as_array().unwrap().len(), 8);
        assert_eq!(parsed["tau"].as_array().unwrap().len(), 2);
        assert_eq!(parsed["hazard"]["family"], "exponential");
    }
}
