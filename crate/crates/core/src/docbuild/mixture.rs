//! Univariate Gaussian mixture fits used to barcode features as
//! extreme/non-extreme.
//!
//! For each feature we fit a one-component and a two-component
//! unequal-variance Gaussian model by EM and compare them with BIC. When
//! the two-component model wins, patients whose posterior probability of
//! the minor component exceeds a threshold are called "extreme" for that
//! feature.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::math::{ln_normal_pdf, logsumexp, mean, quantile};

const EM_MAX_ITERS: usize = 500;
const EM_TOL: f64 = 1e-8;
const N_RANDOM_RESTARTS: usize = 5;
const MIN_VALUES: usize = 10;

/// One- and two-component Gaussian fits for a single feature.
///
/// Component 1 is the major component, component 2 the minor one
/// (`pi_minor` ≤ 0.5 by relabeling; ties broken toward the component whose
/// mean is farther from the overall mean).
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureFit {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub pi_minor: f64,
    pub loglik_1comp: f64,
    pub loglik_2comp: f64,
    pub bic_1comp: f64,
    pub bic_2comp: f64,
    pub n: usize,
}

/// True iff BIC prefers the two-component model (ties keep the simpler one).
pub fn is_multimodal(fit: &MixtureFit) -> bool {
    fit.bic_2comp < fit.bic_1comp
}

/// Posterior probability that `value` belongs to the minor component.
pub fn minor_posterior(fit: &MixtureFit, value: f64) -> f64 {
    let l_major =
        (1.0 - fit.pi_minor).ln() + ln_normal_pdf(value, fit.mu1, fit.sigma1 * fit.sigma1);
    let l_minor = fit.pi_minor.ln() + ln_normal_pdf(value, fit.mu2, fit.sigma2 * fit.sigma2);
    (l_minor - logsumexp(&[l_major, l_minor])).exp()
}

/// True iff the minor-component posterior of `value` exceeds `threshold`.
/// Requires a multimodal fit.
pub fn assign_extreme(fit: &MixtureFit, value: f64, threshold: f64) -> Result<bool> {
    if !is_multimodal(fit) {
        return Err(Error::validation(
            "assign_extreme requires a fit where the two-component model is preferred",
        ));
    }
    Ok(minor_posterior(fit, value) > threshold)
}

#[derive(Debug, Clone, Copy)]
struct TwoComp {
    pi2: f64,
    mu1: f64,
    mu2: f64,
    var1: f64,
    var2: f64,
}

struct EmRun {
    params: TwoComp,
    loglik: f64,
    /// A variance ended clamped at the floor; such runs are used only if
    /// nothing better converged.
    floored: bool,
}

fn em_two_component(values: &[f64], init: TwoComp, var_floor: f64) -> Option<EmRun> {
    let n = values.len() as f64;
    let mut p = init;
    let mut prev_ll = f64::NEG_INFINITY;
    let mut resp2 = vec![0.0; values.len()];
    let mut floored = false;

    for _ in 0..EM_MAX_ITERS {
        // E-step: responsibilities of the second component, in log space.
        let mut ll = 0.0;
        for (i, &x) in values.iter().enumerate() {
            let l1 = (1.0 - p.pi2).ln() + ln_normal_pdf(x, p.mu1, p.var1);
            let l2 = p.pi2.ln() + ln_normal_pdf(x, p.mu2, p.var2);
            let lse = logsumexp(&[l1, l2]);
            resp2[i] = (l2 - lse).exp();
            ll += lse;
        }

        // M-step.
        let n2: f64 = resp2.iter().sum();
        let n1 = n - n2;
        if n1 < 1e-10 || n2 < 1e-10 {
            return None; // a component lost all its weight
        }
        let mu1 = values
            .iter()
            .zip(&resp2)
            .map(|(&x, &r)| (1.0 - r) * x)
            .sum::<f64>()
            / n1;
        let mu2 = values.iter().zip(&resp2).map(|(&x, &r)| r * x).sum::<f64>() / n2;
        let var1 = values
            .iter()
            .zip(&resp2)
            .map(|(&x, &r)| (1.0 - r) * (x - mu1) * (x - mu1))
            .sum::<f64>()
            / n1;
        let var2 = values
            .iter()
            .zip(&resp2)
            .map(|(&x, &r)| r * (x - mu2) * (x - mu2))
            .sum::<f64>()
            / n2;
        floored = var1 < var_floor || var2 < var_floor;
        p = TwoComp {
            pi2: n2 / n,
            mu1,
            mu2,
            var1: var1.max(var_floor),
            var2: var2.max(var_floor),
        };

        if (ll - prev_ll).abs() < EM_TOL * (1.0 + ll.abs()) {
            break;
        }
        prev_ll = ll;
    }

    // Final log-likelihood at the returned parameters.
    let loglik = values
        .iter()
        .map(|&x| {
            logsumexp(&[
                (1.0 - p.pi2).ln() + ln_normal_pdf(x, p.mu1, p.var1),
                p.pi2.ln() + ln_normal_pdf(x, p.mu2, p.var2),
            ])
        })
        .sum();
    Some(EmRun {
        params: p,
        loglik,
        floored,
    })
}

/// Fits one- and two-component Gaussian models to `values` and scores both
/// with BIC (−2·loglik + p·ln n, p = 2 or 5). The two-component EM starts
/// from a quantile initialization plus five seeded random restarts and
/// keeps the best converged run.
pub fn fit_two_component_mixture(values: &[f64], seed: u64) -> Result<MixtureFit> {
    if values.len() < MIN_VALUES {
        return Err(Error::InsufficientData(format!(
            "mixture fit needs at least {MIN_VALUES} values, got {}",
            values.len()
        )));
    }
    let n = values.len();
    let overall_mean = mean(values);
    let overall_var = values
        .iter()
        .map(|&x| (x - overall_mean) * (x - overall_mean))
        .sum::<f64>()
        / n as f64;
    if overall_var == 0.0 {
        return Err(Error::DegenerateData(
            "all values identical; no mixture structure to fit".into(),
        ));
    }

    // One-component maximum likelihood fit.
    let loglik_1comp = -0.5 * n as f64 * ((2.0 * std::f64::consts::PI * overall_var).ln() + 1.0);

    let var_floor = overall_var * 1e-6;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut inits = vec![TwoComp {
        pi2: 0.5,
        mu1: quantile(&sorted, 0.25),
        mu2: quantile(&sorted, 0.75),
        var1: overall_var,
        var2: overall_var,
    }];
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    for _ in 0..N_RANDOM_RESTARTS {
        inits.push(TwoComp {
            pi2: rng.random_range(0.2..0.8),
            mu1: values[rng.random_range(0..n)],
            mu2: values[rng.random_range(0..n)],
            var1: overall_var,
            var2: overall_var,
        });
    }

    let mut best: Option<EmRun> = None;
    for init in inits {
        if let Some(run) = em_two_component(values, init, var_floor) {
            let better = match &best {
                None => true,
                // Prefer un-floored runs; among equals, higher likelihood.
                Some(b) => {
                    (b.floored && !run.floored)
                        || (b.floored == run.floored && run.loglik > b.loglik)
                }
            };
            if better {
                best = Some(run);
            }
        }
    }
    let best = best
        .ok_or_else(|| Error::numerical("two-component EM collapsed from every initialization"))?;

    let p = best.params;
    // Relabel so component 2 is the minor one.
    let (maj, min) = {
        let c1 = (p.mu1, p.var1, 1.0 - p.pi2);
        let c2 = (p.mu2, p.var2, p.pi2);
        if (c1.2 - c2.2).abs() < 1e-12 {
            // Equal weights: the component farther from the overall mean is minor.
            if (c1.0 - overall_mean).abs() > (c2.0 - overall_mean).abs() {
                (c2, c1)
            } else {
                (c1, c2)
            }
        } else if c1.2 < c2.2 {
            (c2, c1)
        } else {
            (c1, c2)
        }
    };

    let ln_n = (n as f64).ln();
    Ok(MixtureFit {
        mu1: maj.0,
        mu2: min.0,
        sigma1: maj.1.sqrt(),
        sigma2: min.1.sqrt(),
        pi_minor: min.2,
        loglik_1comp,
        loglik_2comp: best.loglik,
        bic_1comp: -2.0 * loglik_1comp + 2.0 * ln_n,
        bic_2comp: -2.0 * best.loglik + 5.0 * ln_n,
        n,
    })
}
