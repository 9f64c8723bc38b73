//! Baseline-hazard families, the survival part of the M-step objective with
//! analytic gradients, (β, hazard) optimization, and weighted Kaplan-Meier
//! estimation.
//!
//! Throughout, document i contributes
//!   δ_i·log h₀(T_i) + δ_i·β′φ̄_i − H₀(T_i)·Π_j exp(β/N_i)′φ_ij
//! to the objective, where φ̄_i are the document's mean topic
//! responsibilities and the product runs over its words.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{minimize, BfgsOptions};

/// Times are compared after rounding to this grid so that ties survive
/// float noise.
const TIME_GRID: f64 = 1e-9;

fn canonical_time(t: f64) -> f64 {
    (t / TIME_GRID).round() * TIME_GRID
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HazardFamily {
    Exponential,
    Weibull,
    Breslow,
}

impl std::fmt::Display for HazardFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HazardFamily::Exponential => "exponential",
            HazardFamily::Weibull => "weibull",
            HazardFamily::Breslow => "breslow",
        })
    }
}

impl std::str::FromStr for HazardFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exponential" => Ok(HazardFamily::Exponential),
            "weibull" => Ok(HazardFamily::Weibull),
            "breslow" => Ok(HazardFamily::Breslow),
            _ => Err(Error::config(format!(
                "unknown hazard family {s:?} (expected exponential, weibull, or breslow)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreslowStep {
    pub time: f64,
    pub hazard: f64,
    /// Length of the interval (t_{r−1}, t_r] this hazard applies to.
    pub interval: f64,
}

/// Baseline hazard h₀. Exponential: H₀(t) = λt. Weibull: h₀(t) = λρt^{ρ−1},
/// H₀(t) = λt^ρ (so exponential is exactly ρ = 1). Breslow: piecewise
/// constant hazard between ordered event times, zero beyond the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum BaselineHazard {
    Exponential { lambda: f64 },
    Weibull { lambda: f64, rho: f64 },
    Breslow { steps: Vec<BreslowStep> },
}

impl BaselineHazard {
    pub fn family(&self) -> HazardFamily {
        match self {
            BaselineHazard::Exponential { .. } => HazardFamily::Exponential,
            BaselineHazard::Weibull { .. } => HazardFamily::Weibull,
            BaselineHazard::Breslow { .. } => HazardFamily::Breslow,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BaselineHazard::Exponential { lambda } => {
                if !(*lambda > 0.0) {
                    return Err(Error::validation("exponential rate must be positive"));
                }
            }
            BaselineHazard::Weibull { lambda, rho } => {
                if !(*lambda > 0.0) || !(*rho > 0.0) {
                    return Err(Error::validation(
                        "Weibull scale and shape must be positive",
                    ));
                }
            }
            BaselineHazard::Breslow { steps } => {
                let mut prev = 0.0;
                for s in steps {
                    if s.time <= prev {
                        return Err(Error::validation(
                            "Breslow times must be strictly increasing",
                        ));
                    }
                    if s.hazard < 0.0 || (s.interval - (s.time - prev)).abs() > 1e-6 {
                        return Err(Error::validation("inconsistent Breslow step"));
                    }
                    prev = s.time;
                }
            }
        }
        Ok(())
    }

    /// Instantaneous hazard h₀(t).
    pub fn hazard_at(&self, t: f64) -> f64 {
        match self {
            BaselineHazard::Exponential { lambda } => *lambda,
            BaselineHazard::Weibull { lambda, rho } => lambda * rho * t.powf(rho - 1.0),
            BaselineHazard::Breslow { steps } => {
                let tc = canonical_time(t);
                let mut prev = 0.0;
                for s in steps {
                    if tc > prev && tc <= s.time {
                        return s.hazard;
                    }
                    prev = s.time;
                }
                0.0 // beyond the last event time
            }
        }
    }

    /// Cumulative hazard H₀(t) = ∫₀ᵗ h₀.
    pub fn cumulative_at(&self, t: f64) -> f64 {
        match self {
            BaselineHazard::Exponential { lambda } => lambda * t,
            BaselineHazard::Weibull { lambda, rho } => lambda * t.powf(*rho),
            BaselineHazard::Breslow { steps } => {
                let tc = canonical_time(t);
                let mut acc = 0.0;
                let mut prev = 0.0;
                for s in steps {
                    if tc <= prev {
                        break;
                    }
                    acc += s.hazard * (tc.min(s.time) - prev);
                    prev = s.time;
                }
                acc
            }
        }
    }
}

pub(crate) fn parse_float_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("bad number {p:?} in {s:?}")))
        })
        .collect()
}

/// Parses `"exponential:RATE"` or `"weibull:SCALE,SHAPE"`. Step-function
/// hazards have no closed parameter list and cannot be written this way.
impl std::str::FromStr for BaselineHazard {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (family, params) = s
            .split_once(':')
            .ok_or_else(|| Error::config(format!("hazard spec {s:?} needs FAMILY:PARAMS")))?;
        let nums = parse_float_list(params)?;
        match (family, nums.as_slice()) {
            ("exponential", [lambda]) => Ok(BaselineHazard::Exponential { lambda: *lambda }),
            ("weibull", [lambda, rho]) => Ok(BaselineHazard::Weibull {
                lambda: *lambda,
                rho: *rho,
            }),
            _ => Err(Error::config(format!(
                "hazard spec {s:?}: expected exponential:RATE or weibull:SCALE,SHAPE"
            ))),
        }
    }
}

/// Per-document quantities the survival M-step consumes: mean
/// responsibilities φ̄_i, the word-level responsibilities φ_ij (needed to
/// evaluate Π_j exp(β/N_i)′φ_ij at any β), and the outcomes.
#[derive(Debug, Clone)]
pub struct SurvivalDesign {
    pub phi_bars: Vec<Vec<f64>>,
    pub phis: Vec<Vec<Vec<f64>>>,
    pub times: Vec<f64>,
    pub events: Vec<bool>,
}

impl SurvivalDesign {
    pub fn n_docs(&self) -> usize {
        self.times.len()
    }

    pub fn n_topics(&self) -> usize {
        self.phi_bars.first().map_or(0, Vec::len)
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.times.len();
        if self.events.len() != d || self.phi_bars.len() != d || self.phis.len() != d {
            return Err(Error::validation("survival design lengths disagree"));
        }
        let k = self.n_topics();
        for (i, pb) in self.phi_bars.iter().enumerate() {
            if pb.len() != k {
                return Err(Error::validation("ragged phi_bar rows"));
            }
            if self.phis[i].is_empty() {
                return Err(Error::Validation(format!(
                    "document {i} has no words; it cannot enter the survival design"
                )));
            }
            if !(self.times[i] > 0.0) {
                return Err(Error::validation("nonpositive survival time"));
            }
        }
        Ok(())
    }

    /// log Π_j exp(β/N_i)′φ_ij for document `i`.
    fn log_word_product(&self, i: usize, beta: &[f64]) -> f64 {
        let n_i = self.phis[i].len() as f64;
        let eb: Vec<f64> = beta.iter().map(|&b| (b / n_i).exp()).collect();
        let mut acc = 0.0;
        for phi_j in &self.phis[i] {
            let a: f64 = phi_j.iter().zip(&eb).map(|(&p, &e)| p * e).sum();
            acc += a.ln();
        }
        acc
    }
}

/// Value of the survival M-step objective at (β, hazard).
pub fn survival_mstep_objective(
    beta: &[f64],
    hazard: &BaselineHazard,
    design: &SurvivalDesign,
) -> Result<f64> {
    let mut obj = 0.0;
    for i in 0..design.n_docs() {
        let t = design.times[i];
        let cum = hazard.cumulative_at(t);
        let prod = design.log_word_product(i, beta).exp();
        if design.events[i] {
            let h = hazard.hazard_at(t);
            if h <= 0.0 {
                return Err(Error::Numerical(format!(
                    "zero baseline hazard at event time {t}"
                )));
            }
            let lin: f64 = beta
                .iter()
                .zip(&design.phi_bars[i])
                .map(|(&b, &p)| b * p)
                .sum();
            obj += h.ln() + lin;
        }
        obj -= cum * prod;
    }
    if !obj.is_finite() {
        return Err(Error::numerical("survival objective is not finite"));
    }
    Ok(obj)
}

/// Analytic gradient of [`survival_mstep_objective`] in β.
pub fn survival_mstep_gradient_beta(
    beta: &[f64],
    hazard: &BaselineHazard,
    design: &SurvivalDesign,
) -> Vec<f64> {
    let k = beta.len();
    let mut grad = vec![0.0; k];
    for i in 0..design.n_docs() {
        let n_i = design.phis[i].len() as f64;
        let cum = hazard.cumulative_at(design.times[i]);
        if design.events[i] {
            for (g, &p) in grad.iter_mut().zip(&design.phi_bars[i]) {
                *g += p;
            }
        }
        if cum == 0.0 {
            continue;
        }
        let eb: Vec<f64> = beta.iter().map(|&b| (b / n_i).exp()).collect();
        let a_vals: Vec<f64> = design.phis[i]
            .iter()
            .map(|phi_j| phi_j.iter().zip(&eb).map(|(&p, &e)| p * e).sum())
            .collect();
        let prod = a_vals.iter().map(|a| a.ln()).sum::<f64>().exp();
        // d/dβ_k log Π_j a_ij = Σ_j (1/N_i)·e^{β_k/N_i}·φ_ijk / a_ij
        for (phi_j, &a) in design.phis[i].iter().zip(&a_vals) {
            let scale = cum * prod / (a * n_i);
            for (kk, g) in grad.iter_mut().enumerate() {
                *g -= scale * eb[kk] * phi_j[kk];
            }
        }
    }
    grad
}

#[derive(Debug, Clone, Default)]
pub struct ParametricOptions {
    /// β coordinates held at exactly 0 (the background / reference topic).
    pub pinned: Vec<usize>,
    /// Fixes the Weibull shape ρ at the given value instead of fitting it.
    pub fix_shape: Option<f64>,
    pub bfgs: BfgsOptions,
}

fn assemble_beta(k: usize, free: &[usize], x: &[f64]) -> Vec<f64> {
    let mut beta = vec![0.0; k];
    for (slot, &idx) in free.iter().enumerate() {
        beta[idx] = x[slot];
    }
    beta
}

/// Maximizes the objective over free β coordinates and the hazard
/// parameters (log λ, and log ρ for Weibull) jointly by quasi-Newton
/// ascent. Pinned β coordinates stay at 0. The returned objective is never
/// below the initialization's.
pub fn optimize_parametric(
    design: &SurvivalDesign,
    family: HazardFamily,
    beta_init: &[f64],
    hazard_init: &BaselineHazard,
    opts: &ParametricOptions,
) -> Result<(Vec<f64>, BaselineHazard)> {
    design.validate()?;
    if design.n_events() == 0 {
        return Err(Error::DegenerateData(
            "no observed events: the hazard scale is unbounded toward 0".into(),
        ));
    }
    let k = design.n_topics();
    let mut pinned = opts.pinned.clone();
    if pinned.is_empty() && k >= 2 {
        // β is confounded with the baseline level when φ̄ rows live on the
        // simplex; anchor the last topic and say so.
        log::warn!(
            "no reference topic designated; anchoring beta[{}] = 0",
            k - 1
        );
        pinned.push(k - 1);
    }
    let free: Vec<usize> = (0..k).filter(|i| !pinned.contains(i)).collect();

    let (lam0, rho0) = match hazard_init {
        BaselineHazard::Exponential { lambda } => (*lambda, 1.0),
        BaselineHazard::Weibull { lambda, rho } => (*lambda, *rho),
        BaselineHazard::Breslow { .. } => {
            return Err(Error::Unsupported(
                "parametric optimization needs an exponential or Weibull start".into(),
            ))
        }
    };
    let fit_shape = family == HazardFamily::Weibull && opts.fix_shape.is_none();
    let fixed_rho = match family {
        HazardFamily::Exponential => 1.0,
        HazardFamily::Weibull => opts.fix_shape.unwrap_or(rho0),
        HazardFamily::Breslow => {
            return Err(Error::Unsupported(
                "use optimize_breslow for the Breslow family".into(),
            ))
        }
    };

    // Parameter vector: free β, then log λ, then log ρ when fitted.
    let mut x0: Vec<f64> = free.iter().map(|&i| beta_init[i]).collect();
    x0.push(lam0.max(1e-12).ln());
    if fit_shape {
        x0.push(rho0.max(1e-12).ln());
    }

    let unpack = |x: &[f64]| -> (Vec<f64>, f64, f64) {
        let beta = assemble_beta(k, &free, x);
        let lambda = x[free.len()].exp();
        let rho = if fit_shape {
            x[free.len() + 1].exp()
        } else {
            fixed_rho
        };
        (beta, lambda, rho)
    };

    let n_events = design.n_events() as f64;
    let objective = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
        let (beta, lambda, rho) = unpack(x);
        if !lambda.is_finite() || !rho.is_finite() || lambda <= 0.0 || rho <= 0.0 {
            return None;
        }
        let hazard = BaselineHazard::Weibull { lambda, rho };
        let value = survival_mstep_objective(&beta, &hazard, design).ok()?;
        let grad_beta = survival_mstep_gradient_beta(&beta, &hazard, design);

        // Hazard-parameter gradients in log space.
        let mut d_loglam = n_events;
        let mut d_logrho = 0.0;
        for i in 0..design.n_docs() {
            let t = design.times[i];
            let prod = design.log_word_product(i, &beta).exp();
            let tpow = t.powf(rho);
            d_loglam -= lambda * tpow * prod;
            if fit_shape {
                if design.events[i] {
                    d_logrho += 1.0 + rho * t.ln();
                }
                d_logrho -= rho * lambda * tpow * t.ln() * prod;
            }
        }

        let mut g: Vec<f64> = free.iter().map(|&i| -grad_beta[i]).collect();
        g.push(-d_loglam);
        if fit_shape {
            g.push(-d_logrho);
        }
        Some((-value, g))
    };

    let init_value = objective(&x0).map(|(v, _)| v);
    let result = minimize(objective, &x0, &opts.bfgs)?;
    // Guard the monotonicity promise even if a perturbed restart won.
    let x = match init_value {
        Some(v0) if result.value > v0 => x0,
        _ => result.x,
    };
    let (beta, lambda, rho) = unpack(&x);
    let hazard = match family {
        HazardFamily::Exponential => BaselineHazard::Exponential { lambda },
        HazardFamily::Weibull => BaselineHazard::Weibull { lambda, rho },
        HazardFamily::Breslow => unreachable!(),
    };
    Ok((beta, hazard))
}

/// Breslow estimate of the piecewise-constant baseline hazard at `beta`:
/// h_r = m_r / [(t_r − t_{r−1}) · Σ_{j ∈ R_r} exp(β′φ̄_j)] for each distinct
/// event time t_r, with R_r the patients still at risk at t_r. Censoring
/// times create no step.
pub fn breslow_update(beta: &[f64], design: &SurvivalDesign) -> Result<BaselineHazard> {
    let d = design.n_docs();
    let mut order: Vec<usize> = (0..d).collect();
    let tc: Vec<f64> = design.times.iter().map(|&t| canonical_time(t)).collect();
    order.sort_by(|&a, &b| tc[a].partial_cmp(&tc[b]).unwrap());

    let risk: Vec<f64> = (0..d)
        .map(|i| {
            design.phi_bars[i]
                .iter()
                .zip(beta)
                .map(|(&p, &b)| p * b)
                .sum::<f64>()
                .exp()
        })
        .collect();

    // Risk-set totals as true suffix sums (no running subtraction, which
    // cancels catastrophically when risks span many orders of magnitude).
    let mut suffix = vec![0.0; d + 1];
    for i in (0..d).rev() {
        suffix[i] = suffix[i + 1] + risk[order[i]];
    }

    let mut steps = Vec::new();
    let mut prev_time = 0.0;
    let mut at = 0;
    while at < d {
        let t_r = tc[order[at]];
        // All patients tied at this canonical time.
        let mut m_r = 0u32;
        let mut next = at;
        while next < d && tc[order[next]] == t_r {
            if design.events[order[next]] {
                m_r += 1;
            }
            next += 1;
        }
        if m_r > 0 {
            if suffix[at] <= 0.0 {
                return Err(Error::DegenerateData(format!(
                    "empty risk set at event time {t_r}"
                )));
            }
            steps.push(BreslowStep {
                time: t_r,
                hazard: m_r as f64 / ((t_r - prev_time) * suffix[at]),
                interval: t_r - prev_time,
            });
            prev_time = t_r;
        }
        at = next;
    }
    Ok(BaselineHazard::Breslow { steps })
}

/// Largest allowed |β_k| during the step-function alternation: e^30 ≈ 10¹³
/// as a relative risk is already far past anything interpretable.
const BETA_BOX: f64 = 30.0;

/// Alternates β ascent (at fixed hazard) with Breslow hazard refreshes
/// until the objective's relative change drops below 1e−8 (at most 100
/// rounds).
pub fn optimize_breslow(
    design: &SurvivalDesign,
    beta_init: &[f64],
    opts: &ParametricOptions,
) -> Result<(Vec<f64>, BaselineHazard)> {
    design.validate()?;
    if design.n_events() == 0 {
        return Err(Error::DegenerateData("no observed events".into()));
    }
    let k = design.n_topics();
    let mut pinned = opts.pinned.clone();
    if pinned.is_empty() && k >= 2 {
        log::warn!(
            "no reference topic designated; anchoring beta[{}] = 0",
            k - 1
        );
        pinned.push(k - 1);
    }
    let free: Vec<usize> = (0..k).filter(|i| !pinned.contains(i)).collect();

    let mut beta = assemble_beta(
        k,
        &free,
        &free.iter().map(|&i| beta_init[i]).collect::<Vec<_>>(),
    );
    let mut hazard = breslow_update(&beta, design)?;
    let mut prev_obj = survival_mstep_objective(&beta, &hazard, design)?;

    for _ in 0..100 {
        if !free.is_empty() {
            let h = hazard.clone();
            let objective = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
                let b = assemble_beta(k, &free, x);
                let value = survival_mstep_objective(&b, &h, design).ok()?;
                let grad = survival_mstep_gradient_beta(&b, &h, design);
                Some((-value, free.iter().map(|&i| -grad[i]).collect()))
            };
            let x0: Vec<f64> = free.iter().map(|&i| beta[i]).collect();
            let m = minimize(objective, &x0, &opts.bfgs)?;
            // Separated data sends the profile objective off to infinity in
            // β; a wide box keeps every risk weight strictly positive.
            let boxed: Vec<f64> = m.x.iter().map(|&x| x.clamp(-BETA_BOX, BETA_BOX)).collect();
            if boxed != m.x {
                log::warn!(
                    "survival coefficients hit the ±{BETA_BOX} bound; \
                     the data may be separable"
                );
            }
            let cand = assemble_beta(k, &free, &boxed);
            // Keep the β step only if it did not lose ground at fixed h₀.
            if survival_mstep_objective(&cand, &hazard, design)?
                >= survival_mstep_objective(&beta, &hazard, design)?
            {
                beta = cand;
            }
        }
        hazard = breslow_update(&beta, design)?;
        let obj = survival_mstep_objective(&beta, &hazard, design)?;
        let done = (obj - prev_obj).abs() <= 1e-8 * (1.0 + prev_obj.abs());
        prev_obj = obj;
        if done {
            break;
        }
    }
    Ok((beta, hazard))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMPoint {
    pub time: f64,
    pub survival: f64,
    /// Effective (weighted) number at risk just before this time.
    pub at_risk: f64,
}

/// Product-limit survival curve; the first point is (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMCurve {
    pub points: Vec<KMPoint>,
    pub weights_used: f64,
}

impl KMCurve {
    /// Two-column tab-separated (time, survival) text for plotting.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("time\tsurvival\n");
        for p in &self.points {
            out.push_str(&format!("{}\t{}\n", p.time, p.survival));
        }
        out
    }

    pub fn write_tsv(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(self.to_tsv().as_bytes())
    }

    /// Survival probability at time `t` (right-continuous step function).
    pub fn survival_at(&self, t: f64) -> f64 {
        let mut s = 1.0;
        for p in &self.points {
            if p.time <= t {
                s = p.survival;
            } else {
                break;
            }
        }
        s
    }
}

/// Kaplan-Meier estimator with fractional patient weights: death counts
/// and at-risk totals are weight sums, so a patient with weight 0.5 counts
/// as half a person. Unit weights give the classical estimator.
pub fn weighted_km(times: &[f64], events: &[bool], weights: &[f64]) -> Result<KMCurve> {
    let d = times.len();
    if events.len() != d || weights.len() != d {
        return Err(Error::validation("times/events/weights lengths disagree"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::validation("weights must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateData(
            "all weights are zero; the curve is empty".into(),
        ));
    }

    let mut order: Vec<usize> = (0..d).collect();
    let tc: Vec<f64> = times.iter().map(|&t| canonical_time(t)).collect();
    order.sort_by(|&a, &b| tc[a].partial_cmp(&tc[b]).unwrap());

    let mut points = vec![KMPoint {
        time: 0.0,
        survival: 1.0,
        at_risk: total,
    }];
    let mut at_risk = total;
    let mut surv = 1.0;
    let mut at = 0;
    while at < d {
        let t_r = tc[order[at]];
        let mut deaths = 0.0;
        let mut leaving = 0.0;
        let mut next = at;
        while next < d && tc[order[next]] == t_r {
            let i = order[next];
            if events[i] {
                deaths += weights[i];
            }
            leaving += weights[i];
            next += 1;
        }
        if deaths > 0.0 {
            surv *= 1.0 - deaths / at_risk;
            points.push(KMPoint {
                time: t_r,
                survival: surv,
                at_risk,
            });
        }
        at_risk -= leaving;
        at = next;
    }
    Ok(KMCurve {
        points,
        weights_used: total,
    })
}
