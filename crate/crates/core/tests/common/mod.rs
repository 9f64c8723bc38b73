//! Independent oracles for the integration suite. Everything here is
//! deliberately written from first principles (rising factorials,
//! quadrature, textbook estimators) rather than calling into the crate,
//! so the tests check the library against outside ground truth.

#![allow(dead_code)]

use survlda::survival::BaselineHazard;

/// E[Π_k θ_k^{n_k}] under θ ~ Dirichlet(α), via rising factorials:
/// Π_k α_k^{(n_k)} / A^{(N)} with A = Σα. Exact for integer counts; no
/// gamma-function evaluation involved.
pub fn dirichlet_moment(alpha: &[f64], counts: &[usize]) -> f64 {
    let a_total: f64 = alpha.iter().sum();
    let n_total: usize = counts.iter().sum();
    let mut num = 1.0;
    for (&a, &n) in alpha.iter().zip(counts) {
        for i in 0..n {
            num *= a + i as f64;
        }
    }
    let mut den = 1.0;
    for i in 0..n_total {
        den *= a_total + i as f64;
    }
    num / den
}

/// The same moment for K=2 by numeric integration, as a cross-check on
/// `dirichlet_moment`: E[θ^{n1}(1−θ)^{n2}] = B(a1+n1, a2+n2)/B(a1, a2),
/// each beta function integrated by tanh-sinh (double-exponential)
/// quadrature, which absorbs the θ^{a−1} endpoint singularities for
/// a < 1. Everything is evaluated in log space so the far nodes cannot
/// overflow.
pub fn dirichlet_moment_quadrature(a1: f64, a2: f64, n1: usize, n2: usize) -> f64 {
    fn beta_fn(x: f64, y: f64) -> f64 {
        // θ(t) = σ(2s), s = (π/2)·sinh t; w(t) = (π/2)·cosh t / cosh² s.
        let t_max = 4.0;
        let n = 1024usize;
        let h = 2.0 * t_max / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let t = -t_max + i as f64 * h;
            let s = std::f64::consts::FRAC_PI_2 * t.sinh();
            let ln_theta = -(-2.0 * s).exp().ln_1p();
            let ln_one_minus = -(2.0 * s).exp().ln_1p();
            let ln_w = (std::f64::consts::FRAC_PI_2 * t.cosh()).ln() - 2.0 * s.cosh().ln();
            total += ((x - 1.0) * ln_theta + (y - 1.0) * ln_one_minus + ln_w).exp();
        }
        total * h
    }
    beta_fn(a1 + n1 as f64, a2 + n2 as f64) / beta_fn(a1, a2)
}

/// Survival parameters entering the exact evidence.
pub struct SurvPart<'a> {
    pub time: f64,
    pub event: bool,
    pub beta: &'a [f64],
    pub hazard: &'a BaselineHazard,
}

/// Exact log evidence log p(W [, T, δ]) by summing over every topic
/// assignment vector (K^N terms): each term is the Dirichlet moment of
/// the assignment counts times Π_j τ[z_j][w_j], times the survival
/// density at the empirical proportions z̄ when `surv` is given.
pub fn brute_force_log_evidence(
    tokens: &[usize],
    alpha: &[f64],
    tau: &[Vec<f64>],
    surv: Option<&SurvPart>,
) -> f64 {
    let k = alpha.len();
    let n = tokens.len();
    let total_assignments = k.pow(n as u32);
    let mut terms = Vec::with_capacity(total_assignments.max(1));
    let mut z = vec![0usize; n];
    for code in 0..total_assignments.max(1) {
        let mut c = code;
        for zj in z.iter_mut() {
            *zj = c % k;
            c /= k;
        }
        let mut counts = vec![0usize; k];
        let mut log_words = 0.0;
        for (&zj, &wj) in z.iter().zip(tokens) {
            counts[zj] += 1;
            log_words += tau[zj][wj].ln();
        }
        let mut log_term = dirichlet_moment(alpha, &counts).ln() + log_words;
        if let Some(s) = surv {
            let z_bar: Vec<f64> = counts.iter().map(|&c| c as f64 / n.max(1) as f64).collect();
            let lp: f64 = s.beta.iter().zip(&z_bar).map(|(b, zb)| b * zb).sum();
            let cum = s.hazard.cumulative_at(s.time);
            if s.event {
                log_term += s.hazard.hazard_at(s.time).ln() + lp;
            }
            log_term -= cum * lp.exp();
        }
        terms.push(log_term);
    }
    // log-sum-exp, written out locally.
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Textbook product-limit estimator with unit weights: at each distinct
/// event time, S ← S · (1 − d/n) with n the plain count still at risk.
pub fn classical_km(times: &[f64], events: &[bool]) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap());
    let mut curve = Vec::new();
    let mut s = 1.0;
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let mut deaths = 0usize;
        let mut j = i;
        while j < order.len() && times[order[j]] == t {
            if events[order[j]] {
                deaths += 1;
            }
            j += 1;
        }
        if deaths > 0 {
            let at_risk = order.len() - i;
            s *= 1.0 - deaths as f64 / at_risk as f64;
            curve.push((t, s));
        }
        i = j;
    }
    curve
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_fd<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let up = f(&xp);
        xp[i] = x[i] - h;
        let down = f(&xp);
        xp[i] = x[i];
        grad.push((up - down) / (2.0 * h));
    }
    grad
}

/// One-sample Kolmogorov-Smirnov p-value against a continuous CDF, using
/// the asymptotic distribution with the small-sample correction
/// λ = (√n + 0.12 + 0.11/√n)·D.
pub fn ks_p_value(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let c = cdf(x);
        d = d.max((c - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - c).abs());
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        p += sign * 2.0 * (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sign = -sign;
    }
    p.clamp(0.0, 1.0)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..k {
            let mut q: Vec<usize> = p.iter().map(|&x| x + 1).collect();
            q.insert(pos, 0);
            out.push(q);
        }
    }
    out
}

/// The row matching `perm` (fitted row perm[k] ↔ reference row k) that
/// maximizes total cosine similarity, with the per-row similarities.
pub fn best_row_matching(fitted: &[Vec<f64>], reference: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    let k = reference.len();
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    for perm in permutations(k) {
        let sims: Vec<f64> = (0..k)
            .map(|i| cosine(&fitted[perm[i]], &reference[i]))
            .collect();
        let total: f64 = sims.iter().sum();
        if best.as_ref().is_none_or(|(bt, _, _)| total > *bt) {
            best = Some((total, perm, sims));
        }
    }
    let (_, perm, sims) = best.unwrap();
    (perm, sims)
}
