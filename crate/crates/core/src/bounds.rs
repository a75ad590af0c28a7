//! Tail bounds and sample-size thresholds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bernstein::{gamma_for_epsilon, GammaCertificate, GammaMethod};
use crate::error::{Error, Result};
use crate::priors::ConditionPPrior;
use crate::special::{ceil_snap, poisson_cdf};

/// Minimum slack required in the `(β, c')` feasibility inequality.
pub const FEASIBILITY_MARGIN: f64 = 1e-9;

fn unit_interval(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {x} must lie in (0, 1)")))
    }
}

/// `e^((1-c)d)`: bounds `P(S_n/n >= cp + d/n)` and `P(S_n/n <= p/c - d/n)`.
pub fn chernoff_bound(c: f64, d: f64) -> Result<f64> {
    if !(c > 1.0 && c < 2.0) {
        return Err(Error::InvalidParameter(format!("c = {c} must lie in (1, 2)")));
    }
    if !(d > 0.0) {
        return Err(Error::InvalidParameter(format!("d = {d} must be positive")));
    }
    Ok(((1.0 - c) * d).exp())
}

/// `(c'/c)^(c'd/(c'+1))`.
pub fn lemma3_bound(c: f64, c_prime: f64, d: f64) -> Result<f64> {
    if !(c_prime > 0.0 && c_prime < c) {
        return Err(Error::InvalidParameter(format!("c' = {c_prime} must lie in (0, c = {c})")));
    }
    if !(d > 0.0) {
        return Err(Error::InvalidParameter(format!("d = {d} must be positive")));
    }
    Ok((c_prime / c).powf(c_prime * d / (c_prime + 1.0)))
}

/// Least `ν >= 1` with `P(W_ν <= M) < ε/2` for Poisson `W_ν`.
pub fn lemma4_n0(m: f64, epsilon: f64) -> Result<u64> {
    unit_interval("epsilon", epsilon)?;
    if !m.is_finite() {
        return Err(Error::InvalidParameter(format!("M = {m} must be finite")));
    }
    let half = epsilon / 2.0;
    let ok = |nu: u64| poisson_cdf(nu as f64, m) < half;
    if ok(1) {
        return Ok(1);
    }
    let mut lo = 1u64;
    let mut hi = 2u64;
    while !ok(hi) {
        lo = hi;
        hi = hi.checked_mul(2).ok_or_else(|| Error::SearchCap("Poisson threshold overflow".into()))?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `N = ⌈2N₀/ε⌉`: `P_p(S_n <= M) <= ε` whenever `np >= N`.
pub fn lemma4_threshold(m: f64, epsilon: f64) -> Result<u64> {
    let n0 = lemma4_n0(m, epsilon)?;
    Ok(ceil_snap(2.0 * n0 as f64 / epsilon) as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem1Method {
    Remark3pp,
    MarkovUniform,
}

/// Sample-size threshold for single-die concentration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Threshold {
    #[serde(rename = "N")]
    pub n: u64,
    pub epsilon: f64,
    pub gamma: f64,
    pub method: Theorem1Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
}

/// `N = ⌈8ε⁻³ + 3γε⁻¹⌉` with `c = 1 + ε/4`, `δ = ε/5`, `d = 3ε⁻²`.
///
/// The certificate must cover the bracket at `ε/5`; use
/// [`theorem1_threshold_for_prior`] to obtain one.
pub fn theorem1_threshold(epsilon: f64, certificate: &GammaCertificate) -> Result<Theorem1Threshold> {
    unit_interval("epsilon", epsilon)?;
    let needed = epsilon / 5.0;
    let matches = match certificate.method {
        GammaMethod::DirichletExact => true,
        _ => (certificate.epsilon - needed).abs() <= 1e-12 * needed.max(1.0) || certificate.epsilon < needed,
    };
    if !matches {
        return Err(Error::Certificate(format!(
            "threshold at epsilon = {epsilon} needs a certificate at epsilon/5 = {needed}, got {}",
            certificate.epsilon
        )));
    }
    remark3pp_threshold(epsilon, certificate.gamma)
}

/// The same threshold for a `γ` the caller has already certified at `ε/5`.
pub fn remark3pp_threshold(epsilon: f64, gamma: f64) -> Result<Theorem1Threshold> {
    unit_interval("epsilon", epsilon)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma = {gamma} must be positive")));
    }
    let n = ceil_snap(8.0 / epsilon.powi(3) + 3.0 * gamma / epsilon);
    Ok(Theorem1Threshold {
        n: n as u64,
        epsilon,
        gamma,
        method: Theorem1Method::Remark3pp,
        c: Some(1.0 + epsilon / 4.0),
        delta: Some(epsilon / 5.0),
        d: Some(3.0 / (epsilon * epsilon)),
    })
}

/// Requests the certificate at `ε/5` and returns the threshold.
pub fn theorem1_threshold_for_prior(
    epsilon: f64,
    prior: &ConditionPPrior,
    grid_resolution: usize,
) -> Result<(Theorem1Threshold, GammaCertificate)> {
    unit_interval("epsilon", epsilon)?;
    let cert = gamma_for_epsilon(prior, epsilon / 5.0, grid_resolution)?;
    Ok((theorem1_threshold(epsilon, &cert)?, cert))
}

/// Uniform prior on the 2-simplex: Markov's inequality gives `N = ⌈2ε⁻³⌉`.
pub fn markov_uniform_threshold(epsilon: f64) -> Result<Theorem1Threshold> {
    unit_interval("epsilon", epsilon)?;
    Ok(Theorem1Threshold {
        n: ceil_snap(2.0 / epsilon.powi(3)) as u64,
        epsilon,
        gamma: 2.0,
        method: Theorem1Method::MarkovUniform,
        c: None,
        delta: None,
        d: None,
    })
}

/// Mean squared error of `(X+1)/(n+2)` for `X ~ Binomial(n, p)`:
/// `[np(1-p) + (1-2p)²] / (n+2)²`.
pub fn mse_uniform(n: u64, p: f64) -> f64 {
    let nf = n as f64;
    (nf * p * (1.0 - p) + (1.0 - 2.0 * p).powi(2)) / (nf + 2.0).powi(2)
}

/// Constants of the two-dice monotonicity threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Constants {
    pub c: f64,
    pub delta: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub beta: f64,
    pub c_prime: f64,
    pub d: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "N1")]
    pub n1: u64,
    #[serde(rename = "N2")]
    pub n2: u64,
    #[serde(rename = "N")]
    pub n: u64,
    /// `(1-β)/((1+β)(1-δ)) - c/c' - δ`.
    pub feasibility_margin: f64,
}

impl Theorem2Constants {
    /// Rechecks the defining inequalities.
    pub fn verify(&self) -> Result<()> {
        let margin = feasibility(self.beta, self.c, self.c_prime, self.delta);
        if !(margin >= FEASIBILITY_MARGIN) {
            return Err(Error::Infeasible(format!("margin {margin} below {FEASIBILITY_MARGIN}")));
        }
        if lemma3_bound(self.c, self.c_prime, self.d)? > self.epsilon / 2.0 {
            return Err(Error::Infeasible("lemma 3 bound exceeds epsilon/2".into()));
        }
        let m = 3.0 * self.c * (self.d + self.gamma) / (self.delta * self.eta);
        let n1 = ceil_snap(2.0 * self.c * self.gamma / (self.c_prime * self.delta)) as u64;
        if m != self.m || n1 != self.n1 || self.n != self.n1.max(self.n2) {
            return Err(Error::Infeasible("constant chain is inconsistent".into()));
        }
        Ok(())
    }
}

fn feasibility(beta: f64, c: f64, c_prime: f64, delta: f64) -> f64 {
    (1.0 - beta) / ((1.0 + beta) * (1.0 - delta)) - c / c_prime - delta
}

/// Least `d` with `(c'/c)^(c'd/(c'+1)) <= ε/2`, from the closed form and
/// nudged upward if rounding leaves the bound just above `ε/2`.
pub fn theorem2_d(c: f64, c_prime: f64, epsilon: f64) -> Result<f64> {
    let mut d = (c_prime + 1.0) * (2.0 / epsilon).ln() / (c_prime * (c / c_prime).ln());
    while lemma3_bound(c, c_prime, d)? > epsilon / 2.0 {
        d = d + d * f64::EPSILON;
    }
    Ok(d)
}

/// The chain `(β, c', d, M, N₁, N₂, N)` behind the two-dice threshold.
///
/// `(β, c')` range over the grids `β = 0.01 i`, `c' = c(1 - 0.01 j)`. Only
/// `β` at or above the certificate's `ε` is usable, since the bracket with
/// parameter `β` must be certified. Of the feasible pairs, the one with the
/// smallest `N` wins, ties going to the smaller `β` and then the larger `c'`.
/// If the grid has no feasible pair it is refined to step 0.001 once.
pub fn theorem2_constants(
    c: f64,
    delta: f64,
    eta: f64,
    epsilon: f64,
    certificate: &GammaCertificate,
) -> Result<Theorem2Constants> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("c = {c} must be positive")));
    }
    unit_interval("delta", delta)?;
    unit_interval("eta", eta)?;
    unit_interval("epsilon", epsilon)?;
    let beta_min = certificate.effective_epsilon();
    for step in [0.01, 0.001] {
        if let Some(found) = search(c, delta, eta, epsilon, certificate.gamma, beta_min, step)? {
            found.verify()?;
            return Ok(found);
        }
    }
    Err(Error::Infeasible(format!(
        "c = {c}, delta = {delta}, certificate epsilon = {beta_min}: no grid point satisfies the feasibility inequality"
    )))
}

fn search(
    c: f64,
    delta: f64,
    eta: f64,
    epsilon: f64,
    gamma: f64,
    beta_min: f64,
    step: f64,
) -> Result<Option<Theorem2Constants>> {
    let count = (1.0 / step).round() as usize;
    // Smallest usable β; feasibility only gets harder as β grows.
    let beta = match (1..count).map(|i| i as f64 * step).find(|&b| b >= beta_min - 1e-12) {
        Some(b) => b,
        None => return Ok(None),
    };
    let candidates: Vec<f64> = (1..count)
        .map(|j| c * (1.0 - j as f64 * step))
        .filter(|&cp| feasibility(beta, c, cp, delta) >= FEASIBILITY_MARGIN)
        .collect();
    let chains: Vec<Result<Theorem2Constants>> = candidates
        .par_iter()
        .map(|&c_prime| {
            let d = theorem2_d(c, c_prime, epsilon)?;
            let m = 3.0 * c * (d + gamma) / (delta * eta);
            let n1 = ceil_snap(2.0 * c * gamma / (c_prime * delta)) as u64;
            let n2 = lemma4_threshold(m, epsilon / 2.0)?;
            Ok(Theorem2Constants {
                c,
                delta,
                eta,
                epsilon,
                gamma,
                beta,
                c_prime,
                d,
                m,
                n1,
                n2,
                n: n1.max(n2),
                feasibility_margin: feasibility(beta, c, c_prime, delta),
            })
        })
        .collect();
    let mut best: Option<Theorem2Constants> = None;
    for chain in chains {
        let chain = chain?;
        if best.as_ref().is_none_or(|b| chain.n < b.n) {
            best = Some(chain);
        }
    }
    Ok(best)
}

/// Threshold for random die choice with blue probability `μ_B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corollary1Threshold {
    pub mu_b: f64,
    /// `min(μ_B, 1-μ_B)/2`, the `η` handed to the deterministic chain.
    pub eta: f64,
    /// Half-width `t` of the window `|B_n/n - μ_B| < t`.
    pub t: f64,
    /// Chebyshev sample size for `P(|B_n/n - μ_B| >= t) <= ε/2`.
    #[serde(rename = "N1_prime")]
    pub n1_prime: u64,
    /// Deterministic chain at `ε/2`.
    pub theorem2: Theorem2Constants,
    #[serde(rename = "N")]
    pub n: u64,
}

/// With `η = t = min(μ_B, 1-μ_B)/2`, outside an event of probability `ε/2`
/// the blue share lies in `(μ_B - t, μ_B + t)`, so `b_n/n <= 1 - η` and
/// `b_n p >= η n p`; the deterministic chain then runs at `ε/2`.
pub fn corollary1_threshold(
    mu_b: f64,
    c: f64,
    delta: f64,
    epsilon: f64,
    certificate: &GammaCertificate,
) -> Result<Corollary1Threshold> {
    unit_interval("mu_B", mu_b)?;
    unit_interval("epsilon", epsilon)?;
    let eta = mu_b.min(1.0 - mu_b) / 2.0;
    let t = eta;
    let n1_prime = ceil_snap(2.0 * mu_b * (1.0 - mu_b) / (epsilon * t * t)) as u64;
    let theorem2 = theorem2_constants(c, delta, eta, epsilon / 2.0, certificate)?;
    let n2_scaled = ceil_snap(theorem2.n as f64 / eta) as u64;
    Ok(Corollary1Threshold { mu_b, eta, t, n1_prime, n: n1_prime.max(n2_scaled), theorem2 })
}

/// Combines the certificates of two priors into one that serves both: the
/// larger `γ` and the larger `ε`. Exponents are taken from `first`.
pub fn combine_certificates(first: &GammaCertificate, second: &GammaCertificate) -> GammaCertificate {
    let both_exact = first.method == GammaMethod::DirichletExact && second.method == GammaMethod::DirichletExact;
    let (method, epsilon) = if both_exact {
        (GammaMethod::DirichletExact, first.epsilon.max(second.epsilon))
    } else {
        let method = if first.method != GammaMethod::DirichletExact { first.method } else { second.method };
        (method, first.effective_epsilon().max(second.effective_epsilon()))
    };
    GammaCertificate {
        gamma: first.gamma.max(second.gamma),
        epsilon,
        m_used: first.m_used.max(second.m_used),
        sup_error_estimate: None,
        method,
        alpha: first.alpha.clone(),
        tilde_pi_min: None,
        grid_based: first.grid_based || second.grid_based,
    }
}
