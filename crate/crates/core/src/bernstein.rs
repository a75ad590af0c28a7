//! Bernstein polynomial approximation of `π̃` and the bracketing constant `γ`.
//!
//! For a degree `m`, the approximation is
//!
//! ```text
//! h_m(p) = Σ_{|ν| = m} c_ν ∏ p_i^ν_i,    c_ν = π̃(ν / m) · m! / ∏ ν_i!
//! ```
//!
//! Once `sup |h_m - π̃| <= min π̃ / (1 + 2/ε)`, the posterior-mean bracket
//! holds with `γ = m + Σα`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::{ConditionPPrior, DirichletMixturePrior, Prior};
use crate::simplex::{lattice, lattice_size};
use crate::special::{ceil_snap, ln_multinomial, log_sum_exp};

/// Largest coefficient table built before giving up.
pub const COEFFICIENT_BUDGET: u128 = 5_000_000;

/// Degree cap for [`gamma_for_epsilon`].
pub const DEFAULT_DEGREE_CAP: u32 = 1 << 16;

/// Smallest grid used by [`sup_error`].
pub const MIN_SUP_GRID: usize = 256;

#[derive(Debug, Clone)]
pub struct BernsteinApprox {
    dim: usize,
    degree: u32,
    indices: Vec<Vec<u32>>,
    log_coeffs: Vec<f64>,
}

impl BernsteinApprox {
    /// Fits an arbitrary function of the `K` coordinates. Zero values give
    /// coefficients of `-inf` in log space.
    pub fn fit_fn(k: usize, m: u32, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("need K >= 2, got {k}")));
        }
        let needed = lattice_size(k, m as usize);
        if needed > COEFFICIENT_BUDGET {
            return Err(Error::CoefficientBudget { needed, budget: COEFFICIENT_BUDGET });
        }
        let indices = lattice(k, m);
        let scale = m.max(1) as f64;
        let log_coeffs = indices
            .par_iter()
            .map(|nu| {
                let p: Vec<f64> = if m == 0 {
                    vec![1.0 / k as f64; k]
                } else {
                    nu.iter().map(|&v| v as f64 / scale).collect()
                };
                f(&p).ln() + ln_multinomial(nu)
            })
            .collect();
        Ok(Self { dim: k, degree: m, indices, log_coeffs })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.log_coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_coeffs.is_empty()
    }

    /// `(ν, ln c_ν)` pairs.
    pub fn coefficients(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.indices.iter().map(Vec::as_slice).zip(self.log_coeffs.iter().copied())
    }

    /// `ln h_m(p)`.
    pub fn ln_eval(&self, p: &[f64]) -> f64 {
        let ln_p: Vec<f64> = p.iter().map(|x| x.ln()).collect();
        let terms: Vec<f64> = self
            .indices
            .iter()
            .zip(&self.log_coeffs)
            .map(|(nu, &lc)| {
                let mut t = lc;
                for (&v, &lp) in nu.iter().zip(&ln_p) {
                    if v > 0 {
                        t += v as f64 * lp;
                    }
                }
                t
            })
            .collect();
        log_sum_exp(&terms)
    }

    /// `h_m(p)`.
    pub fn eval(&self, p: &[f64]) -> f64 {
        self.ln_eval(p).exp()
    }
}

/// Fits `π̃` of the prior at degree `m`.
pub fn bernstein_fit(prior: &ConditionPPrior, m: u32) -> Result<BernsteinApprox> {
    BernsteinApprox::fit_fn(prior.dim(), m, |p| prior.tilde_pi_at(p))
}

/// `max |h_m - π̃|` over the lattice of the given resolution (at least
/// [`MIN_SUP_GRID`]). A grid estimate, not a certified supremum.
pub fn sup_error(prior: &ConditionPPrior, approx: &BernsteinApprox, grid_resolution: usize) -> f64 {
    sup_error_fn(|p| prior.tilde_pi_at(p), approx, grid_resolution)
}

pub(crate) fn sup_error_fn(f: impl Fn(&[f64]) -> f64 + Sync, approx: &BernsteinApprox, grid_resolution: usize) -> f64 {
    let res = grid_resolution.max(MIN_SUP_GRID) as u32;
    let scale = res as f64;
    lattice(approx.dim(), res)
        .par_iter()
        .map(|nu| {
            let p: Vec<f64> = nu.iter().map(|&v| v as f64 / scale).collect();
            (approx.eval(&p) - f(&p)).abs()
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GammaMethod {
    #[serde(rename = "bernstein_search")]
    BernsteinSearch,
    #[serde(rename = "remark3prime")]
    Remark3Prime,
    #[serde(rename = "dirichlet_exact")]
    DirichletExact,
    #[serde(rename = "mixture_box")]
    MixtureBox,
}

/// A bracketing constant `γ` together with the `ε` it certifies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaCertificate {
    pub gamma: f64,
    pub epsilon: f64,
    pub m_used: u64,
    pub sup_error_estimate: Option<f64>,
    pub method: GammaMethod,
    /// Exponents the lower bracket uses.
    pub alpha: Vec<f64>,
    pub tilde_pi_min: Option<f64>,
    /// True when the certificate rests on a finite-grid estimate.
    pub grid_based: bool,
}

impl GammaCertificate {
    /// Dirichlet(α): the bracket holds with `γ = Σα` for every `ε >= 0`.
    pub fn dirichlet_exact(alpha: &[f64], epsilon: f64) -> Self {
        Self {
            gamma: alpha.iter().sum(),
            epsilon,
            m_used: 0,
            sup_error_estimate: Some(0.0),
            method: GammaMethod::DirichletExact,
            alpha: alpha.to_vec(),
            tilde_pi_min: None,
            grid_based: false,
        }
    }

    /// The `ε` at which the bracket actually holds: zero for Dirichlet priors.
    pub fn effective_epsilon(&self) -> f64 {
        match self.method {
            GammaMethod::DirichletExact => 0.0,
            _ => self.epsilon,
        }
    }

    /// Whether the certificate covers the bracket at `epsilon`.
    pub fn covers(&self, epsilon: f64) -> bool {
        self.effective_epsilon() <= epsilon + 1e-12
    }
}

/// Least Bernstein degree meeting the stopping rule, found by doubling from
/// `m = 1` and then bisecting. Returns `γ = m + Σα`.
///
/// Dirichlet priors (constant `π̃`) short-circuit to `m = 0`.
pub fn gamma_for_epsilon(prior: &ConditionPPrior, epsilon: f64, grid_resolution: usize) -> Result<GammaCertificate> {
    gamma_for_epsilon_capped(prior, epsilon, grid_resolution, DEFAULT_DEGREE_CAP)
}

pub fn gamma_for_epsilon_capped(
    prior: &ConditionPPrior,
    epsilon: f64,
    grid_resolution: usize,
    degree_cap: u32,
) -> Result<GammaCertificate> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must lie in (0, 1)")));
    }
    if prior.is_dirichlet() {
        return Ok(GammaCertificate::dirichlet_exact(prior.alpha(), epsilon));
    }
    let target = stopping_target(prior, epsilon);
    let check = |m: u32| -> Result<(bool, f64)> {
        let approx = bernstein_fit(prior, m)?;
        let err = sup_error(prior, &approx, grid_resolution);
        Ok((err <= target, err))
    };

    let mut lo = 0u32; // largest degree known to fail (0 is never tried)
    let mut hi = 1u32;
    let mut hi_err;
    loop {
        let (ok, err) = check(hi)?;
        if ok {
            hi_err = err;
            break;
        }
        if hi >= degree_cap {
            return Err(Error::TooRough { cap: degree_cap as usize });
        }
        lo = hi;
        hi = (hi * 2).min(degree_cap);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let (ok, err) = check(mid)?;
        if ok {
            hi = mid;
            hi_err = err;
        } else {
            lo = mid;
        }
    }
    Ok(GammaCertificate {
        gamma: hi as f64 + prior.alpha_sum(),
        epsilon,
        m_used: hi as u64,
        sup_error_estimate: Some(hi_err),
        method: GammaMethod::BernsteinSearch,
        alpha: prior.alpha().to_vec(),
        tilde_pi_min: Some(prior.tilde_pi_min()),
        grid_based: true,
    })
}

/// Right-hand side of the stopping rule, `π̃₀ / (1 + 2/ε)`, with the grid
/// safety factor applied when `π̃₀` is an estimate.
pub fn stopping_target(prior: &ConditionPPrior, epsilon: f64) -> f64 {
    prior.tilde_pi_min_for_bounds() / (1.0 + 2.0 / epsilon)
}

/// Closed-form `γ = α₁ + α₂ + ⌈(5/4)(1 + 2/ε) · max|φ'| / min φ⌉²` for
/// `K = 2`, where `φ(x) = π̃(x, 1 - x)`. The caller supplies the two
/// analytic constants.
pub fn gamma_remark3prime(
    prior: &ConditionPPrior,
    epsilon: f64,
    max_abs_phi_prime: f64,
    min_phi: f64,
) -> Result<GammaCertificate> {
    if prior.dim() != 2 {
        return Err(Error::UnsupportedDimension { k: prior.dim(), reason: "closed-form gamma needs K = 2".into() });
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must lie in (0, 1]")));
    }
    if !(min_phi > 0.0 && min_phi.is_finite()) {
        return Err(Error::InvalidParameter(format!("min phi = {min_phi} must be positive")));
    }
    if !(max_abs_phi_prime >= 0.0 && max_abs_phi_prime.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "max |phi'| = {max_abs_phi_prime} must be finite and nonnegative"
        )));
    }
    let root = ceil_snap(1.25 * (1.0 + 2.0 / epsilon) * max_abs_phi_prime / min_phi);
    let m = root * root;
    Ok(GammaCertificate {
        gamma: prior.alpha_sum() + m,
        epsilon,
        m_used: m as u64,
        sup_error_estimate: None,
        method: GammaMethod::Remark3Prime,
        alpha: prior.alpha().to_vec(),
        tilde_pi_min: Some(min_phi),
        grid_based: false,
    })
}

/// Certificate from the mixture bounds `(n_k+a)/(n+KA) <= p̂_k <= (n_k+A)/(n+Ka)`:
/// the bracket holds with `α_k = a`, `γ = K·A` whenever `ε >= A/a - 1`.
pub fn gamma_mixture_box(prior: &DirichletMixturePrior, epsilon: f64) -> Result<GammaCertificate> {
    let (a, big_a) = prior.effective_box();
    if !(a > 0.0) {
        return Err(Error::Certificate("mixture box needs a > 0".into()));
    }
    let needed = big_a / a - 1.0;
    if epsilon < needed {
        return Err(Error::Certificate(format!(
            "mixture box [{a}, {big_a}] certifies epsilon >= {needed}, requested {epsilon}"
        )));
    }
    let k = prior.dim();
    Ok(GammaCertificate {
        gamma: k as f64 * big_a,
        epsilon,
        m_used: 0,
        sup_error_estimate: None,
        method: GammaMethod::MixtureBox,
        alpha: vec![a; k],
        tilde_pi_min: None,
        grid_based: false,
    })
}

/// Certificate for any supported prior: the exact route for Dirichlet
/// priors, the mixture box when it covers `ε`, the degree search otherwise.
pub fn certificate_for_prior(prior: &Prior, epsilon: f64, grid_resolution: usize) -> Result<GammaCertificate> {
    match prior {
        Prior::ConditionP(c) => gamma_for_epsilon(c, epsilon, grid_resolution),
        Prior::Mixture(m) => match gamma_mixture_box(m, epsilon) {
            Ok(cert) => Ok(cert),
            Err(_) => gamma_for_epsilon(&m.as_condition_p()?, epsilon, grid_resolution),
        },
        Prior::BoundaryFailure(_) => Err(Error::NotConditionP(
            "exponential boundary decay: exp(-1/p_1) has no power-law exponent".into(),
        )),
    }
}
