//! Posterior means of multinomial probabilities and the brackets around them.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::bernstein::GammaCertificate;
use crate::error::{Error, Result};
use crate::priors::{induce_two_sided, BoundaryFailurePrior, DirichletMixturePrior, Prior};
use crate::quadrature::{beta_weighted, QuadratureSpec};
use crate::special::{ln_multi_beta, log_sum_exp};

/// Ratio error above which a quadrature mean is flagged.
pub const QUADRATURE_FLAG_THRESHOLD: f64 = 1e-9;

/// Outcome tallies `(n_1, ..., n_K)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct Counts {
    tallies: Vec<u64>,
}

impl Counts {
    pub fn new(tallies: Vec<u64>) -> Result<Self> {
        if tallies.len() < 2 {
            return Err(Error::InvalidParameter(format!("need K >= 2 tallies, got {}", tallies.len())));
        }
        Ok(Self { tallies })
    }

    pub fn binary(n1: u64, n2: u64) -> Self {
        Self { tallies: vec![n1, n2] }
    }

    pub fn tallies(&self) -> &[u64] {
        &self.tallies
    }

    pub fn get(&self, k: usize) -> u64 {
        self.tallies[k]
    }

    pub fn n(&self) -> u64 {
        self.tallies.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.tallies.len()
    }
}

impl TryFrom<Vec<u64>> for Counts {
    type Error = Error;
    fn try_from(v: Vec<u64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Counts> for Vec<u64> {
    fn from(c: Counts) -> Self {
        c.tallies
    }
}

fn check_side(counts: &Counts, k: usize, dim: usize) -> Result<()> {
    if counts.dim() != dim {
        return Err(Error::InvalidParameter(format!("counts have K = {}, prior has K = {dim}", counts.dim())));
    }
    if k >= dim {
        return Err(Error::InvalidParameter(format!("side {k} out of range for K = {dim}")));
    }
    Ok(())
}

/// `(n_k + α_k) / (n + Σα)`.
pub fn mean_dirichlet(alpha: &[f64], counts: &Counts, k: usize) -> Result<f64> {
    check_side(counts, k, alpha.len())?;
    if let Some(a) = alpha.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::InvalidParameter(format!("exponent {a} must be positive")));
    }
    let total: f64 = alpha.iter().sum();
    Ok((counts.get(k) as f64 + alpha[k]) / (counts.n() as f64 + total))
}

/// Exact posterior mean under a Dirichlet mixture: components are reweighted
/// by their marginal likelihoods `B(θ + n) / B(θ)`.
pub fn mean_mixture(prior: &DirichletMixturePrior, counts: &Counts, k: usize) -> Result<f64> {
    check_side(counts, k, prior.dim())?;
    let n = counts.n() as f64;
    let mut log_w = Vec::with_capacity(prior.weights().len());
    let mut means = Vec::with_capacity(prior.weights().len());
    for (w, theta) in prior.weights().iter().zip(prior.params()) {
        let post: Vec<f64> = theta.iter().zip(counts.tallies()).map(|(t, &c)| t + c as f64).collect();
        log_w.push(w.ln() + ln_multi_beta(&post) - ln_multi_beta(theta));
        means.push((counts.get(k) as f64 + theta[k]) / (n + theta.iter().sum::<f64>()));
    }
    let norm = log_sum_exp(&log_w);
    Ok(log_w.iter().zip(&means).map(|(lw, m)| (lw - norm).exp() * m).sum())
}

/// A posterior mean obtained by numerical integration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureMean {
    pub mean: f64,
    pub error_estimate: f64,
    /// Set when the error estimate exceeds [`QUADRATURE_FLAG_THRESHOLD`] or
    /// an integral did not converge.
    pub flagged: bool,
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub caveat: Option<String>,
}

/// Posterior mean of `p_k` as a ratio of two integrals.
///
/// Generic priors are integrated for `K = 2`. For `K > 2` the prior is first
/// reduced to the two-sided prior of `(p_k, 1 - p_k)`; for non-Dirichlet
/// priors that estimate can differ from the full-dimensional one, which the
/// result records as a caveat. Mixtures use their closed form.
pub fn mean_quadrature(prior: &Prior, counts: &Counts, k: usize, spec: &QuadratureSpec) -> Result<QuadratureMean> {
    check_side(counts, k, prior.dim())?;
    match prior {
        Prior::Mixture(m) => Ok(QuadratureMean {
            mean: mean_mixture(m, counts, k)?,
            error_estimate: 0.0,
            flagged: false,
            method: "closed_form_mixture".into(),
            caveat: None,
        }),
        Prior::BoundaryFailure(_) => {
            let (a, b) = exponents(&[1.0, 1.0], counts, k);
            let log_g = |x: f64| BoundaryFailurePrior::ln_kernel_at(if k == 0 { x } else { 1.0 - x });
            binary_mean(&log_g, a, b, spec, "quadrature")
        }
        Prior::ConditionP(c) if c.dim() == 2 => {
            let (a, b) = exponents(c.alpha(), counts, k);
            let log_g = |x: f64| {
                let p = [x, 1.0 - x];
                c.tilde_pi_at(&if k == 0 { p } else { [p[1], p[0]] }).ln()
            };
            binary_mean(&log_g, a, b, spec, "quadrature")
        }
        Prior::ConditionP(c) => {
            let reduced = induce_two_sided(c, k, spec)?;
            let merged = Counts::binary(counts.get(k), counts.n() - counts.get(k));
            let mut out = mean_quadrature(&Prior::ConditionP(reduced), &merged, 0, spec)?;
            out.method = "quadrature_two_sided_reduction".into();
            if !c.is_dirichlet() {
                out.caveat = Some(
                    "reduced to the induced two-sided prior; for non-Dirichlet priors this estimate \
                     can differ from the full-dimensional posterior mean"
                        .into(),
                );
            }
            Ok(out)
        }
    }
}

/// Exponents `(a, b)` of `x^a (1-x)^b` in the denominator integral for side `k`
/// with `x = p_k`, after merging the other sides.
fn exponents(alpha: &[f64], counts: &Counts, k: usize) -> (f64, f64) {
    let a = counts.get(k) as f64 + alpha[k] - 1.0;
    let rest_n = (counts.n() - counts.get(k)) as f64;
    let rest_alpha: f64 = alpha.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, a)| a).sum();
    (a, rest_n + rest_alpha - 1.0)
}

/// `∫x^(a+1)(1-x)^b g / ∫x^a(1-x)^b g` with `g = exp(log_g)`.
fn binary_mean(
    log_g: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
    method: &str,
) -> Result<QuadratureMean> {
    let layout = Layout::new(log_g, a, b);
    let den = beta_weighted(log_g, a, b, layout.shift, &layout.points, spec);
    let num = beta_weighted(log_g, a + 1.0, b, layout.shift, &layout.points, spec);
    if !(den.value > 0.0) || !den.value.is_finite() || !num.value.is_finite() {
        return Err(Error::Quadrature { value: num.value / den.value, error: f64::INFINITY });
    }
    let mean = num.value / den.value;
    let error = mean.abs() * (num.error / num.value.abs().max(f64::MIN_POSITIVE) + den.error / den.value);
    Ok(QuadratureMean {
        mean,
        error_estimate: error,
        flagged: error > QUADRATURE_FLAG_THRESHOLD || !num.converged || !den.converged,
        method: method.into(),
        caveat: None,
    })
}

/// Breakpoints and log-scale shift for a beta-type integrand.
struct Layout {
    shift: f64,
    points: Vec<f64>,
}

impl Layout {
    /// Locates the peak of `max(a,0)·ln x + max(b,0)·ln(1-x) + log_g(x)`; the
    /// negative power factors are left to the endpoint substitution.
    fn new(log_g: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Self {
        let ap = a.max(0.0);
        let bp = b.max(0.0);
        let regular = |x: f64| {
            let mut v = log_g(x);
            if ap > 0.0 {
                v += ap * x.ln();
            }
            if bp > 0.0 {
                v += bp * (-x).ln_1p();
            }
            if v.is_nan() {
                f64::NEG_INFINITY
            } else {
                v
            }
        };
        // Coarse scan in logit space, then golden-section refinement.
        let sigmoid = |t: f64| 1.0 / (1.0 + (-t).exp());
        let steps = 400;
        let (t_lo, t_hi) = (-36.0, 36.0);
        let dt = (t_hi - t_lo) / steps as f64;
        let mut best_i = 0;
        let mut best_v = f64::NEG_INFINITY;
        for i in 0..=steps {
            let v = regular(sigmoid(t_lo + i as f64 * dt));
            if v > best_v {
                best_v = v;
                best_i = i;
            }
        }
        let mut lo = t_lo + (best_i.max(1) - 1) as f64 * dt;
        let mut hi = t_lo + (best_i + 1).min(steps) as f64 * dt;
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..80 {
            let m1 = hi - phi * (hi - lo);
            let m2 = lo + phi * (hi - lo);
            if regular(sigmoid(m1)) >= regular(sigmoid(m2)) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let mut mode = sigmoid(0.5 * (lo + hi));
        let mut peak = regular(mode);
        if best_v > peak {
            mode = sigmoid(t_lo + best_i as f64 * dt);
            peak = best_v;
        }
        if !peak.is_finite() {
            return Self { shift: 0.0, points: vec![0.5] };
        }
        let drop = peak - 0.5;
        let half_drop = |toward: f64| {
            // Distance from the mode to where the log drops by 0.5.
            if regular(toward) >= drop {
                return (toward - mode).abs();
            }
            let (mut inside, mut outside) = (mode, toward);
            for _ in 0..200 {
                let mid = 0.5 * (inside + outside);
                if regular(mid) >= drop {
                    inside = mid;
                } else {
                    outside = mid;
                }
            }
            (outside - mode).abs()
        };
        let s_left = half_drop(0.0);
        let s_right = half_drop(1.0);
        let mut points = vec![mode];
        for f in [1.0, 3.0, 6.0, 12.0, 24.0, 48.0] {
            points.push(mode - f * s_left);
            points.push(mode + f * s_right);
        }
        points.retain(|&x| x > 0.0 && x < 1.0);
        points.sort_by(f64::total_cmp);
        points.dedup();
        if points.is_empty() {
            points.push(0.5);
        }
        Self { shift: peak, points }
    }
}

/// Memoized posterior means for Monte Carlo loops, keyed by counts.
#[derive(Debug)]
pub struct QuadratureCache {
    prior: Prior,
    k: usize,
    spec: QuadratureSpec,
    table: Mutex<HashMap<Counts, f64>>,
}

impl QuadratureCache {
    pub fn new(prior: Prior, k: usize, spec: QuadratureSpec) -> Self {
        Self { prior, k, spec, table: Mutex::new(HashMap::new()) }
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn mean(&self, counts: &Counts) -> Result<f64> {
        if let Some(v) = self.table.lock().expect("cache lock").get(counts) {
            return Ok(*v);
        }
        let q = mean_quadrature(&self.prior, counts, self.k, &self.spec)?;
        if q.flagged {
            return Err(Error::Quadrature { value: q.mean, error: q.error_estimate });
        }
        self.table.lock().expect("cache lock").insert(counts.clone(), q.mean);
        Ok(q.mean)
    }

    pub fn len(&self) -> usize {
        self.table.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Posterior mean by the cheapest exact path the prior allows.
pub fn posterior_mean(prior: &Prior, counts: &Counts, k: usize, spec: &QuadratureSpec) -> Result<QuadratureMean> {
    if let Some(alpha) = prior.dirichlet_alpha() {
        return Ok(QuadratureMean {
            mean: mean_dirichlet(alpha, counts, k)?,
            error_estimate: 0.0,
            flagged: false,
            method: "closed_form_dirichlet".into(),
            caveat: None,
        });
    }
    mean_quadrature(prior, counts, k, spec)
}

/// Lower and upper bounds on a posterior mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorBracket {
    pub lower: f64,
    pub upper: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub k: usize,
}

impl PosteriorBracket {
    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lower - tol && x <= self.upper + tol
    }
}

/// `[(1-ε)(n_k+α_k)/(n+γ), (1+ε)(n_k+γ)/(n+γ)]`.
///
/// Dirichlet certificates use `ε = 0`, where the lower end is the exact mean.
pub fn bracket(certificate: &GammaCertificate, counts: &Counts, k: usize) -> Result<PosteriorBracket> {
    check_side(counts, k, certificate.alpha.len())?;
    let eps = certificate.effective_epsilon();
    let gamma = certificate.gamma;
    let n = counts.n() as f64;
    let nk = counts.get(k) as f64;
    Ok(PosteriorBracket {
        lower: (1.0 - eps) * (nk + certificate.alpha[k]) / (n + gamma),
        upper: (1.0 + eps) * (nk + gamma) / (n + gamma),
        gamma,
        epsilon: eps,
        k,
    })
}

/// `[(n_k+a)/(n+KA), (n_k+A)/(n+Ka)]` for mixtures whose parameters lie in
/// `[a, A]^K`. The upper end may exceed one and is returned unclipped.
pub fn mixture_bracket(a: f64, big_a: f64, counts: &Counts, k: usize) -> Result<(f64, f64)> {
    if !(0.0 <= a && a <= big_a && big_a.is_finite()) {
        return Err(Error::InvalidParameter(format!("box [{a}, {big_a}] is invalid")));
    }
    check_side(counts, k, counts.dim())?;
    let kk = counts.dim() as f64;
    let n = counts.n() as f64;
    let nk = counts.get(k) as f64;
    Ok(((nk + a) / (n + kk * big_a), (nk + big_a) / (n + kk * a)))
}

/// `1 / (8 √max(1, n))`: a lower bound on `p̂_1` under the prior
/// `∝ exp(-1/p_1)`, for every count vector with `n` observations.
pub fn lemma2_lower_bound(n: u64) -> f64 {
    1.0 / (8.0 * (n.max(1) as f64).sqrt())
}

/// Posterior odds of blue versus red: `μ_B p̂ / ((1 - μ_B) q̂)`.
pub fn odds_ratio(mu_b: f64, p_hat_kbar: f64, q_hat_kbar: f64) -> Result<f64> {
    if !(mu_b > 0.0 && mu_b < 1.0) {
        return Err(Error::InvalidParameter(format!("mu_B = {mu_b} must lie in (0, 1)")));
    }
    if !(q_hat_kbar > 0.0) {
        return Err(Error::InvalidParameter(format!("red posterior mean {q_hat_kbar} must be positive")));
    }
    Ok(mu_b * p_hat_kbar / ((1.0 - mu_b) * q_hat_kbar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::{ConditionPPrior, TildePi};
    use approx::assert_relative_eq;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn dirichlet_closed_form() {
        assert_eq!(mean_dirichlet(&[1.0, 1.0], &Counts::binary(1, 1), 0).unwrap(), 0.5);
        for x in 0..=20u64 {
            let m = mean_dirichlet(&[1.0, 1.0], &Counts::binary(x, 20 - x), 0).unwrap();
            assert_eq!(m, (x as f64 + 1.0) / 22.0);
        }
        let j = 3.0;
        let m = mean_dirichlet(&[j, 1.0], &Counts::binary(5, 7), 0).unwrap();
        assert_relative_eq!(m, (5.0 + j) / (12.0 + j + 1.0), epsilon = 1e-15);
    }

    #[test]
    fn mixture_cases() {
        let single = DirichletMixturePrior::new(vec![1.0], vec![vec![2.0, 3.0]], None).unwrap();
        let c = Counts::binary(4, 9);
        assert_relative_eq!(
            mean_mixture(&single, &c, 0).unwrap(),
            mean_dirichlet(&[2.0, 3.0], &c, 0).unwrap(),
            epsilon = 1e-15
        );
        let sym = DirichletMixturePrior::new(vec![0.5, 0.5], vec![vec![1.0, 1.0], vec![2.0, 2.0]], None).unwrap();
        assert_relative_eq!(mean_mixture(&sym, &Counts::binary(0, 0), 0).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        let u = Prior::dirichlet(vec![1.0, 1.0]).unwrap();
        let as_generic = |alpha: Vec<f64>| {
            Prior::ConditionP(
                ConditionPPrior::new(alpha, TildePi::Function(std::sync::Arc::new(|_: &[f64]| 1.0))).unwrap(),
            )
        };
        let q = mean_quadrature(&u, &Counts::binary(1, 1), 0, &spec()).unwrap();
        assert_relative_eq!(q.mean, 0.5, epsilon = 1e-12);
        let q = mean_quadrature(&as_generic(vec![2.0, 3.0]), &Counts::binary(5, 7), 0, &spec()).unwrap();
        assert_relative_eq!(q.mean, 7.0 / 17.0, epsilon = 1e-10);
        assert!(!q.flagged);
        let q = mean_quadrature(&as_generic(vec![0.5, 0.5]), &Counts::binary(0, 40), 0, &spec()).unwrap();
        assert_relative_eq!(q.mean, 0.5 / 41.0, epsilon = 1e-10);
        let q = mean_quadrature(&as_generic(vec![0.5, 0.5]), &Counts::binary(0, 40), 1, &spec()).unwrap();
        assert_relative_eq!(q.mean, 40.5 / 41.0, epsilon = 1e-10);
    }

    #[test]
    fn boundary_failure_meets_lemma2() {
        let prior = Prior::BoundaryFailure(BoundaryFailurePrior);
        for n in [0u64, 10, 25, 100] {
            let q = mean_quadrature(&prior, &Counts::binary(0, n), 0, &spec()).unwrap();
            assert!(!q.flagged, "n={n} {q:?}");
            assert!(q.mean >= lemma2_lower_bound(n), "n={n} mean={}", q.mean);
        }
    }

    #[test]
    fn reduction_for_three_sides() {
        let prior = Prior::dirichlet(vec![1.0, 2.0, 0.5]).unwrap();
        let generic = Prior::ConditionP(
            ConditionPPrior::new(vec![1.0, 2.0, 0.5], TildePi::Function(std::sync::Arc::new(|_: &[f64]| 3.0)))
                .unwrap(),
        );
        let c = Counts::new(vec![3, 1, 4]).unwrap();
        let spec = QuadratureSpec { grid_resolution: 64, ..Default::default() };
        let q = mean_quadrature(&generic, &c, 2, &spec).unwrap();
        let exact = posterior_mean(&prior, &c, 2, &spec).unwrap().mean;
        assert_relative_eq!(q.mean, exact, max_relative = 1e-6);
        assert!(q.caveat.is_some());
    }

    #[test]
    fn bracket_examples() {
        let cert = GammaCertificate::dirichlet_exact(&[1.0, 1.0], 0.0);
        let b = bracket(&cert, &Counts::binary(1, 1), 0).unwrap();
        assert_eq!((b.lower, b.upper), (0.5, 0.75));
        let (lo, hi) = mixture_bracket(1.0, 3.0, &Counts::binary(2, 0), 0).unwrap();
        assert_relative_eq!(lo, 3.0 / 8.0);
        assert_relative_eq!(hi, 5.0 / 4.0);
        let (lo, hi) = mixture_bracket(1.0, 1.0, &Counts::binary(1, 1), 0).unwrap();
        assert_eq!((lo, hi), (0.5, 0.5));
    }

    #[test]
    fn lemma2_and_odds() {
        assert_eq!(lemma2_lower_bound(0), 0.125);
        assert_eq!(lemma2_lower_bound(100), 0.0125);
        assert_eq!(odds_ratio(0.5, 0.2, 0.2).unwrap(), 1.0);
        assert_relative_eq!(odds_ratio(0.75, 0.2, 0.2).unwrap(), 3.0, epsilon = 1e-15);
        let p = mean_dirichlet(&[1.0, 1.0], &Counts::binary(3, 7), 0).unwrap();
        let q = mean_dirichlet(&[1.0, 1.0], &Counts::binary(1, 9), 0).unwrap();
        assert_relative_eq!(odds_ratio(0.5, p, q).unwrap(), 2.0, epsilon = 1e-14);
        assert!(odds_ratio(0.5, 0.1, 0.0).is_err());
    }
}
