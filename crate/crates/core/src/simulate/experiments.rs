//! Monte Carlo suites and deterministic witnesses.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::rng::stream;
use super::wilson::{wilson_interval, Z95};
use crate::bernstein::GammaCertificate;
use crate::error::{Error, Result};
use crate::posterior::{lemma2_lower_bound, mean_dirichlet, mean_mixture, mean_quadrature, odds_ratio, Counts, QuadratureCache};
use crate::priors::{BoundaryFailurePrior, DirichletMixturePrior, Prior, SimplexPoint};
use crate::quadrature::QuadratureSpec;

/// Whether a record checks a theorem under its hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunTag {
    TheoremCheck,
    /// Hypotheses not met; the run was allowed explicitly.
    Exploratory,
    /// Counterexample demonstrations.
    Example,
}

/// Summary of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub tag: RunTag,
    pub point: Value,
    /// The event whose frequency `successes` counts.
    pub event: String,
    pub replications: u64,
    pub successes: u64,
    pub empirical_rate: f64,
    pub wilson_ci_95: (f64, f64),
    /// The bound the rate is compared with, if any.
    pub bound: Option<f64>,
    pub pass: bool,
    pub seed: u64,
    pub spec_hash: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub extra: Value,
    /// Wall time; kept out of the serialized record so result files are
    /// reproducible byte for byte.
    #[serde(skip)]
    pub runtime_ms: u64,
}

/// How a rate is judged.
#[derive(Debug, Clone, Copy)]
enum PassRule {
    /// Failure rate: the Wilson lower bound must not exceed the bound.
    RateAtMost(f64),
    /// Success rate: the Wilson lower bound must reach the bound.
    RateAtLeast(f64),
    Report,
}

struct Tally {
    experiment: &'static str,
    tag: RunTag,
    point: Value,
    event: String,
    replications: u64,
    successes: u64,
    rule: PassRule,
    seed: u64,
    extra: Value,
    started: Instant,
}

impl Tally {
    fn finish(self) -> ExperimentResult {
        let rate = if self.replications == 0 { 0.0 } else { self.successes as f64 / self.replications as f64 };
        let ci = wilson_interval(self.successes, self.replications, Z95);
        let (bound, pass) = match self.rule {
            PassRule::RateAtMost(b) => (Some(b), ci.0 <= b),
            PassRule::RateAtLeast(b) => (Some(b), ci.0 >= b),
            PassRule::Report => (None, true),
        };
        ExperimentResult {
            experiment: self.experiment.into(),
            tag: self.tag,
            point: self.point,
            event: self.event,
            replications: self.replications,
            successes: self.successes,
            empirical_rate: rate,
            wilson_ci_95: ci,
            bound,
            pass,
            seed: self.seed,
            spec_hash: String::new(),
            extra: self.extra,
            runtime_ms: self.started.elapsed().as_millis() as u64,
        }
    }
}

/// Multinomial draw by successive conditional binomials.
pub fn sample_counts<R: Rng + ?Sized>(p: &SimplexPoint, n: u64, rng: &mut R) -> Counts {
    let k = p.dim();
    let mut tallies = vec![0u64; k];
    let mut left = n;
    let mut mass = 1.0;
    for i in 0..k - 1 {
        if left == 0 {
            break;
        }
        let prob = if mass <= 0.0 { 1.0 } else { (p.get(i) / mass).clamp(0.0, 1.0) };
        let x = draw_binomial(left, prob, rng);
        tallies[i] = x;
        left -= x;
        mass -= p.get(i);
    }
    tallies[k - 1] += left;
    Counts::new(tallies).expect("K >= 2")
}

fn draw_binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Posterior-mean evaluation for hot loops: closed forms where they exist,
/// a memoized quadrature otherwise.
#[derive(Debug)]
pub enum MeanEvaluator {
    Dirichlet { alpha: Vec<f64>, k: usize },
    Mixture { prior: DirichletMixturePrior, k: usize },
    Cached(QuadratureCache),
}

impl MeanEvaluator {
    pub fn new(prior: &Prior, k: usize, spec: QuadratureSpec) -> Self {
        match prior {
            Prior::Mixture(m) => MeanEvaluator::Mixture { prior: m.clone(), k },
            _ => match prior.dirichlet_alpha() {
                Some(alpha) => MeanEvaluator::Dirichlet { alpha: alpha.to_vec(), k },
                None => MeanEvaluator::Cached(QuadratureCache::new(prior.clone(), k, spec)),
            },
        }
    }

    pub fn mean(&self, counts: &Counts) -> Result<f64> {
        match self {
            MeanEvaluator::Dirichlet { alpha, k } => mean_dirichlet(alpha, counts, *k),
            MeanEvaluator::Mixture { prior, k } => mean_mixture(prior, counts, *k),
            MeanEvaluator::Cached(cache) => cache.mean(counts),
        }
    }

    /// Mean for `K = 2` given the tracked side's count and the total.
    pub fn mean_binary(&self, count: u64, n: u64) -> Result<f64> {
        let k = match self {
            MeanEvaluator::Dirichlet { k, .. } | MeanEvaluator::Mixture { k, .. } => *k,
            MeanEvaluator::Cached(_) => 0,
        };
        let counts = if k == 0 { Counts::binary(count, n - count) } else { Counts::binary(n - count, count) };
        self.mean(&counts)
    }
}

/// Counts replications for which `event` holds, in parallel and
/// independent of worker count.
fn replicate<F>(seed: u64, grid_point: u64, reps: u64, event: F) -> Result<u64>
where
    F: Fn(&mut ChaCha8Rng) -> Result<bool> + Sync,
{
    let hits: Vec<bool> = (0..reps)
        .into_par_iter()
        .map(|r| event(&mut stream(seed, grid_point, r)))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as u64)
}

fn gate(holds: bool, exploratory: bool, what: impl FnOnce() -> String) -> Result<RunTag> {
    if holds {
        Ok(RunTag::TheoremCheck)
    } else if exploratory {
        Ok(RunTag::Exploratory)
    } else {
        Err(Error::Precondition(what()))
    }
}

/// Single-die concentration suite.
#[derive(Debug, Clone)]
pub struct Theorem1Run<'a> {
    pub prior: &'a Prior,
    pub k: usize,
    pub epsilon: f64,
    /// `N` with `n p_k >= N` required at every point.
    pub threshold: u64,
    pub points: Vec<(u64, SimplexPoint)>,
    pub replications: u64,
    pub seed: u64,
    pub exploratory: bool,
    pub quadrature: QuadratureSpec,
}

/// Empirical `P(|p̂_k - p_k| >= p_k ε)` at each `(n, p)`; a point passes when
/// the Wilson lower bound does not exceed `ε`.
pub fn verify_theorem1(run: &Theorem1Run<'_>) -> Result<Vec<ExperimentResult>> {
    let eval = MeanEvaluator::new(run.prior, run.k, run.quadrature);
    let mut out = Vec::with_capacity(run.points.len());
    for (idx, (n, p)) in run.points.iter().enumerate() {
        let started = Instant::now();
        let pk = p.get(run.k);
        let np = *n as f64 * pk;
        let tag = gate(np >= run.threshold as f64 * (1.0 - 1e-12), run.exploratory, || {
            format!("n p_k = {np} is below N = {}", run.threshold)
        })?;
        let successes = replicate(run.seed, idx as u64, run.replications, |rng| {
            let counts = sample_counts(p, *n, rng);
            Ok((eval.mean(&counts)? - pk).abs() >= pk * run.epsilon)
        })?;
        out.push(
            Tally {
                experiment: "theorem1",
                tag,
                point: json!({ "n": n, "p": p.coords(), "k": run.k, "np_k": np, "N": run.threshold, "epsilon": run.epsilon }),
                event: "|p_hat_k - p_k| >= p_k * epsilon".into(),
                replications: run.replications,
                successes,
                rule: PassRule::RateAtMost(run.epsilon),
                seed: run.seed,
                extra: Value::Null,
                started,
            }
            .finish(),
        );
    }
    Ok(out)
}

/// Which die is tossed in each period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceSchedule {
    /// Blue, red, blue, red, ...
    Alternating,
    /// Explicit sequence of `B` and `R`.
    Explicit(String),
    /// Blue with probability `mu_b`, independently each period.
    Iid { mu_b: f64 },
}

impl ChoiceSchedule {
    /// `b_n` for deterministic schedules.
    pub fn blue_count(&self, n: u64) -> Result<u64> {
        match self {
            ChoiceSchedule::Alternating => Ok(n.div_ceil(2)),
            ChoiceSchedule::Explicit(seq) => {
                if (seq.len() as u64) < n {
                    return Err(Error::Config(format!("schedule has {} periods, need {n}", seq.len())));
                }
                let mut b = 0;
                for ch in seq.chars().take(n as usize) {
                    match ch {
                        'B' | 'b' => b += 1,
                        'R' | 'r' => {}
                        other => return Err(Error::Config(format!("schedule symbol {other:?} is not B or R"))),
                    }
                }
                Ok(b)
            }
            ChoiceSchedule::Iid { .. } => Err(Error::Config("random schedule has no fixed blue count".into())),
        }
    }
}

/// Two-dice configuration shared by the comparison suites.
#[derive(Debug, Clone)]
pub struct TwoDiceRun<'a> {
    pub pi: &'a Prior,
    pub rho: &'a Prior,
    pub p: SimplexPoint,
    pub q: SimplexPoint,
    pub kbar: usize,
    pub n: u64,
    pub replications: u64,
    pub seed: u64,
    pub exploratory: bool,
    pub quadrature: QuadratureSpec,
}

impl TwoDiceRun<'_> {
    fn evaluators(&self) -> (MeanEvaluator, MeanEvaluator) {
        (
            MeanEvaluator::new(self.pi, self.kbar, self.quadrature),
            MeanEvaluator::new(self.rho, self.kbar, self.quadrature),
        )
    }

    fn point(&self) -> Value {
        json!({ "n": self.n, "p": self.p.coords(), "q": self.q.coords(), "kbar": self.kbar })
    }
}

/// Deterministic schedule: empirical `P(p̂_k̄ >= c(1-δ) q̂_k̄)`.
pub fn verify_theorem2(
    run: &TwoDiceRun<'_>,
    schedule: &ChoiceSchedule,
    c: f64,
    delta: f64,
    eta: f64,
    epsilon: f64,
    threshold: u64,
) -> Result<ExperimentResult> {
    let started = Instant::now();
    let b = schedule.blue_count(run.n)?;
    let r = run.n - b;
    let pk = run.p.get(run.kbar);
    let qk = run.q.get(run.kbar);
    let holds = pk >= c * qk && b as f64 * pk >= threshold as f64 && (b as f64) <= (1.0 - eta) * run.n as f64;
    let tag = gate(holds, run.exploratory, || {
        format!(
            "need p_kbar >= c q_kbar, b_n p_kbar >= N = {threshold} and b_n/n <= 1 - eta; got b_n = {b}, n = {}, b_n p = {}",
            run.n,
            b as f64 * pk
        )
    })?;
    let (pe, qe) = run.evaluators();
    let factor = c * (1.0 - delta);
    let successes = replicate(run.seed, 0, run.replications, |rng| {
        let y = sample_counts(&run.p, b, rng);
        let z = sample_counts(&run.q, r, rng);
        Ok(pe.mean(&y)? >= factor * qe.mean(&z)?)
    })?;
    let mut point = run.point();
    point["b_n"] = json!(b);
    point["c"] = json!(c);
    point["delta"] = json!(delta);
    point["eta"] = json!(eta);
    point["N"] = json!(threshold);
    Ok(Tally {
        experiment: "theorem2",
        tag,
        point,
        event: "p_hat_kbar >= c (1 - delta) q_hat_kbar".into(),
        replications: run.replications,
        successes,
        rule: PassRule::RateAtLeast(1.0 - epsilon),
        seed: run.seed,
        extra: Value::Null,
        started,
    }
    .finish())
}

/// Random choice with blue probability `μ_B`: empirical
/// `P(p̂_k̄ >= c(1-δ) q̂_k̄)`.
pub fn verify_corollary1(
    run: &TwoDiceRun<'_>,
    mu_b: f64,
    c: f64,
    delta: f64,
    epsilon: f64,
    threshold: u64,
) -> Result<ExperimentResult> {
    let started = Instant::now();
    if !(mu_b > 0.0 && mu_b < 1.0) {
        return Err(Error::Config(format!("mu_B = {mu_b} must lie in (0, 1)")));
    }
    let pk = run.p.get(run.kbar);
    let qk = run.q.get(run.kbar);
    let np = run.n as f64 * pk;
    let tag = gate(pk >= c * qk && np >= threshold as f64, run.exploratory, || {
        format!("need p_kbar >= c q_kbar and n p_kbar >= N = {threshold}; got n p = {np}")
    })?;
    let (pe, qe) = run.evaluators();
    let factor = c * (1.0 - delta);
    let successes = replicate(run.seed, 0, run.replications, |rng| {
        let b = draw_binomial(run.n, mu_b, rng);
        let y = sample_counts(&run.p, b, rng);
        let z = sample_counts(&run.q, run.n - b, rng);
        Ok(pe.mean(&y)? >= factor * qe.mean(&z)?)
    })?;
    let mut point = run.point();
    point["mu_b"] = json!(mu_b);
    point["c"] = json!(c);
    point["delta"] = json!(delta);
    point["N"] = json!(threshold);
    Ok(Tally {
        experiment: "corollary1",
        tag,
        point,
        event: "p_hat_kbar >= c (1 - delta) q_hat_kbar".into(),
        replications: run.replications,
        successes,
        rule: PassRule::RateAtLeast(1.0 - epsilon),
        seed: run.seed,
        extra: Value::Null,
        started,
    }
    .finish())
}

/// Empirical probability that the posterior odds of blue exceed
/// `(1-ε) μ_B / μ_R`.
pub fn verify_corollary2(run: &TwoDiceRun<'_>, mu_b: f64, epsilon: f64, threshold: u64) -> Result<ExperimentResult> {
    let started = Instant::now();
    if !(mu_b > 0.0 && mu_b < 1.0) {
        return Err(Error::Config(format!("mu_B = {mu_b} must lie in (0, 1)")));
    }
    let pk = run.p.get(run.kbar);
    let qk = run.q.get(run.kbar);
    let np = run.n as f64 * pk;
    let tag = gate(pk >= qk && np >= threshold as f64, run.exploratory, || {
        format!("need p_kbar >= q_kbar and n p_kbar >= N = {threshold}; got n p = {np}")
    })?;
    let (pe, qe) = run.evaluators();
    let target = (1.0 - epsilon) * mu_b / (1.0 - mu_b);
    let successes = replicate(run.seed, 0, run.replications, |rng| {
        let b = draw_binomial(run.n, mu_b, rng);
        let y = sample_counts(&run.p, b, rng);
        let z = sample_counts(&run.q, run.n - b, rng);
        Ok(odds_ratio(mu_b, pe.mean(&y)?, qe.mean(&z)?)? > target)
    })?;
    let mut point = run.point();
    point["mu_b"] = json!(mu_b);
    point["N"] = json!(threshold);
    Ok(Tally {
        experiment: "corollary2",
        tag,
        point,
        event: "odds ratio > (1 - epsilon) mu_B / mu_R".into(),
        replications: run.replications,
        successes,
        rule: PassRule::RateAtLeast(1.0 - epsilon),
        seed: run.seed,
        extra: json!({ "odds_threshold": target }),
        started,
    }
    .finish())
}

/// Deterministic witness that the boundary-failure prior defeats a
/// uniform threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example1Witness {
    pub record: String,
    #[serde(rename = "N")]
    pub big_n: f64,
    pub delta: f64,
    pub n: u64,
    pub p1: f64,
    /// `n^(1/2+δ) p_1`, which equals `N`.
    pub scaled_mass: f64,
    pub lemma2_lower_bound: f64,
    pub two_p1: f64,
    pub certificate_holds: bool,
    /// Quadrature posterior means at `(0, n)` and `(⌈n p_1⌉, n - ⌈n p_1⌉)`.
    pub posterior_mean_zero: f64,
    pub posterior_mean_typical: f64,
    pub quadrature_error: f64,
    pub quadrature_confirms: bool,
}

/// Least `n` with `1/(8√n) > 2 p_1(n)` for `p_1(n) = N n^(-1/2-δ)`, by
/// doubling and bisection (the ratio of the two sides grows like `n^δ`).
pub fn example1_witness(big_n: f64, delta: f64, spec: &QuadratureSpec) -> Result<Example1Witness> {
    if !(big_n > 0.0) || !(delta > 0.0) {
        return Err(Error::InvalidParameter("need N > 0 and delta > 0".into()));
    }
    let p1 = |n: u64| (big_n * (n as f64).powf(-0.5 - delta)).min(1.0);
    let holds = |n: u64| lemma2_lower_bound(n) > 2.0 * p1(n);
    let n = if holds(1) {
        1
    } else {
        let mut lo = 1u64;
        let mut hi = 2u64;
        while !holds(hi) {
            lo = hi;
            hi = hi.checked_mul(2).ok_or_else(|| Error::SearchCap("witness search overflow".into()))?;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if holds(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let p = p1(n);
    let prior = Prior::BoundaryFailure(BoundaryFailurePrior);
    let zero = mean_quadrature(&prior, &Counts::binary(0, n), 0, spec)?;
    let typical_count = ((n as f64 * p).ceil() as u64).min(n);
    let typical = mean_quadrature(&prior, &Counts::binary(typical_count, n - typical_count), 0, spec)?;
    let two_p1 = 2.0 * p;
    Ok(Example1Witness {
        record: "example1_witness".into(),
        big_n,
        delta,
        n,
        p1: p,
        scaled_mass: (n as f64).powf(0.5 + delta) * p,
        lemma2_lower_bound: lemma2_lower_bound(n),
        two_p1,
        certificate_holds: lemma2_lower_bound(n) > two_p1,
        posterior_mean_zero: zero.mean,
        posterior_mean_typical: typical.mean,
        quadrature_error: zero.error_estimate.max(typical.error_estimate),
        quadrature_confirms: !zero.flagged && !typical.flagged && zero.mean > two_p1 && typical.mean > two_p1,
    })
}

/// Deterministic witness that a sub-linear sample-size condition fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example2Witness {
    pub record: String,
    #[serde(rename = "N")]
    pub big_n: f64,
    pub gamma: f64,
    pub alpha1: f64,
    pub n: u64,
    pub p1: f64,
    pub zeta_n: f64,
    pub zeta_times_p1: f64,
    /// `α₁ / (2(n + γ))`, a lower bound on `p̂_1` for every outcome.
    pub posterior_lower_bound: f64,
    pub two_p1: f64,
    pub certificate_holds: bool,
}

/// Least `n > max(α₁/8, γ)` with `ζ(n) p_1(n) >= N` for `p_1(n) = α₁/(8n)`.
///
/// The certificate's bracket must hold at `ε <= 1/2`.
pub fn example2_witness(
    certificate: &GammaCertificate,
    zeta: &dyn Fn(u64) -> f64,
    big_n: f64,
    search_cap: u64,
) -> Result<Example2Witness> {
    if certificate.effective_epsilon() > 0.5 {
        return Err(Error::Certificate(format!(
            "lower bound alpha_1/(2(n+gamma)) needs epsilon <= 1/2, certificate has {}",
            certificate.effective_epsilon()
        )));
    }
    let alpha1 = certificate.alpha[0];
    let gamma = certificate.gamma;
    let p1 = |n: u64| alpha1 / (8.0 * n as f64);
    let start = (alpha1 / 8.0).max(gamma).floor() as u64 + 1;
    let n = (start..=search_cap.max(start))
        .find(|&n| zeta(n) * p1(n) >= big_n)
        .ok_or_else(|| Error::SearchCap(format!("no n <= {search_cap} with zeta(n) p_1(n) >= {big_n}")))?;
    let p = p1(n);
    let lower = alpha1 / (2.0 * (n as f64 + gamma));
    Ok(Example2Witness {
        record: "example2_witness".into(),
        big_n,
        gamma,
        alpha1,
        n,
        p1: p,
        zeta_n: zeta(n),
        zeta_times_p1: zeta(n) * p,
        posterior_lower_bound: lower,
        two_p1: 2.0 * p,
        certificate_holds: n as f64 > gamma && lower > 2.0 * p && zeta(n) * p >= big_n,
    })
}

/// Summary line of a scan over `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub record: String,
    pub experiment: String,
    /// Example 3: first `n` whose Wilson lower bound exceeds 1/2.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossing_n: Option<u64>,
    /// Example 4: smallest empirical rate over the last points of the scan.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon0_estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon0_wilson_lower: Option<f64>,
    pub seed: u64,
    pub spec_hash: String,
}

/// Setup shared by the two counterexample scans.
#[derive(Debug, Clone)]
pub struct ScanRun<'a> {
    pub pi: &'a Prior,
    pub rho: &'a Prior,
    pub c: f64,
    pub mu_b: f64,
    pub n_values: Vec<u64>,
    pub replications: u64,
    pub seed: u64,
    pub quadrature: QuadratureSpec,
}

/// Wrong-comparison rate `P(p̂_1 < (c/2) q̂_1)` along `p_1 = N/n`,
/// `q_1 = N/(cn)`.
pub fn example3_demo(run: &ScanRun<'_>, big_n: f64) -> Result<(Vec<ExperimentResult>, ScanSummary)> {
    example3_demo_from(run, big_n, 0)
}

/// As [`example3_demo`], numbering the scan's streams from `first_index`.
pub fn example3_demo_from(
    run: &ScanRun<'_>,
    big_n: f64,
    first_index: u64,
) -> Result<(Vec<ExperimentResult>, ScanSummary)> {
    check_scan(run)?;
    let pe = MeanEvaluator::new(run.pi, 0, run.quadrature);
    let qe = MeanEvaluator::new(run.rho, 0, run.quadrature);
    let mut out = Vec::new();
    let mut crossing = None;
    for (idx, &n) in run.n_values.iter().enumerate() {
        let started = Instant::now();
        let p1 = big_n / n as f64;
        let q1 = big_n / (run.c * n as f64);
        if p1 > 1.0 || q1 > 1.0 {
            return Err(Error::Config(format!("n = {n} too small: p_1 = {p1}, q_1 = {q1}")));
        }
        let successes = replicate(run.seed, first_index + idx as u64, run.replications, |rng| {
            let b = draw_binomial(n, run.mu_b, rng);
            let y = draw_binomial(b, p1, rng);
            let z = draw_binomial(n - b, q1, rng);
            Ok(pe.mean_binary(y, b)? < run.c / 2.0 * qe.mean_binary(z, n - b)?)
        })?;
        let result = Tally {
            experiment: "example3",
            tag: RunTag::Example,
            point: json!({ "n": n, "p1": p1, "q1": q1, "c": run.c, "mu_b": run.mu_b, "N": big_n }),
            event: "p_hat_1 < (c/2) q_hat_1".into(),
            replications: run.replications,
            successes,
            rule: PassRule::Report,
            seed: run.seed,
            extra: Value::Null,
            started,
        }
        .finish();
        if crossing.is_none() && result.wilson_ci_95.0 > 0.5 {
            crossing = Some(n);
        }
        out.push(result);
    }
    let summary = ScanSummary {
        record: "scan_summary".into(),
        experiment: "example3".into(),
        crossing_n: crossing,
        epsilon0_estimate: None,
        epsilon0_wilson_lower: None,
        seed: run.seed,
        spec_hash: String::new(),
    };
    Ok((out, summary))
}

/// Number of trailing scan points used for the `ε₀` estimate.
pub const EPSILON0_WINDOW: usize = 3;

/// Wrong-comparison rate along `p_1 = c/n`, `q_1 = 1/n`, together with the
/// event `{Y = 0, 6γ/c < (B/n) Z}` that lower-bounds it.
pub fn example4_demo(
    run: &ScanRun<'_>,
    gamma: f64,
    zeta: &dyn Fn(f64) -> f64,
    big_n: f64,
) -> Result<(Vec<ExperimentResult>, ScanSummary)> {
    check_scan(run)?;
    let pe = MeanEvaluator::new(run.pi, 0, run.quadrature);
    let qe = MeanEvaluator::new(run.rho, 0, run.quadrature);
    let cut = 6.0 * gamma / run.c;
    let mut out = Vec::new();
    for (idx, &n) in run.n_values.iter().enumerate() {
        let started = Instant::now();
        if (n as f64) < run.c.max(1.0) {
            return Err(Error::Config(format!("n = {n} must be at least max(c, 1)")));
        }
        let p1 = run.c / n as f64;
        let q1 = 1.0 / n as f64;
        // Outcome bits: wrong, decomposition event, Y = 0.
        let outcomes: Vec<(bool, bool, bool)> = (0..run.replications)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(run.seed, idx as u64, r);
                let b = draw_binomial(n, run.mu_b, &mut rng);
                let y = draw_binomial(b, p1, &mut rng);
                let z = draw_binomial(n - b, q1, &mut rng);
                let wrong = pe.mean_binary(y, b)? < run.c / 2.0 * qe.mean_binary(z, n - b)?;
                let decomposition = y == 0 && cut < b as f64 / n as f64 * z as f64;
                Ok((wrong, decomposition, y == 0))
            })
            .collect::<Result<_>>()?;
        let count = |f: fn(&(bool, bool, bool)) -> bool| outcomes.iter().filter(|o| f(o)).count() as u64;
        let successes = count(|o| o.0);
        let decomposition = count(|o| o.1);
        let violations = count(|o| o.1 && !o.0);
        let y_zero = count(|o| o.2);
        let reps = run.replications.max(1) as f64;
        out.push(
            Tally {
                experiment: "example4",
                tag: RunTag::Example,
                point: json!({
                    "n": n, "p1": p1, "q1": q1, "c": run.c, "mu_b": run.mu_b,
                    "n_zeta_p1": n as f64 * zeta(p1), "N": big_n,
                }),
                event: "p_hat_1 < (c/2) q_hat_1".into(),
                replications: run.replications,
                successes,
                rule: PassRule::Report,
                seed: run.seed,
                extra: json!({
                    "decomposition_rate": decomposition as f64 / reps,
                    "decomposition_without_wrong": violations,
                    "y_zero_rate": y_zero as f64 / reps,
                    "y_zero_lower_bound": (1.0 - p1).powf(n as f64),
                    "y_zero_limit": (-run.c).exp(),
                    "n_zeta_reaches_N": n as f64 * zeta(p1) >= big_n,
                }),
                started,
            }
            .finish(),
        );
    }
    let tail = &out[out.len().saturating_sub(EPSILON0_WINDOW)..];
    let summary = ScanSummary {
        record: "scan_summary".into(),
        experiment: "example4".into(),
        crossing_n: None,
        epsilon0_estimate: tail.iter().map(|r| r.empirical_rate).reduce(f64::min),
        epsilon0_wilson_lower: tail.iter().map(|r| r.wilson_ci_95.0).reduce(f64::min),
        seed: run.seed,
        spec_hash: String::new(),
    };
    Ok((out, summary))
}

fn check_scan(run: &ScanRun<'_>) -> Result<()> {
    if run.pi.dim() != 2 || run.rho.dim() != 2 {
        return Err(Error::UnsupportedDimension { k: run.pi.dim().max(run.rho.dim()), reason: "scans use K = 2".into() });
    }
    if !(run.mu_b > 0.0 && run.mu_b < 1.0) {
        return Err(Error::Config(format!("mu_B = {} must lie in (0, 1)", run.mu_b)));
    }
    if !(run.c > 0.0) {
        return Err(Error::Config(format!("c = {} must be positive", run.c)));
    }
    if run.n_values.is_empty() {
        return Err(Error::Config("n_values is empty".into()));
    }
    Ok(())
}
