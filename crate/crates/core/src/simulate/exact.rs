//! Exact probabilities by enumeration over binomial outcomes (`K = 2`).
//!
//! Posterior means enter as functions of `(count on the tracked side, n)`,
//! which covers every prior on the 2-simplex.

use crate::special::binomial_pmf_table;

/// `P(|p̂(X) - p| >= pε)` for `X ~ Binomial(n, p)`.
pub fn theorem1_failure(mean: &dyn Fn(u64, u64) -> f64, n: u64, p: f64, epsilon: f64) -> f64 {
    binomial_pmf_table(n, p)
        .iter()
        .enumerate()
        .filter(|&(x, _)| (mean(x as u64, n) - p).abs() >= p * epsilon)
        .map(|(_, w)| w)
        .sum()
}

/// `P(event(p̂(Y, b), q̂(Z, r)))` for independent `Y ~ Bin(b, p)`,
/// `Z ~ Bin(r, q)`.
pub fn two_dice(
    event: &dyn Fn(f64, f64) -> bool,
    p_mean: &dyn Fn(u64, u64) -> f64,
    q_mean: &dyn Fn(u64, u64) -> f64,
    b: u64,
    r: u64,
    p: f64,
    q: f64,
) -> f64 {
    let py = binomial_pmf_table(b, p);
    let pz = binomial_pmf_table(r, q);
    let q_hats: Vec<f64> = (0..=r).map(|z| q_mean(z, r)).collect();
    let mut total = 0.0;
    for (y, wy) in py.iter().enumerate() {
        let p_hat = p_mean(y as u64, b);
        let inner: f64 = pz.iter().zip(&q_hats).filter(|(_, &qh)| event(p_hat, qh)).map(|(w, _)| w).sum();
        total += wy * inner;
    }
    total
}

/// As [`two_dice`] with `B ~ Bin(n, μ_B)` blue tosses among `n`.
pub fn random_choice(
    event: &dyn Fn(f64, f64) -> bool,
    p_mean: &dyn Fn(u64, u64) -> f64,
    q_mean: &dyn Fn(u64, u64) -> f64,
    n: u64,
    mu_b: f64,
    p: f64,
    q: f64,
) -> f64 {
    binomial_pmf_table(n, mu_b)
        .iter()
        .enumerate()
        .map(|(b, wb)| wb * two_dice(event, p_mean, q_mean, b as u64, n - b as u64, p, q))
        .sum()
}
