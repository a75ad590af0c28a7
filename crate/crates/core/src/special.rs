//! Log-space special functions and exact discrete distribution tables.
//!
//! The binomial and Poisson routines here act as oracles for the tail
//! bounds, so they are computed by recursive pmf accumulation in log space
//! instead of any normal or continued-fraction approximation.

pub use statrs::function::gamma::ln_gamma;

/// `ln B(a, b) = ln Γ(a) + ln Γ(b) - ln Γ(a + b)`.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Log of the multivariate beta function `∏Γ(s_i) / Γ(Σs_i)`.
pub fn ln_multi_beta(s: &[f64]) -> f64 {
    let total: f64 = s.iter().sum();
    s.iter().map(|&x| ln_gamma(x)).sum::<f64>() - ln_gamma(total)
}

/// `ln(m! / ∏ν_i!)`.
pub fn ln_multinomial(nu: &[u32]) -> f64 {
    let m: u32 = nu.iter().sum();
    ln_gamma(m as f64 + 1.0) - nu.iter().map(|&v| ln_gamma(v as f64 + 1.0)).sum::<f64>()
}

/// Numerically stable `ln Σ exp(x_i)`. Empty input or all `-inf` gives `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Log pmf of Binomial(n, p) for every k in `0..=n`.
pub fn binomial_log_pmf_table(n: u64, p: f64) -> Vec<f64> {
    let len = n as usize + 1;
    if p <= 0.0 {
        let mut t = vec![f64::NEG_INFINITY; len];
        t[0] = 0.0;
        return t;
    }
    if p >= 1.0 {
        let mut t = vec![f64::NEG_INFINITY; len];
        t[len - 1] = 0.0;
        return t;
    }
    let log_odds = p.ln() - (-p).ln_1p();
    let mut t = Vec::with_capacity(len);
    let mut cur = n as f64 * (-p).ln_1p();
    t.push(cur);
    for k in 0..n {
        cur += ((n - k) as f64).ln() - ((k + 1) as f64).ln() + log_odds;
        t.push(cur);
    }
    t
}

/// Binomial(n, p) pmf for every k in `0..=n`.
pub fn binomial_pmf_table(n: u64, p: f64) -> Vec<f64> {
    binomial_log_pmf_table(n, p).into_iter().map(f64::exp).collect()
}

/// `P(S_n <= m)` for `S_n ~ Binomial(n, p)`.
pub fn binomial_cdf(n: u64, p: f64, m: i64) -> f64 {
    if m < 0 {
        return 0.0;
    }
    if m as u64 >= n {
        return 1.0;
    }
    let t = binomial_log_pmf_table(n, p);
    log_sum_exp(&t[..=m as usize]).exp().min(1.0)
}

/// `P(W_ν <= m)` for `W_ν ~ Poisson(ν)`.
pub fn poisson_cdf(nu: f64, m: f64) -> f64 {
    if m < 0.0 {
        return 0.0;
    }
    if nu <= 0.0 {
        return 1.0;
    }
    let top = m.floor() as u64;
    let ln_nu = nu.ln();
    let mut cur = -nu;
    let mut terms = Vec::with_capacity(top as usize + 1);
    terms.push(cur);
    for j in 0..top {
        cur += ln_nu - ((j + 1) as f64).ln();
        terms.push(cur);
    }
    log_sum_exp(&terms).exp().min(1.0)
}

/// `ln C(n, k)`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `⌈x⌉`, except that values within `1e-9` (relative) of an integer snap to
/// that integer, so floating-point noise cannot bump a threshold by one.
pub fn ceil_snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}
