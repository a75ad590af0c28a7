//! Prior densities on the simplex and their classification against
//! Condition 𝒫.
//!
//! A density `π` satisfies Condition 𝒫(α) when `π(p) / ∏ p_k^(α_k - 1)`
//! extends to a continuous function `π̃` on the closed simplex that is bounded
//! away from zero. Priors here are stored in that factored form: an exponent
//! vector `α` plus the continuous factor `π̃`.
//!
//! Densities are unnormalized throughout. Every posterior quantity in this
//! crate is a ratio of integrals, so the normalizing constant cancels.

use std::cell::Cell;
use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{beta_weighted, QuadratureSpec};
pub use crate::simplex::SimplexPoint;
use crate::simplex::{lattice, lattice_size};
use crate::special::ln_multi_beta;

/// Multiplier applied to grid-estimated minima of `π̃` wherever they enter a
/// bound. A finite grid cannot certify an infimum.
pub const GRID_MIN_SAFETY: f64 = 0.9;

/// Default grid resolution (nodes per unit length) for `K = 2`.
pub const DEFAULT_GRID_RESOLUTION: usize = 1024;

/// Closed-form callable for `π̃`. Receives all `K` coordinates.
pub type TildeFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// The continuous factor `π̃` of a Condition-𝒫 prior.
#[derive(Clone)]
pub enum TildePi {
    Constant(f64),
    /// `offset + amplitude · sin(frequency · π · p_1)`.
    Sine { offset: f64, amplitude: f64, frequency: f64 },
    Grid(GridTable),
    Function(TildeFn),
}

impl fmt::Debug for TildePi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TildePi::Constant(c) => write!(f, "Constant({c})"),
            TildePi::Sine { offset, amplitude, frequency } => {
                write!(f, "Sine {{ offset: {offset}, amplitude: {amplitude}, frequency: {frequency} }}")
            }
            TildePi::Grid(g) => write!(f, "Grid(K={}, resolution={})", g.dim, g.resolution),
            TildePi::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl TildePi {
    pub fn eval(&self, p: &[f64]) -> f64 {
        match self {
            TildePi::Constant(c) => *c,
            TildePi::Sine { offset, amplitude, frequency } => {
                offset + amplitude * (frequency * std::f64::consts::PI * p[0]).sin()
            }
            TildePi::Grid(g) => g.eval(p),
            TildePi::Function(f) => f(p),
        }
    }

    /// Analytic minimum over the closed simplex, where one is available.
    fn exact_min(&self) -> Option<f64> {
        match self {
            TildePi::Constant(c) => Some(*c),
            TildePi::Sine { offset, amplitude, frequency } => {
                // Depends on p_1 only, which ranges over [0, 1].
                let (amp, freq) = if *frequency < 0.0 {
                    (-amplitude, -frequency)
                } else {
                    (*amplitude, *frequency)
                };
                let f = |x: f64| offset + amp * (freq * std::f64::consts::PI * x).sin();
                let mut min = f(0.0).min(f(1.0));
                if freq > 0.0 {
                    // Critical points where freq·π·x = π/2 + jπ.
                    let mut j = 0.0;
                    loop {
                        let x = (0.5 + j) / freq;
                        if x > 1.0 {
                            break;
                        }
                        min = min.min(f(x));
                        j += 1.0;
                    }
                }
                Some(min)
            }
            TildePi::Grid(_) | TildePi::Function(_) => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, TildePi::Constant(_))
    }
}

/// Tabulated `π̃` on the regular lattice `{ν / r : Σν = r}` with piecewise
/// linear interpolation. Supported for `K = 2` and `K = 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    dim: usize,
    resolution: usize,
    values: Vec<f64>,
}

impl GridTable {
    /// Values ordered by `i = r·p_1` for `K = 2`, and row-major over
    /// `(i, j) = (r·p_1, r·p_2)` with `i + j <= r` for `K = 3`.
    pub fn from_values(dim: usize, resolution: usize, values: Vec<f64>) -> Result<Self> {
        let expected = match dim {
            2 => resolution + 1,
            3 => (resolution + 1) * (resolution + 2) / 2,
            _ => {
                return Err(Error::UnsupportedDimension {
                    k: dim,
                    reason: "grid tables support K = 2 and K = 3".into(),
                })
            }
        };
        if resolution == 0 {
            return Err(Error::InvalidParameter("grid resolution must be positive".into()));
        }
        if values.len() != expected {
            return Err(Error::InvalidParameter(format!(
                "grid of resolution {resolution} for K = {dim} needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite grid value {v}")));
        }
        Ok(Self { dim, resolution, values })
    }

    /// Reads a CSV file with a header row and columns `p_1, ..., p_{K-1}, value`.
    pub fn from_csv(path: &Path, dim: usize) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for record in reader.records() {
            let record = record?;
            if record.len() != dim {
                return Err(Error::Config(format!(
                    "{}: expected {dim} columns (p_1..p_{}, value), got {}",
                    path.display(),
                    dim - 1,
                    record.len()
                )));
            }
            let nums: Vec<f64> = record
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let (coords, value) = nums.split_at(dim - 1);
            rows.push((coords.to_vec(), value[0]));
        }
        let resolution = match dim {
            2 => rows.len().saturating_sub(1),
            3 => {
                // rows = (r + 1)(r + 2) / 2
                let r = (((8 * rows.len() + 1) as f64).sqrt() - 3.0) / 2.0;
                r.round() as usize
            }
            _ => {
                return Err(Error::UnsupportedDimension {
                    k: dim,
                    reason: "grid tables support K = 2 and K = 3".into(),
                })
            }
        };
        if resolution == 0 {
            return Err(Error::Config(format!("{}: grid has too few rows", path.display())));
        }
        let expected = if dim == 2 { resolution + 1 } else { (resolution + 1) * (resolution + 2) / 2 };
        if rows.len() != expected {
            return Err(Error::Config(format!(
                "{}: {} rows do not form a complete lattice",
                path.display(),
                rows.len()
            )));
        }
        let mut values = vec![f64::NAN; expected];
        let r = resolution as f64;
        for (coords, value) in rows {
            let idx: Vec<usize> = coords
                .iter()
                .map(|&c| {
                    let s = c * r;
                    if (s - s.round()).abs() > 1e-6 || s < -1e-9 {
                        Err(Error::Config(format!(
                            "{}: coordinate {c} is not on the 1/{resolution} lattice",
                            path.display()
                        )))
                    } else {
                        Ok(s.round() as usize)
                    }
                })
                .collect::<Result<_>>()?;
            let flat = match dim {
                2 => idx[0],
                _ => {
                    if idx[0] + idx[1] > resolution {
                        return Err(Error::Config(format!("{}: point outside simplex", path.display())));
                    }
                    tri_index(resolution, idx[0], idx[1])
                }
            };
            if flat >= values.len() {
                return Err(Error::Config(format!("{}: point outside simplex", path.display())));
            }
            values[flat] = value;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Config(format!("{}: lattice has missing points", path.display())));
        }
        Self::from_values(dim, resolution, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min_node(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        let r = self.resolution;
        let rf = r as f64;
        match self.dim {
            2 => {
                let x = (p[0] * rf).clamp(0.0, rf);
                let i = (x.floor() as usize).min(r - 1);
                let t = x - i as f64;
                self.values[i] * (1.0 - t) + self.values[i + 1] * t
            }
            _ => {
                let x = (p[0] * rf).clamp(0.0, rf);
                let y = (p[1] * rf).clamp(0.0, rf - x);
                let mut i = x.floor() as usize;
                let mut j = y.floor() as usize;
                if i + j >= r {
                    // On the far edge: step back into the last cell.
                    if i > 0 {
                        i -= 1;
                    } else {
                        j -= 1;
                    }
                }
                let fx = x - i as f64;
                let fy = y - j as f64;
                let g = |a: usize, b: usize| self.values[tri_index(r, a, b)];
                if fx + fy <= 1.0 {
                    (1.0 - fx - fy) * g(i, j) + fx * g(i + 1, j) + fy * g(i, j + 1)
                } else {
                    (fx + fy - 1.0) * g(i + 1, j + 1) + (1.0 - fy) * g(i + 1, j) + (1.0 - fx) * g(i, j + 1)
                }
            }
        }
    }
}

fn tri_index(r: usize, i: usize, j: usize) -> usize {
    // Row i holds r - i + 1 entries.
    i * (r + 1) - i * i.saturating_sub(1) / 2 + j
}

/// Prior with density `π̃(p) · ∏ p_k^(α_k - 1)`.
#[derive(Debug, Clone)]
pub struct ConditionPPrior {
    alpha: Vec<f64>,
    tilde_pi: TildePi,
    tilde_pi_min: f64,
    tilde_pi_is_exact: bool,
}

impl ConditionPPrior {
    pub fn new(alpha: Vec<f64>, tilde_pi: TildePi) -> Result<Self> {
        let res = default_resolution(alpha.len());
        Self::with_min_resolution(alpha, tilde_pi, res)
    }

    /// As [`ConditionPPrior::new`], estimating `min π̃` on a lattice of the
    /// given resolution when no analytic minimum is known.
    pub fn with_min_resolution(alpha: Vec<f64>, tilde_pi: TildePi, resolution: usize) -> Result<Self> {
        validate_alpha(&alpha)?;
        if let TildePi::Grid(g) = &tilde_pi {
            if g.dim != alpha.len() {
                return Err(Error::InvalidParameter(format!(
                    "grid is for K = {}, alpha has K = {}",
                    g.dim,
                    alpha.len()
                )));
            }
        }
        let (min, exact) = match (&tilde_pi, tilde_pi.exact_min()) {
            (_, Some(m)) => (m, true),
            (TildePi::Grid(g), None) => (g.min_node(), false),
            (_, None) => (lattice_scan(&tilde_pi, alpha.len(), resolution).min, false),
        };
        if !(min > 0.0) {
            return Err(Error::NotConditionP(format!("min of tilde_pi is {min}, must be positive")));
        }
        Ok(Self { alpha, tilde_pi, tilde_pi_min: min, tilde_pi_is_exact: exact })
    }

    /// Dirichlet(α): `π̃ ≡ 1`.
    pub fn dirichlet(alpha: Vec<f64>) -> Result<Self> {
        Self::new(alpha, TildePi::Constant(1.0))
    }

    pub fn uniform(k: usize) -> Self {
        Self::dirichlet(vec![1.0; k]).expect("uniform prior is valid")
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha_sum(&self) -> f64 {
        self.alpha.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn tilde_pi(&self) -> &TildePi {
        &self.tilde_pi
    }

    pub fn tilde_pi_at(&self, p: &[f64]) -> f64 {
        self.tilde_pi.eval(p)
    }

    pub fn tilde_pi_min(&self) -> f64 {
        self.tilde_pi_min
    }

    pub fn tilde_pi_is_exact(&self) -> bool {
        self.tilde_pi_is_exact
    }

    /// `min π̃` as it should enter a bound: grid estimates carry the
    /// [`GRID_MIN_SAFETY`] factor.
    pub fn tilde_pi_min_for_bounds(&self) -> f64 {
        if self.tilde_pi_is_exact {
            self.tilde_pi_min
        } else {
            GRID_MIN_SAFETY * self.tilde_pi_min
        }
    }

    pub fn is_dirichlet(&self) -> bool {
        self.tilde_pi.is_constant()
    }

    /// Unnormalized density. Errors at boundary points where some `α_k < 1`.
    pub fn kernel(&self, p: &SimplexPoint) -> Result<f64> {
        check_dim(p, self.dim())?;
        let mut log_power = 0.0;
        for (k, (&x, &a)) in p.coords().iter().zip(&self.alpha).enumerate() {
            if x == 0.0 {
                if a < 1.0 {
                    return Err(Error::UnboundedAtBoundary { index: k, alpha: a });
                }
                if a > 1.0 {
                    return Ok(0.0);
                }
            } else {
                log_power += (a - 1.0) * x.ln();
            }
        }
        let t = self.tilde_pi.eval(p.coords());
        if !(t > 0.0) {
            return Err(Error::NotConditionP(format!("tilde_pi evaluates to {t} at {:?}", p.coords())));
        }
        Ok(t * log_power.exp())
    }
}

fn validate_alpha(alpha: &[f64]) -> Result<()> {
    if alpha.len() < 2 {
        return Err(Error::InvalidParameter(format!("need K >= 2, got {}", alpha.len())));
    }
    if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::InvalidParameter(format!("exponent {a} must be positive and finite")));
    }
    Ok(())
}

fn check_dim(p: &SimplexPoint, k: usize) -> Result<()> {
    if p.dim() != k {
        return Err(Error::InvalidPoint(format!("point has K = {}, prior has K = {k}", p.dim())));
    }
    Ok(())
}

fn default_resolution(k: usize) -> usize {
    match k {
        2 => DEFAULT_GRID_RESOLUTION,
        3 => 128,
        _ => largest_resolution(k, 200_000),
    }
}

fn largest_resolution(k: usize, budget: u128) -> usize {
    let mut r = 1;
    while lattice_size(k, r + 1) <= budget && r < DEFAULT_GRID_RESOLUTION {
        r += 1;
    }
    r
}

/// Finite mixture of Dirichlet distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletMixturePrior {
    weights: Vec<f64>,
    params: Vec<Vec<f64>>,
    support_box: Option<(f64, f64)>,
}

impl DirichletMixturePrior {
    pub fn new(weights: Vec<f64>, params: Vec<Vec<f64>>, support_box: Option<(f64, f64)>) -> Result<Self> {
        if weights.is_empty() || weights.len() != params.len() {
            return Err(Error::InvalidParameter(format!(
                "{} weights for {} components",
                weights.len(),
                params.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidParameter(format!("mixture weight {w} must be positive")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("mixture weights sum to {total}")));
        }
        let k = params[0].len();
        for theta in &params {
            if theta.len() != k {
                return Err(Error::InvalidParameter("components differ in dimension".into()));
            }
            validate_alpha(theta)?;
        }
        if let Some((a, big_a)) = support_box {
            if !(0.0 <= a && a <= big_a && big_a.is_finite()) {
                return Err(Error::InvalidParameter(format!("support box [{a}, {big_a}] is invalid")));
            }
            if let Some(x) = params.iter().flatten().find(|x| **x < a || **x > big_a) {
                return Err(Error::InvalidParameter(format!(
                    "parameter {x} lies outside support box [{a}, {big_a}]"
                )));
            }
        }
        Ok(Self { weights, params, support_box })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn support_box(&self) -> Option<(f64, f64)> {
        self.support_box
    }

    pub fn dim(&self) -> usize {
        self.params[0].len()
    }

    /// Componentwise minimum of the mixing parameters.
    pub fn alpha_min(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| self.params.iter().map(|t| t[k]).fold(f64::INFINITY, f64::min))
            .collect()
    }

    /// Box `[a, A]` containing every parameter entry: the declared one, or
    /// the tightest one otherwise.
    pub fn effective_box(&self) -> (f64, f64) {
        self.support_box.unwrap_or_else(|| {
            let flat = self.params.iter().flatten().copied();
            let lo = flat.clone().fold(f64::INFINITY, f64::min);
            let hi = flat.fold(0.0, f64::max);
            (lo, hi)
        })
    }

    /// Every vertex of the simplex has a component attaining the
    /// componentwise-minimal exponents on all the other coordinates. When
    /// this holds, `π̃` relative to [`Self::alpha_min`] is positive on the
    /// closed simplex.
    pub fn vertex_condition(&self) -> bool {
        let amin = self.alpha_min();
        (0..self.dim()).all(|vertex| {
            self.params.iter().any(|t| {
                (0..self.dim()).filter(|&k| k != vertex).all(|k| t[k] == amin[k])
            })
        })
    }

    /// Normalized mixture density.
    pub fn density(&self, p: &SimplexPoint) -> Result<f64> {
        check_dim(p, self.dim())?;
        let mut total = 0.0;
        for (w, theta) in self.weights.iter().zip(&self.params) {
            let mut log_term = w.ln() - ln_multi_beta(theta);
            for (k, (&x, &a)) in p.coords().iter().zip(theta).enumerate() {
                if x == 0.0 {
                    if a < 1.0 {
                        return Err(Error::UnboundedAtBoundary { index: k, alpha: a });
                    }
                    if a > 1.0 {
                        log_term = f64::NEG_INFINITY;
                    }
                } else {
                    log_term += (a - 1.0) * x.ln();
                }
            }
            total += log_term.exp();
        }
        Ok(total)
    }

    /// The mixture as a Condition-𝒫 prior with `α` = [`Self::alpha_min`].
    pub fn as_condition_p(&self) -> Result<ConditionPPrior> {
        if !self.vertex_condition() {
            return Err(Error::NotConditionP(
                "no component attains the minimal exponents at every vertex".into(),
            ));
        }
        let alpha = self.alpha_min();
        let weights = self.weights.clone();
        let params = self.params.clone();
        let amin = alpha.clone();
        let log_norms: Vec<f64> = params.iter().map(|t| ln_multi_beta(t)).collect();
        let f: TildeFn = Arc::new(move |p: &[f64]| {
            let mut total = 0.0;
            for ((w, theta), ln_b) in weights.iter().zip(&params).zip(&log_norms) {
                let mut log_term = w.ln() - ln_b;
                for ((&x, &t), &a) in p.iter().zip(theta).zip(&amin) {
                    let e = t - a;
                    if e == 0.0 {
                        continue;
                    }
                    if x == 0.0 {
                        log_term = f64::NEG_INFINITY;
                        break;
                    }
                    log_term += e * x.ln();
                }
                total += log_term.exp();
            }
            total
        });
        ConditionPPrior::new(alpha, TildePi::Function(f))
    }
}

/// The prior `π(p) ∝ exp(-1/p_1)` on the 2-simplex. Its density vanishes
/// faster than any power as `p_1 → 0`, so no exponent vector works.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryFailurePrior;

impl BoundaryFailurePrior {
    pub fn kernel_at(p1: f64) -> f64 {
        (-1.0 / p1).exp()
    }

    pub fn ln_kernel_at(p1: f64) -> f64 {
        -1.0 / p1
    }
}

/// Any supported prior.
#[derive(Debug, Clone)]
pub enum Prior {
    ConditionP(ConditionPPrior),
    Mixture(DirichletMixturePrior),
    BoundaryFailure(BoundaryFailurePrior),
}

impl Prior {
    pub fn dim(&self) -> usize {
        match self {
            Prior::ConditionP(p) => p.dim(),
            Prior::Mixture(m) => m.dim(),
            Prior::BoundaryFailure(_) => 2,
        }
    }

    pub fn dirichlet(alpha: Vec<f64>) -> Result<Self> {
        ConditionPPrior::dirichlet(alpha).map(Prior::ConditionP)
    }

    /// Exponents of the Dirichlet prior, if this is one.
    pub fn dirichlet_alpha(&self) -> Option<&[f64]> {
        match self {
            Prior::ConditionP(p) if p.is_dirichlet() => Some(p.alpha()),
            _ => None,
        }
    }
}

impl From<ConditionPPrior> for Prior {
    fn from(p: ConditionPPrior) -> Self {
        Prior::ConditionP(p)
    }
}

impl From<DirichletMixturePrior> for Prior {
    fn from(p: DirichletMixturePrior) -> Self {
        Prior::Mixture(p)
    }
}

/// A density value and whether it is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityValue {
    pub value: f64,
    pub normalized: bool,
}

/// Evaluates the prior density at `p`.
///
/// Condition-𝒫 priors and the boundary-failure prior return unnormalized
/// kernels; mixtures return their normalized density.
pub fn eval_density(prior: &Prior, p: &SimplexPoint) -> Result<DensityValue> {
    match prior {
        Prior::ConditionP(c) => Ok(DensityValue { value: c.kernel(p)?, normalized: false }),
        Prior::Mixture(m) => Ok(DensityValue { value: m.density(p)?, normalized: true }),
        Prior::BoundaryFailure(_) => {
            check_dim(p, 2)?;
            if !p.is_interior() {
                return Err(Error::InvalidPoint("boundary-failure prior needs an interior point".into()));
            }
            Ok(DensityValue { value: BoundaryFailurePrior::kernel_at(p.get(0)), normalized: false })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Satisfies {
    Yes,
    No,
    NumericOnly,
}

/// Outcome of [`classify_condition_p`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub satisfies: Satisfies,
    pub alpha: Option<Vec<f64>>,
    pub tilde_pi_min_estimate: Option<f64>,
    /// Largest change of `π̃` between neighbouring lattice nodes.
    pub modulus_of_continuity: Option<f64>,
    pub note: String,
}

/// Classifies a prior against Condition 𝒫.
pub fn classify_condition_p(prior: &Prior, grid_resolution: usize) -> ConditionReport {
    match prior {
        Prior::ConditionP(c) if c.is_dirichlet() => ConditionReport {
            satisfies: Satisfies::Yes,
            alpha: Some(c.alpha().to_vec()),
            tilde_pi_min_estimate: Some(c.tilde_pi_min()),
            modulus_of_continuity: Some(0.0),
            note: "Dirichlet density: tilde_pi is constant".into(),
        },
        Prior::ConditionP(c) => {
            let res = match c.dim() {
                2 => grid_resolution.max(1),
                3 => grid_resolution.clamp(1, 256),
                k => grid_resolution.clamp(1, largest_resolution(k, 200_000)),
            };
            let scan = lattice_scan(c.tilde_pi(), c.dim(), res);
            let satisfies = if scan.min > 0.0 && scan.min.is_finite() {
                Satisfies::NumericOnly
            } else {
                Satisfies::No
            };
            ConditionReport {
                satisfies,
                alpha: Some(c.alpha().to_vec()),
                tilde_pi_min_estimate: Some(scan.min),
                modulus_of_continuity: Some(scan.modulus),
                note: format!(
                    "grid-based: min and modulus of continuity estimated on a lattice of resolution {res}"
                ),
            }
        }
        Prior::Mixture(m) => ConditionReport {
            satisfies: Satisfies::Yes,
            alpha: Some(m.alpha_min()),
            tilde_pi_min_estimate: None,
            modulus_of_continuity: None,
            note: if m.vertex_condition() {
                "Dirichlet mixture: alpha is the componentwise minimum of the mixing parameters".into()
            } else {
                "Dirichlet mixture with bounded mixing support: posterior means obey the mixture bounds".into()
            },
        },
        Prior::BoundaryFailure(_) => ConditionReport {
            satisfies: Satisfies::No,
            alpha: None,
            tilde_pi_min_estimate: None,
            modulus_of_continuity: None,
            note: "exponential boundary decay: exp(-1/p_1) vanishes faster than any power as p_1 -> 0".into(),
        },
    }
}

struct LatticeScan {
    min: f64,
    modulus: f64,
}

fn lattice_scan(tilde: &TildePi, k: usize, resolution: usize) -> LatticeScan {
    let nodes = lattice(k, resolution as u32);
    let r = resolution as f64;
    let values: Vec<f64> = nodes
        .par_iter()
        .map(|nu| {
            let p: Vec<f64> = nu.iter().map(|&v| v as f64 / r).collect();
            tilde.eval(&p)
        })
        .collect();
    let index: HashMap<&[u32], usize> = nodes.iter().enumerate().map(|(i, nu)| (nu.as_slice(), i)).collect();
    let mut min = f64::INFINITY;
    let mut modulus: f64 = 0.0;
    let mut neighbour = vec![0u32; k];
    for (idx, nu) in nodes.iter().enumerate() {
        let v = values[idx];
        if v.is_nan() {
            min = f64::NAN;
        } else {
            min = min.min(v);
        }
        for i in 0..k {
            for j in 0..k {
                if i == j || nu[j] == 0 {
                    continue;
                }
                neighbour.copy_from_slice(nu);
                neighbour[i] += 1;
                neighbour[j] -= 1;
                if let Some(&n) = index.get(neighbour.as_slice()) {
                    modulus = modulus.max((values[n] - v).abs());
                }
            }
        }
    }
    LatticeScan { min, modulus }
}

/// Integrates `g(t) ∏ t_j^(w_j - 1)` over the simplex `{t ∈ [0,1]^J : Σt = 1}`
/// by nested stick-breaking, one beta-weighted integral per level.
struct SimplexIntegrator<'a> {
    weights: &'a [f64],
    spec: QuadratureSpec,
    converged: Cell<bool>,
    max_rel_error: Cell<f64>,
}

impl<'a> SimplexIntegrator<'a> {
    fn new(weights: &'a [f64], spec: QuadratureSpec) -> Self {
        Self { weights, spec, converged: Cell::new(true), max_rel_error: Cell::new(0.0) }
    }

    fn integrate(&self, g: &dyn Fn(&[f64]) -> f64) -> f64 {
        let mut prefix = Vec::with_capacity(self.weights.len());
        self.level(0, &mut prefix, 1.0, g)
    }

    fn level(&self, j: usize, prefix: &mut Vec<f64>, remaining: f64, g: &dyn Fn(&[f64]) -> f64) -> f64 {
        let last = self.weights.len() - 1;
        if j == last {
            prefix.push(remaining);
            let v = g(prefix);
            prefix.pop();
            return v;
        }
        let a = self.weights[j] - 1.0;
        let b = self.weights[j + 1..].iter().sum::<f64>() - 1.0;
        let base = prefix.clone();
        let log_inner = |s: f64| {
            let mut pre = base.clone();
            pre.push(remaining * s);
            self.level(j + 1, &mut pre, remaining * (1.0 - s), g).ln()
        };
        let r = beta_weighted(log_inner, a, b, 0.0, &[0.5], &self.spec);
        if !r.converged {
            self.converged.set(false);
        }
        if r.value != 0.0 {
            self.max_rel_error.set(self.max_rel_error.get().max(r.error / r.value.abs()));
        }
        r.value
    }
}

/// Induced prior of `(p_k̄, Σ_{k≠k̄} p_k)` on the 2-simplex.
///
/// Its continuous factor is tabulated on `spec.grid_resolution + 1` nodes by
/// integrating `π̃` against the Dirichlet weight of the remaining
/// coordinates; the result satisfies Condition 𝒫 with exponents
/// `(α_k̄, Σ_{k≠k̄} α_k)`.
pub fn induce_two_sided(prior: &ConditionPPrior, kbar: usize, spec: &QuadratureSpec) -> Result<ConditionPPrior> {
    let k = prior.dim();
    if k <= 2 {
        return Err(Error::UnsupportedDimension { k, reason: "induce_two_sided needs K > 2".into() });
    }
    if kbar >= k {
        return Err(Error::InvalidParameter(format!("side {kbar} out of range for K = {k}")));
    }
    let alpha = prior.alpha();
    let others: Vec<f64> = (0..k).filter(|&i| i != kbar).map(|i| alpha[i]).collect();
    let new_alpha = vec![alpha[kbar], others.iter().sum()];
    let res = spec.grid_resolution.max(1);
    let outcome: Vec<(f64, bool, f64)> = (0..=res)
        .into_par_iter()
        .map(|i| {
            let q1 = i as f64 / res as f64;
            let q2 = 1.0 - q1;
            let integ = SimplexIntegrator::new(&others, *spec);
            let g = |t: &[f64]| {
                let p = assemble(kbar, q1, q2, t);
                prior.tilde_pi_at(&p)
            };
            let v = integ.integrate(&g);
            (v, integ.converged.get(), integ.max_rel_error.get())
        })
        .collect();
    finish_induced(new_alpha, res, outcome)
}

/// Induced prior for an arbitrary density on the `K`-simplex, divided by
/// `q_1^(a_1 - 1) q_2^(a_2 - 1)` for caller-supplied exponents `a`.
///
/// Nodes at `q_1 = 0` and `q_1 = 1` are evaluated `boundary_offset` inside
/// the simplex, so the result is a numeric estimate of `π̃`.
pub fn induce_two_sided_density(
    density: &(dyn Fn(&[f64]) -> f64 + Sync),
    k: usize,
    kbar: usize,
    induced_alpha: [f64; 2],
    spec: &QuadratureSpec,
) -> Result<ConditionPPrior> {
    if k <= 2 {
        return Err(Error::UnsupportedDimension { k, reason: "induce_two_sided needs K > 2".into() });
    }
    if kbar >= k {
        return Err(Error::InvalidParameter(format!("side {kbar} out of range for K = {k}")));
    }
    validate_alpha(&induced_alpha)?;
    const BOUNDARY_OFFSET: f64 = 1e-6;
    let ones = vec![1.0; k - 1];
    let res = spec.grid_resolution.max(2);
    let outcome: Vec<(f64, bool, f64)> = (0..=res)
        .into_par_iter()
        .map(|i| {
            let q1 = (i as f64 / res as f64).clamp(BOUNDARY_OFFSET, 1.0 - BOUNDARY_OFFSET);
            let q2 = 1.0 - q1;
            let integ = SimplexIntegrator::new(&ones, *spec);
            let g = |t: &[f64]| density(&assemble(kbar, q1, q2, t));
            let mass = q2.powi(k as i32 - 2) * integ.integrate(&g);
            let scale = q1.powf(induced_alpha[0] - 1.0) * q2.powf(induced_alpha[1] - 1.0);
            (mass / scale, integ.converged.get(), integ.max_rel_error.get())
        })
        .collect();
    finish_induced(induced_alpha.to_vec(), res, outcome)
}

fn assemble(kbar: usize, q1: f64, q2: f64, t: &[f64]) -> Vec<f64> {
    let mut p = Vec::with_capacity(t.len() + 1);
    let mut it = t.iter();
    for i in 0..=t.len() {
        if i == kbar {
            p.push(q1);
        } else {
            p.push(q2 * it.next().copied().unwrap_or(0.0));
        }
    }
    p
}

fn finish_induced(alpha: Vec<f64>, res: usize, outcome: Vec<(f64, bool, f64)>) -> Result<ConditionPPrior> {
    if let Some((v, _, e)) = outcome.iter().find(|(_, ok, _)| !ok) {
        return Err(Error::Quadrature { value: *v, error: e * v.abs() });
    }
    let values: Vec<f64> = outcome.into_iter().map(|(v, _, _)| v).collect();
    let grid = GridTable::from_values(2, res, values)?;
    ConditionPPrior::new(alpha, TildePi::Grid(grid))
}

/// JSON description of a prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorConfig {
    Dirichlet {
        alpha: Vec<f64>,
    },
    DirichletMixture {
        weights: Vec<f64>,
        params: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        support_box: Option<(f64, f64)>,
    },
    ExpBoundary,
    Grid {
        alpha: Vec<f64>,
        tilde_pi_grid_file: PathBuf,
    },
    /// `π̃(p) = offset + amplitude · sin(frequency · π · p_1)`.
    Sine {
        alpha: Vec<f64>,
        offset: f64,
        amplitude: f64,
        frequency: f64,
    },
}

impl PriorConfig {
    /// Builds the prior. Relative grid paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<Prior> {
        Ok(match self {
            PriorConfig::Dirichlet { alpha } => Prior::ConditionP(ConditionPPrior::dirichlet(alpha.clone())?),
            PriorConfig::DirichletMixture { weights, params, support_box } => {
                Prior::Mixture(DirichletMixturePrior::new(weights.clone(), params.clone(), *support_box)?)
            }
            PriorConfig::ExpBoundary => Prior::BoundaryFailure(BoundaryFailurePrior),
            PriorConfig::Grid { alpha, tilde_pi_grid_file } => {
                let path = if tilde_pi_grid_file.is_absolute() {
                    tilde_pi_grid_file.clone()
                } else {
                    base_dir.join(tilde_pi_grid_file)
                };
                let grid = GridTable::from_csv(&path, alpha.len())?;
                Prior::ConditionP(ConditionPPrior::new(alpha.clone(), TildePi::Grid(grid))?)
            }
            PriorConfig::Sine { alpha, offset, amplitude, frequency } => Prior::ConditionP(ConditionPPrior::new(
                alpha.clone(),
                TildePi::Sine { offset: *offset, amplitude: *amplitude, frequency: *frequency },
            )?),
        })
    }
}
