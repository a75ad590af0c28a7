//! Globally adaptive Gauss–Kronrod (7/15) quadrature and a beta-weighted
//! wrapper that removes integrable power singularities at the endpoints.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances and limits for adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// Nodes per dimension when a quadrature result is tabulated on a grid.
    pub grid_resolution: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-14,
            rel_tol: 1e-11,
            max_subdivisions: 10_000,
            grid_resolution: 256,
        }
    }
}

/// Value of an integral with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut error = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }
    Segment { a, b, value, error }
}

/// Integrates `f` over `[points[0], points[last]]`, starting from the given
/// breakpoints and bisecting the segment with the largest error estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: F, points: &[f64], spec: &QuadratureSpec) -> Integral {
    assert!(points.len() >= 2, "need at least two breakpoints");
    let mut heap = BinaryHeap::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            heap.push(kronrod15(&f, w[0], w[1]));
        }
    }
    let mut subdivisions = heap.len();
    loop {
        let (value, error) = totals(&heap);
        let target = spec.abs_tol.max(spec.rel_tol * value.abs());
        if error <= target {
            return Integral { value, error, subdivisions, converged: true };
        }
        if subdivisions >= spec.max_subdivisions {
            return Integral { value, error, subdivisions, converged: false };
        }
        let Some(worst) = heap.pop() else {
            return Integral { value: 0.0, error: 0.0, subdivisions, converged: true };
        };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Segment cannot be split further in floating point.
            heap.push(Segment { error: 0.0, ..worst });
            let (value, error) = totals(&heap);
            return Integral { value, error: error.max(worst.error), subdivisions, converged: false };
        }
        heap.push(kronrod15(&f, worst.a, mid));
        heap.push(kronrod15(&f, mid, worst.b));
        subdivisions += 1;
    }
}

fn totals(heap: &BinaryHeap<Segment>) -> (f64, f64) {
    // Sum in a fixed order so results do not depend on heap layout.
    let mut segs: Vec<&Segment> = heap.iter().collect();
    segs.sort_by(|x, y| x.a.total_cmp(&y.a));
    segs.iter().fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error))
}

/// `∫_0^1 x^a (1-x)^b exp(log_g(x) - shift) dx` for `a, b > -1`.
///
/// The first and last segments are integrated in the variables
/// `u = x^(a+1)` and `v = (1-x)^(b+1)`, which turns the power factors into
/// constants there and leaves a bounded integrand.
pub fn beta_weighted<F: Fn(f64) -> f64>(
    log_g: F,
    a: f64,
    b: f64,
    shift: f64,
    interior: &[f64],
    spec: &QuadratureSpec,
) -> Integral {
    assert!(a > -1.0 && b > -1.0, "exponents must exceed -1");
    let mut pts: Vec<f64> = interior
        .iter()
        .copied()
        .filter(|&x| x > 0.0 && x < 1.0)
        .collect();
    if pts.is_empty() {
        pts.push(0.5);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let first = pts[0];
    let last = pts[pts.len() - 1];

    let ea = a + 1.0;
    let eb = b + 1.0;
    // Per-segment tolerance shares; the overall target is enforced by the sum.
    let left = integrate(
        |u: f64| {
            if u <= 0.0 {
                return edge_value(&log_g, 0.0, shift) / ea;
            }
            let x = u.powf(1.0 / ea);
            let log_rest = if b == 0.0 { 0.0 } else { b * (-x).ln_1p() };
            (log_rest + log_g(x) - shift).exp() / ea
        },
        &[0.0, first.powf(ea)],
        spec,
    );
    let right = integrate(
        |v: f64| {
            if v <= 0.0 {
                return edge_value(&log_g, 1.0, shift) / eb;
            }
            let y = v.powf(1.0 / eb);
            let x = 1.0 - y;
            let log_rest = if a == 0.0 { 0.0 } else { a * x.ln() };
            (log_rest + log_g(x) - shift).exp() / eb
        },
        &[0.0, (1.0 - last).powf(eb)],
        spec,
    );
    let middle = if pts.len() > 1 {
        integrate(
            |x: f64| (a * x.ln() + b * (-x).ln_1p() + log_g(x) - shift).exp(),
            &pts,
            spec,
        )
    } else {
        Integral { value: 0.0, error: 0.0, subdivisions: 0, converged: true }
    };
    Integral {
        value: left.value + middle.value + right.value,
        error: left.error + middle.error + right.error,
        subdivisions: left.subdivisions + middle.subdivisions + right.subdivisions,
        converged: left.converged && middle.converged && right.converged,
    }
}

fn edge_value<F: Fn(f64) -> f64>(log_g: &F, x: f64, shift: f64) -> f64 {
    let v = log_g(x);
    if v.is_finite() {
        (v - shift).exp()
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::ln_beta;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| 3.0 * x * x, &[0.0, 1.0], &QuadratureSpec::default());
        assert_relative_eq!(r.value, 1.0, epsilon = 1e-14);
        assert!(r.converged);
    }

    #[test]
    fn smooth_integrand() {
        let r = integrate(f64::sin, &[0.0, std::f64::consts::PI], &QuadratureSpec::default());
        assert_relative_eq!(r.value, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn beta_weighted_matches_beta_function() {
        let spec = QuadratureSpec::default();
        for &(a, b) in &[(-0.5, -0.5), (0.0, 0.0), (-0.9, 3.0), (2.5, -0.3), (40.0, 7.0)] {
            let r = beta_weighted(|_| 0.0, a, b, 0.0, &[0.5], &spec);
            assert_relative_eq!(r.value, ln_beta(a + 1.0, b + 1.0).exp(), max_relative = 1e-10);
            assert!(r.converged, "a={a} b={b}");
        }
    }

    #[test]
    fn nonconvergence_is_reported() {
        let spec = QuadratureSpec { max_subdivisions: 3, ..Default::default() };
        let r = integrate(|x: f64| (1.0 / x).sin(), &[1e-6, 1.0], &spec);
        assert!(!r.converged);
    }
}
