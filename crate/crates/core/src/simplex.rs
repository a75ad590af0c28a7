//! Points of the probability simplex and regular lattices on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs whose coordinate sum is off by at most this much are renormalized.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-9;

/// A probability vector `p = (p_1, ..., p_K)` with `K >= 2`.
///
/// All `K` coordinates are stored. Construction renormalizes inputs whose sum
/// deviates from one by at most [`RENORMALIZE_TOLERANCE`] and rejects larger
/// deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexPoint {
    coords: Vec<f64>,
}

impl SimplexPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::InvalidPoint(format!("need K >= 2 coordinates, got {}", coords.len())));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite() || **c < 0.0 || **c > 1.0) {
            return Err(Error::InvalidPoint(format!("coordinate {bad} outside [0, 1]")));
        }
        let sum: f64 = coords.iter().sum();
        if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
            return Err(Error::InvalidPoint(format!("coordinates sum to {sum}, not 1")));
        }
        let coords = if sum == 1.0 {
            coords
        } else {
            coords.into_iter().map(|c| c / sum).collect()
        };
        Ok(Self { coords })
    }

    /// `(p_1, 1 - p_1)`.
    pub fn binary(p1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p1) {
            return Err(Error::InvalidPoint(format!("p_1 = {p1} outside [0, 1]")));
        }
        Ok(Self { coords: vec![p1, 1.0 - p1] })
    }

    /// Point from `K - 1` leading coordinates; the last one is implied.
    pub fn from_leading(leading: &[f64]) -> Result<Self> {
        let rest = 1.0 - leading.iter().sum::<f64>();
        let mut coords = leading.to_vec();
        coords.push(if rest.abs() < 1e-15 { 0.0 } else { rest });
        Self::new(coords)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn get(&self, k: usize) -> f64 {
        self.coords[k]
    }

    pub fn is_interior(&self) -> bool {
        self.coords.iter().all(|&c| c > 0.0)
    }
}

impl TryFrom<Vec<f64>> for SimplexPoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SimplexPoint> for Vec<f64> {
    fn from(p: SimplexPoint) -> Self {
        p.coords
    }
}

/// Number of multi-indices `ν ∈ ℕ₀^K` with `Σν = m`, i.e. `C(m + K - 1, K - 1)`.
pub fn lattice_size(k: usize, m: usize) -> u128 {
    let mut acc: u128 = 1;
    for i in 1..k {
        acc = acc * (m + i) as u128 / i as u128;
    }
    acc
}

/// All multi-indices of length `k` summing to `m`, in lexicographic order of
/// the leading coordinates (first coordinate descending).
pub fn lattice(k: usize, m: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; k];
    fill(&mut cur, 0, m, &mut out);
    out
}

fn fill(cur: &mut Vec<u32>, pos: usize, left: u32, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for v in (0..=left).rev() {
        cur[pos] = v;
        fill(cur, pos + 1, left - v, out);
    }
}

/// Lattice points `ν / m` as coordinate vectors.
pub fn lattice_points(k: usize, m: u32) -> Vec<Vec<f64>> {
    let scale = m as f64;
    lattice(k, m)
        .into_iter()
        .map(|nu| nu.iter().map(|&v| v as f64 / scale).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_points() {
        assert!(SimplexPoint::new(vec![1.0]).is_err());
        assert!(SimplexPoint::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexPoint::new(vec![-0.1, 1.1]).is_err());
        assert!(SimplexPoint::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn renormalizes_small_drift() {
        let p = SimplexPoint::new(vec![0.3, 0.7 + 5e-10]).unwrap();
        assert!((p.coords().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn lattice_counts() {
        assert_eq!(lattice(2, 4).len(), 5);
        assert_eq!(lattice(3, 4).len() as u128, lattice_size(3, 4));
        assert_eq!(lattice(4, 6).len() as u128, lattice_size(4, 6));
        assert!(lattice(3, 5).iter().all(|nu| nu.iter().sum::<u32>() == 5));
    }

    proptest! {
        #[test]
        fn constructed_points_sum_to_one(raw in prop::collection::vec(0.001f64..1.0, 2..7)) {
            let total: f64 = raw.iter().sum();
            let coords: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let p = SimplexPoint::new(coords).unwrap();
            let s: f64 = p.coords().iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            prop_assert!(p.coords().iter().all(|&c| (0.0..=1.0).contains(&c)));
        }
    }
}
