use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σw = 1` for a valid weight vector.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Non-negative per-variable distance weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::contract("weight vector must be non-empty"));
        }
        if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::contract("weights must be finite and non-negative"));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::contract(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(w))
    }

    pub fn uniform(d: usize) -> Self {
        assert!(d > 0, "dimension must be positive");
        Self(vec![1.0 / d as f64; d])
    }

    /// Projects arbitrary reals onto the simplex: negatives clamp to zero,
    /// an all-zero vector becomes uniform, anything else is divided by its
    /// sum. Vectors that are already valid come back unchanged.
    pub fn repair(genome: &[f64]) -> Self {
        assert!(!genome.is_empty(), "dimension must be positive");
        let clamped: Vec<f64> = genome
            .iter()
            .map(|&x| if x.is_finite() && x > 0.0 { x } else { 0.0 })
            .collect();
        let sum: f64 = clamped.iter().sum();
        if clamped == genome && (sum - 1.0).abs() <= SIMPLEX_TOL {
            return Self(clamped);
        }
        if sum <= 0.0 || !sum.is_finite() {
            return Self::uniform(genome.len());
        }
        Self(clamped.into_iter().map(|x| x / sum).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;

    fn try_from(w: Vec<f64>) -> Result<Self> {
        Self::new(w)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

/// `Σ wᵢ (xᵢ − yᵢ)²`, no dimension checks.
#[inline]
pub fn weighted_sq_distance(x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .zip(w)
        .map(|((a, b), wi)| {
            let d = a - b;
            wi * d * d
        })
        .sum()
}

/// `sqrt(Σ wᵢ (xᵢ − yᵢ)²)`.
pub fn weighted_distance(x: &[f64], y: &[f64], w: &WeightVector) -> Result<f64> {
    if x.len() != y.len() || x.len() != w.dim() {
        return Err(Error::contract(format!(
            "dimension mismatch: x={}, y={}, w={}",
            x.len(),
            y.len(),
            w.dim()
        )));
    }
    Ok(weighted_sq_distance(x, y, w.as_slice()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_values() {
        let w = WeightVector::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(weighted_distance(&[0.0, 0.0], &[1.0, 1.0], &w).unwrap(), 1.0);
        let w = WeightVector::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(weighted_distance(&[0.0, 5.0], &[0.0, -7.0], &w).unwrap(), 0.0);
        let w = WeightVector::uniform(3);
        let d = weighted_distance(&[0.0; 3], &[3.0, 4.0, 0.0], &w).unwrap();
        assert!((d - 5.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let w = WeightVector::uniform(2);
        assert!(weighted_distance(&[0.0], &[1.0, 1.0], &w).is_err());
    }

    #[test]
    fn repair_rules() {
        let r = WeightVector::repair(&[-0.2, 0.5, 0.7]);
        let expect = [0.0, 5.0 / 12.0, 7.0 / 12.0];
        for (a, b) in r.as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(WeightVector::repair(&[0.0; 3]), WeightVector::uniform(3));
        let valid = [0.6, 0.3, 0.1];
        assert_eq!(WeightVector::repair(&valid).as_slice(), &valid);
    }

    #[test]
    fn rejects_off_simplex() {
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![-0.5, 1.5]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
    }

    fn arb_weights(d: usize) -> impl Strategy<Value = WeightVector> {
        proptest::collection::vec(0.0f64..1.0, d).prop_map(|g| WeightVector::repair(&g))
    }

    proptest! {
        #[test]
        fn metric_axioms(
            w in arb_weights(4),
            pts in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 4), 3),
        ) {
            let (x, y, z) = (&pts[0], &pts[1], &pts[2]);
            let dxy = weighted_distance(x, y, &w).unwrap();
            let dyx = weighted_distance(y, x, &w).unwrap();
            let dxz = weighted_distance(x, z, &w).unwrap();
            let dzy = weighted_distance(z, y, &w).unwrap();
            prop_assert_eq!(dxy, dyx);
            prop_assert!(dxy <= dxz + dzy + 1e-12);
            prop_assert!(dxy >= 0.0);
        }

        #[test]
        fn repair_lands_on_simplex(g in proptest::collection::vec(-2.0f64..2.0, 1..8)) {
            let w = WeightVector::repair(&g);
            prop_assert!(WeightVector::new(w.clone().into_vec()).is_ok());
        }

        #[test]
        fn scaling_weights_is_canonical(g in proptest::collection::vec(0.01f64..1.0, 3)) {
            let a = WeightVector::repair(&g);
            let doubled: Vec<f64> = g.iter().map(|x| 2.0 * x).collect();
            let b = WeightVector::repair(&doubled);
            for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((p - q).abs() < 1e-15);
            }
        }
    }
}
