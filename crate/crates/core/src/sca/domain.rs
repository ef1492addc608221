//! The 1-D heterogeneous bar and its elastic strain concentration.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Uniform grid on [0, L] with a positive stiffness per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroDomain {
    pub length: f64,
    pub coords: Vec<f64>,
    pub stiffness: Vec<f64>,
}

impl MicroDomain {
    /// C(x) = 1/(1+x²) sampled at `n_points` equally spaced points including both ends.
    pub fn reference(length: f64, n_points: usize) -> Result<Self> {
        Self::from_fn(length, n_points, |x| 1.0 / (1.0 + x * x))
    }

    pub fn from_fn(length: f64, n_points: usize, c: impl Fn(f64) -> f64) -> Result<Self> {
        if n_points < 2 || !(length > 0.0) {
            return Err(contract("the domain needs a positive length and at least two points"));
        }
        let coords: Vec<f64> = (0..n_points).map(|i| length * i as f64 / (n_points - 1) as f64).collect();
        let stiffness = coords.iter().map(|&x| c(x)).collect();
        Self::new(length, coords, stiffness)
    }

    pub fn new(length: f64, coords: Vec<f64>, stiffness: Vec<f64>) -> Result<Self> {
        if coords.len() != stiffness.len() || coords.is_empty() {
            return Err(contract("one stiffness value per grid point is required"));
        }
        if let Some(c) = stiffness.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(contract(format!("stiffness must be positive and finite, got {c}")));
        }
        Ok(Self { length, coords, stiffness })
    }

    pub fn n_points(&self) -> usize {
        self.coords.len()
    }

    /// Volume average of C, the reference stiffness C⁰.
    pub fn mean_stiffness(&self) -> f64 {
        self.stiffness.iter().sum::<f64>() / self.n_points() as f64
    }

    /// Volume average of the compliance 1/C.
    pub fn mean_compliance(&self) -> f64 {
        self.stiffness.iter().map(|c| 1.0 / c).sum::<f64>() / self.n_points() as f64
    }

    /// Pointwise strain under applied mean strain ε̄: constant stress ε̄/⟨1/C⟩ divided by C(x).
    pub fn exact_strain(&self, strain: f64) -> Vec<f64> {
        elastic_precompute(self).into_iter().map(|a| a * strain).collect()
    }
}

/// Strain concentration A(x) = ε(x)/ε̄ = (1/C(x))/⟨1/C⟩.
pub fn elastic_precompute(domain: &MicroDomain) -> Vec<f64> {
    let mean = domain.mean_compliance();
    domain.stiffness.iter().map(|c| 1.0 / (c * mean)).collect()
}
