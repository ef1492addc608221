//! Learnable finite-difference stencils, Euler integrators and Gauss quadrature.

mod euler;
mod linear;
mod quadrature;
mod stencil;

pub use euler::{explicit_euler_trajectory, integrate, train_euler, EulerFit, EulerNet, EulerSample};
pub use quadrature::{
    gauss_legendre, gauss_oracle, integrate_interval, train_quadrature, QuadratureFit, QuadratureNet,
};
pub use stencil::{apply_stencil, classical_stencil_oracle, train_stencil, StencilFit, StencilNet, StencilOutput};

use crate::error::{contract, Result};

/// Function samples on increasing coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    xs: Vec<f64>,
    ys: Vec<f64>,
    spacing: Option<f64>,
}

impl SampledFunction {
    /// Samples with arbitrary increasing coordinates. The spacing is detected
    /// when consecutive differences agree to 1e-12 relative.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(contract(format!("{} coordinates but {} values", xs.len(), ys.len())));
        }
        if xs.len() < 2 {
            return Err(contract("at least two samples are required"));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(contract("coordinates must be strictly increasing"));
        }
        let h = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        let uniform = xs.windows(2).all(|w| ((w[1] - w[0]) - h).abs() < 1e-12 * h);
        let spacing = uniform.then_some(h);
        Ok(Self { xs, ys, spacing })
    }

    /// `n` samples of `f` at `x0 + j·dx`.
    pub fn uniform(x0: f64, dx: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if !(dx > 0.0) {
            return Err(contract("spacing must be positive"));
        }
        let xs: Vec<f64> = (0..n).map(|j| x0 + j as f64 * dx).collect();
        let ys = xs.iter().map(|&x| f(x)).collect();
        let mut s = Self::new(xs, ys)?;
        s.spacing = Some(dx);
        Ok(s)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn spacing(&self) -> Option<f64> {
        self.spacing
    }
}
