//! Linear time elements for m ü + c u̇ + k u = f(t).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::forcing::Forcing;
use super::system::{BlockSet, SpaceTimeSystem};
use crate::error::{contract, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmdProblem {
    pub m: f64,
    pub c: f64,
    pub k: f64,
    pub forcing: Forcing,
    pub u0: f64,
    pub v0: f64,
    pub t_end: f64,
    pub n_elem: usize,
}

impl SmdProblem {
    /// m = 1, c = 10, k = 100, f = 10 sin 2πt, u(0) = u̇(0) = 1 over 3 time units.
    pub fn reference(n_elem: usize) -> Self {
        Self {
            m: 1.0,
            c: 10.0,
            k: 100.0,
            forcing: Forcing::sine(10.0, 2.0 * std::f64::consts::PI),
            u0: 1.0,
            v0: 1.0,
            t_end: 3.0,
            n_elem,
        }
    }

    pub fn coeffs(&self) -> [f64; 3] {
        [self.m, self.c, self.k]
    }

    pub fn with_coeffs(&self, [m, c, k]: [f64; 3]) -> Self {
        Self { m, c, k, ..self.clone() }
    }
}

/// Unit-coefficient element matrices (M, C, K) of length `dt`:
/// M = ∫ ṽ' u', C = ∫ ṽ u', K = ∫ ṽ u.
pub fn smd_element_matrices(dt: f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let m = DMatrix::from_row_slice(2, 2, &[1.0 / dt, -1.0 / dt, -1.0 / dt, 1.0 / dt]);
    let c = DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, -0.5, 0.5]);
    let k = DMatrix::from_row_slice(2, 2, &[dt / 3.0, dt / 6.0, dt / 6.0, dt / 3.0]);
    (m, c, k)
}

pub fn assemble_smd(p: &SmdProblem) -> Result<SpaceTimeSystem> {
    if !(p.m > 0.0) {
        return Err(contract(format!("mass must be positive, got {}", p.m)));
    }
    if p.n_elem < 2 || !(p.t_end > 0.0) {
        return Err(contract("need at least two time elements and a positive duration"));
    }
    if !(p.c.is_finite() && p.k.is_finite()) {
        return Err(contract("damping and stiffness must be finite"));
    }
    let dt = p.t_end / p.n_elem as f64;
    let (me, ce, ke) = smd_element_matrices(dt);
    let one = DMatrix::from_element(1, 1, 1.0);
    let zero = DMatrix::zeros(1, 1);
    let terms =
        vec![BlockSet::from_slab(&(-me), one), BlockSet::from_slab(&ce, zero.clone()), BlockSet::from_slab(&ke, zero)];
    let forces = (0..p.n_elem)
        .map(|t| {
            let t0 = t as f64 * dt;
            let mut f = p.forcing.element_vector(t0, t0 + dt)[0];
            if t > 0 {
                f += p.forcing.element_vector(t0 - dt, t0)[1];
            }
            DVector::from_element(1, f)
        })
        .collect();
    SpaceTimeSystem::new(
        dt,
        None,
        vec!["m".into(), "c".into(), "k".into()],
        vec![p.m, p.c, p.k],
        terms,
        forces,
        DVector::from_element(1, p.u0),
        DVector::from_element(1, p.v0),
        vec![],
    )
}
