//! Space-time bilinear elements for EA u_xx − ρA u_tt + f = 0.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::forcing::Forcing;
use super::system::{BlockSet, SpaceTimeSystem};
use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarSupport {
    FreeFree,
    /// u = 0 at the left end.
    ClampedFree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarProblem {
    pub e: f64,
    pub a_cs: f64,
    pub rho: f64,
    pub length: f64,
    /// Spatial nodes N.
    pub n_nodes: usize,
    /// Time nodes T.
    pub n_time: usize,
    pub t_end: f64,
    pub support: BarSupport,
    /// Axial load at the right end.
    pub tip_force: Forcing,
    pub u0: Vec<f64>,
    pub v0: Vec<f64>,
}

fn lin_stiff(h: f64) -> [[f64; 2]; 2] {
    [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]]
}

fn lin_mass(h: f64) -> [[f64; 2]; 2] {
    [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]]
}

/// Element stiffness ∫∫ EA ṽ_x u_x and mass ∫∫ ρA ṽ_t u_t over one
/// space-time rectangle; local node k = 2·(time index) + (space index).
pub fn bar_element_matrices(ea: f64, rho_a: f64, dx: f64, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (lx, mx, lt, mt) = (lin_stiff(dx), lin_mass(dx), lin_stiff(dt), lin_mass(dt));
    let k = DMatrix::from_fn(4, 4, |i, j| ea * lx[i % 2][j % 2] * mt[i / 2][j / 2]);
    let m = DMatrix::from_fn(4, 4, |i, j| rho_a * mx[i % 2][j % 2] * lt[i / 2][j / 2]);
    (k, m)
}

/// Assembles the bar; coefficients are (E, ρ) with A_cs entering as a fixed factor.
pub fn assemble_bar(p: &BarProblem) -> Result<SpaceTimeSystem> {
    if p.n_nodes < 2 || p.n_time < 3 {
        return Err(contract("the bar needs N ≥ 2 spatial and T ≥ 3 time nodes"));
    }
    if !(p.length > 0.0 && p.t_end > 0.0) {
        return Err(contract("length and duration must be positive"));
    }
    if !(p.e > 0.0 && p.a_cs > 0.0 && p.rho >= 0.0) {
        return Err(contract("E and A_cs must be positive and ρ non-negative"));
    }
    let n = p.n_nodes;
    if p.u0.len() != n || p.v0.len() != n {
        return Err(contract("initial state must have one value per spatial node"));
    }
    let dx = p.length / (n - 1) as f64;
    let dt = p.t_end / (p.n_time - 1) as f64;
    let (ke, me) = bar_element_matrices(p.a_cs, p.a_cs, dx, dt);
    let mut k_slab = DMatrix::zeros(2 * n, 2 * n);
    let mut m_slab = DMatrix::zeros(2 * n, 2 * n);
    let mut mass = DMatrix::zeros(n, n);
    let mx = lin_mass(dx);
    for e in 0..n - 1 {
        let g = |k: usize| (k / 2) * n + e + k % 2;
        for i in 0..4 {
            for j in 0..4 {
                k_slab[(g(i), g(j))] += ke[(i, j)];
                m_slab[(g(i), g(j))] += me[(i, j)];
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                mass[(e + i, e + j)] += p.a_cs * mx[i][j];
            }
        }
    }
    let term_e = BlockSet::from_slab(&k_slab, DMatrix::zeros(n, n));
    let term_rho = BlockSet::from_slab(&(-m_slab), mass);
    let mut forces = Vec::with_capacity(p.n_time - 1);
    for t in 0..p.n_time - 1 {
        let t_node = t as f64 * dt;
        let mut f = DVector::zeros(n);
        f[n - 1] += p.tip_force.element_vector(t_node, t_node + dt)[0];
        if t > 0 {
            f[n - 1] += p.tip_force.element_vector(t_node - dt, t_node)[1];
        }
        forces.push(f);
    }
    let fixed = match p.support {
        BarSupport::FreeFree => vec![],
        BarSupport::ClampedFree => vec![0],
    };
    SpaceTimeSystem::new(
        dt,
        Some(dx),
        vec!["E".into(), "rho".into()],
        vec![p.e, p.rho],
        vec![term_e, term_rho],
        forces,
        DVector::from_column_slice(&p.u0),
        DVector::from_column_slice(&p.v0),
        fixed,
    )
}
