//! Block-banded space-time systems and their autoregressive solution.
//!
//! Row blocks are ordered: initial displacement, initial velocity, then one
//! block per interior time node t = 1..T−2 coupling u^{t−1}, u^t, u^{t+1}
//! through (A, B, C). The final-time boundary row is eliminated.

use nalgebra::{DMatrix, DVector};

use crate::error::{contract, Error, Result};
use crate::linalg::BandedMatrix;

/// The repeated sub-matrices of one coefficient (or of their sum).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSet {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    /// Velocity row: coefficients of u^0 and u^1.
    pub b0: DMatrix<f64>,
    pub c0: DMatrix<f64>,
    /// Velocity row load per unit initial velocity.
    pub vel: DMatrix<f64>,
}

impl BlockSet {
    pub fn zeros(n: usize) -> Self {
        let z = DMatrix::zeros(n, n);
        Self { a: z.clone(), b: z.clone(), c: z.clone(), b0: z.clone(), c0: z.clone(), vel: z }
    }

    /// Blocks from a time-slab matrix (2N × 2N, time-local index major) and the velocity load.
    pub fn from_slab(slab: &DMatrix<f64>, vel: DMatrix<f64>) -> Self {
        let n = slab.nrows() / 2;
        let s = |r: usize, c: usize| slab.view((r * n, c * n), (n, n)).into_owned();
        Self { a: s(1, 0), b: s(1, 1) + s(0, 0), c: s(0, 1), b0: s(0, 0), c0: s(0, 1), vel }
    }

    fn axpy(&mut self, w: f64, o: &BlockSet) {
        self.a += &o.a * w;
        self.b += &o.b * w;
        self.c += &o.c * w;
        self.b0 += &o.b0 * w;
        self.c0 += &o.c0 * w;
        self.vel += &o.vel * w;
    }

    /// Replaces the rows of fixed dofs by `u_i = 0` (or zeroes them for derivatives).
    fn constrain(&mut self, fixed: &[usize], identity: bool) {
        for &i in fixed {
            for m in [&mut self.a, &mut self.b, &mut self.c, &mut self.b0, &mut self.c0, &mut self.vel] {
                m.row_mut(i).fill(0.0);
            }
            if identity {
                self.c[(i, i)] = 1.0;
                self.c0[(i, i)] = 1.0;
            }
        }
    }
}

/// Space-time system whose blocks are linear in named physical coefficients.
#[derive(Debug, Clone)]
pub struct SpaceTimeSystem {
    pub n_space: usize,
    pub n_time: usize,
    pub dt: f64,
    pub dx: Option<f64>,
    pub names: Vec<String>,
    pub coeffs: Vec<f64>,
    /// Blocks per unit value of each coefficient.
    terms: Vec<BlockSet>,
    /// Load of row t for t = 0..T−2 (row 0 is the velocity row).
    pub forces: Vec<DVector<f64>>,
    pub u0: DVector<f64>,
    pub v0: DVector<f64>,
    /// Spatial dofs held at zero.
    pub fixed: Vec<usize>,
}

impl SpaceTimeSystem {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        dt: f64,
        dx: Option<f64>,
        names: Vec<String>,
        coeffs: Vec<f64>,
        terms: Vec<BlockSet>,
        forces: Vec<DVector<f64>>,
        u0: DVector<f64>,
        v0: DVector<f64>,
        fixed: Vec<usize>,
    ) -> Result<Self> {
        let n_space = u0.len();
        if names.len() != coeffs.len() || terms.len() != coeffs.len() {
            return Err(contract("one block term per coefficient is required"));
        }
        if v0.len() != n_space || forces.iter().any(|f| f.len() != n_space) {
            return Err(contract("state and load sizes differ"));
        }
        if forces.len() < 2 {
            return Err(contract("at least three time nodes are required"));
        }
        for &i in &fixed {
            if i >= n_space {
                return Err(Error::Index(format!("fixed dof {i} out of range")));
            }
        }
        let mut terms = terms;
        for t in &mut terms {
            t.constrain(&fixed, false);
        }
        let mut forces = forces;
        for f in &mut forces {
            for &i in &fixed {
                f[i] = 0.0;
            }
        }
        Ok(Self { n_space, n_time: forces.len() + 1, dt, dx, names, coeffs, terms, forces, u0, v0, fixed })
    }

    pub fn coeff(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coeffs[i])
    }

    pub fn with_coeffs(&self, coeffs: &[f64]) -> Result<Self> {
        if coeffs.len() != self.coeffs.len() {
            return Err(contract("coefficient count mismatch"));
        }
        let mut s = self.clone();
        s.coeffs = coeffs.to_vec();
        Ok(s)
    }

    /// Same operator with new initial state.
    pub fn with_initial_state(&self, u0: DVector<f64>, v0: DVector<f64>) -> Result<Self> {
        if u0.len() != self.n_space || v0.len() != self.n_space {
            return Err(contract("initial state size mismatch"));
        }
        let mut s = self.clone();
        s.u0 = u0;
        s.v0 = v0;
        Ok(s)
    }

    /// Derivative of the blocks with respect to coefficient `i`.
    pub fn term(&self, i: usize) -> &BlockSet {
        &self.terms[i]
    }

    pub fn blocks(&self) -> BlockSet {
        let mut b = BlockSet::zeros(self.n_space);
        for (w, t) in self.coeffs.iter().zip(&self.terms) {
            b.axpy(*w, t);
        }
        b.constrain(&self.fixed, true);
        b
    }

    fn singular(&self, what: &str) -> Error {
        let c: Vec<String> = self.names.iter().zip(&self.coeffs).map(|(n, v)| format!("{n} = {v}")).collect();
        Error::Singular(format!("{what} block is singular for {}", c.join(", ")))
    }

    pub(crate) fn inverse(&self, m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
        let scale = m.amax();
        let inv = m.clone().try_inverse().ok_or_else(|| self.singular(what))?;
        if !(scale > 0.0) || inv.iter().any(|v| !v.is_finite()) || inv.amax() * scale > 1e14 {
            return Err(self.singular(what));
        }
        Ok(inv)
    }

    /// Velocity-row load including the initial-velocity term.
    pub fn velocity_rhs(&self, blocks: &BlockSet) -> DVector<f64> {
        &self.forces[0] + &blocks.vel * &self.v0
    }

    /// u^{t+1} = C⁻¹ [f^t − A u^{t−1} − B u^t].
    pub fn ar_step(&self, u_prev: &DVector<f64>, u_curr: &DVector<f64>, f_curr: &DVector<f64>) -> Result<DVector<f64>> {
        let b = self.blocks();
        let cinv = self.inverse(&b.c, "C")?;
        Ok(cinv * (f_curr - &b.a * u_prev - &b.b * u_curr))
    }

    /// u^0 from the initial displacement and u^1 from the velocity row.
    pub fn bootstrap(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let b = self.blocks();
        let c0inv = self.inverse(&b.c0, "velocity-row")?;
        let u0 = self.u0.clone();
        let u1 = c0inv * (self.velocity_rhs(&b) - &b.b0 * &u0);
        Ok((u0, u1))
    }

    /// Iterated autoregressive stepping from the first two slices.
    pub fn step_from(&self, u0: &DVector<f64>, u1: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        let b = self.blocks();
        let cinv = self.inverse(&b.c, "C")?;
        let mut out = vec![u0.clone(), u1.clone()];
        for t in 1..self.n_time - 1 {
            let next = &cinv * (&self.forces[t] - &b.a * &out[t - 1] - &b.b * &out[t]);
            out.push(next);
        }
        Ok(out)
    }

    pub fn rollout(&self) -> Result<Vec<DVector<f64>>> {
        let (u0, u1) = self.bootstrap()?;
        self.step_from(&u0, &u1)
    }

    /// Global matrix (N·T square) and right-hand side; dof of node i at time t is t·N + i.
    pub fn global_system(&self) -> (BandedMatrix, Vec<f64>) {
        let n = self.n_space;
        let nt = self.n_time;
        let b = self.blocks();
        let mut m = BandedMatrix::zeros(n * nt);
        let mut rhs = vec![0.0; n * nt];
        let put = |m: &mut BandedMatrix, row0: usize, col0: usize, blk: &DMatrix<f64>| {
            for i in 0..n {
                for j in 0..n {
                    if blk[(i, j)] != 0.0 {
                        m.add(row0 + i, col0 + j, blk[(i, j)]);
                    }
                }
            }
        };
        put(&mut m, 0, 0, &DMatrix::identity(n, n));
        rhs[..n].copy_from_slice(self.u0.as_slice());
        put(&mut m, n, 0, &b.b0);
        put(&mut m, n, n, &b.c0);
        rhs[n..2 * n].copy_from_slice(self.velocity_rhs(&b).as_slice());
        for t in 1..nt - 1 {
            let row = (t + 1) * n;
            put(&mut m, row, (t - 1) * n, &b.a);
            put(&mut m, row, t * n, &b.b);
            put(&mut m, row, (t + 1) * n, &b.c);
            rhs[row..row + n].copy_from_slice(self.forces[t].as_slice());
        }
        (m, rhs)
    }

    /// Direct banded LU solve of the whole space-time system.
    pub fn solve_direct(&self) -> Result<Vec<DVector<f64>>> {
        let (m, rhs) = self.global_system();
        let x = m.solve(&rhs).map_err(|_| self.singular("space-time"))?;
        Ok(x.chunks(self.n_space).map(DVector::from_column_slice).collect())
    }

    /// Time nodes 0, Δt, …, (T−1)Δt.
    pub fn times(&self) -> Vec<f64> {
        (0..self.n_time).map(|t| t as f64 * self.dt).collect()
    }
}
