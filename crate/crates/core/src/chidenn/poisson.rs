//! Galerkin solution of −Δu = b with homogeneous Dirichlet data, and error norms.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::space::{Discretization, ElementBasis};
use crate::calculus::gauss_legendre;
use crate::error::{contract, Error, Result};
use crate::linalg::SkylineMatrix;

pub type ScalarField = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// Body force with `u = 0` on the boundary and an optional exact solution.
#[derive(Clone)]
pub struct PoissonProblem {
    pub body_force: ScalarField,
    pub exact: Option<(ScalarField, VectorField)>,
}

impl std::fmt::Debug for PoissonProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoissonProblem").field("has_exact", &self.exact.is_some()).finish()
    }
}

impl PoissonProblem {
    pub fn new(body_force: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static) -> Self {
        Self { body_force: Arc::new(body_force), exact: None }
    }

    pub fn with_exact(
        mut self,
        u: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static,
        grad: impl Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        self.exact = Some((Arc::new(u), Arc::new(grad)));
        self
    }

    /// Manufactured problem on (0,10)²:
    /// u = (x²−10x)(y²−10y)(2e^{−2|x−(3,3)|²} + e^{−2|x−(7,7)|²}) / 625.
    pub fn manufactured() -> Self {
        let m = Manufactured;
        Self::new(move |x| -m.laplacian(x)).with_exact(move |x| m.value(x), move |x| m.gradient(x))
    }
}

#[derive(Clone, Copy)]
struct Manufactured;

impl Manufactured {
    const BUMPS: [(f64, f64); 2] = [(2.0, 3.0), (1.0, 7.0)];

    /// g, g_x, g_y, g_xx, g_yy of the Gaussian bumps.
    fn bumps(&self, [x, y]: [f64; 2]) -> [f64; 5] {
        let mut out = [0.0; 5];
        for (c, a) in Self::BUMPS {
            let e = c * (-2.0 * ((x - a).powi(2) + (y - a).powi(2))).exp();
            out[0] += e;
            out[1] += -4.0 * (x - a) * e;
            out[2] += -4.0 * (y - a) * e;
            out[3] += (16.0 * (x - a).powi(2) - 4.0) * e;
            out[4] += (16.0 * (y - a).powi(2) - 4.0) * e;
        }
        out
    }

    fn value(&self, p: [f64; 2]) -> f64 {
        let [x, y] = p;
        (x * x - 10.0 * x) * (y * y - 10.0 * y) * self.bumps(p)[0] / 625.0
    }

    fn gradient(&self, p: [f64; 2]) -> [f64; 2] {
        let [x, y] = p;
        let (px, qy) = (x * x - 10.0 * x, y * y - 10.0 * y);
        let (dpx, dqy) = (2.0 * x - 10.0, 2.0 * y - 10.0);
        let g = self.bumps(p);
        [(dpx * qy * g[0] + px * qy * g[1]) / 625.0, (px * dqy * g[0] + px * qy * g[2]) / 625.0]
    }

    fn laplacian(&self, p: [f64; 2]) -> f64 {
        let [x, y] = p;
        let (px, qy) = (x * x - 10.0 * x, y * y - 10.0 * y);
        let (dpx, dqy) = (2.0 * x - 10.0, 2.0 * y - 10.0);
        let g = self.bumps(p);
        (2.0 * qy * g[0]
            + 2.0 * dpx * qy * g[1]
            + px * qy * g[3]
            + px * 2.0 * g[0]
            + 2.0 * px * dqy * g[2]
            + px * qy * g[4])
            / 625.0
    }
}

/// Tensor Gauss points `(ξ, η, weight)` of `order` per direction.
pub fn element_rule(dim: usize, order: usize) -> Vec<(f64, f64, f64)> {
    let (x, w) = gauss_legendre(order);
    if dim == 1 {
        x.iter().zip(&w).map(|(&a, &wa)| (a, 0.0, wa)).collect()
    } else {
        let mut out = Vec::with_capacity(order * order);
        for (&b, &wb) in x.iter().zip(&w) {
            for (&a, &wa) in x.iter().zip(&w) {
                out.push((a, b, wa * wb));
            }
        }
        out
    }
}

/// Nodal solution with the assembled system size.
#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub u: Vec<f64>,
    /// Strain energy ½ uᵀKu at the solution.
    pub energy: f64,
    pub n_free: usize,
    pub stored_entries: usize,
}

fn free_map<D: Discretization>(space: &D) -> (Vec<Option<usize>>, usize) {
    let mut fixed = vec![false; space.n_dofs()];
    for d in space.boundary_dofs() {
        fixed[d] = true;
    }
    let mut map = vec![None; space.n_dofs()];
    let mut k = 0;
    for (d, f) in fixed.iter().enumerate() {
        if !f {
            map[d] = Some(k);
            k += 1;
        }
    }
    (map, k)
}

/// Element stiffness (row-major, dofs × dofs) and load.
fn element_system<D: Discretization>(
    space: &D,
    e: usize,
    rule: &[(f64, f64, f64)],
    body: &ScalarField,
    basis: &mut ElementBasis,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = space.element_dofs(e).len();
    let mut ke = vec![0.0; m * m];
    let mut fe = vec![0.0; m];
    for &(xi, eta, w) in rule {
        space.eval(e, xi, eta, basis)?;
        let wj = w * basis.det_j;
        let b = body(basis.x) * wj;
        for a in 0..m {
            fe[a] += basis.n[a] * b;
            let (gx, gy) = (basis.dndx[a] * wj, basis.dndy[a] * wj);
            let row = &mut ke[a * m..(a + 1) * m];
            for c in 0..=a {
                row[c] += gx * basis.dndx[c] + gy * basis.dndy[c];
            }
        }
    }
    for a in 0..m {
        for c in 0..a {
            ke[c * m + a] = ke[a * m + c];
        }
    }
    Ok((ke, fe))
}

/// Assembles the Galerkin system over element patches and solves it with a
/// skyline Cholesky factorisation; boundary dofs are fixed at zero.
pub fn assemble_and_solve<D: Discretization>(
    space: &D,
    problem: &PoissonProblem,
    quad_order: usize,
) -> Result<PoissonSolution> {
    if quad_order == 0 {
        return Err(contract("quadrature order must be positive"));
    }
    let (map, n_free) = free_map(space);
    if n_free == 0 {
        return Ok(PoissonSolution { u: vec![0.0; space.n_dofs()], energy: 0.0, n_free, stored_entries: 0 });
    }
    let mut first: Vec<usize> = (0..n_free).collect();
    for e in 0..space.n_elements() {
        let free: Vec<usize> = space.element_dofs(e).iter().filter_map(|&d| map[d]).collect();
        if let Some(&lo) = free.iter().min() {
            for &f in &free {
                first[f] = first[f].min(lo);
            }
        }
    }
    let mut k = SkylineMatrix::new(first);
    let mut f = vec![0.0; n_free];
    let rule = element_rule(space.dim(), quad_order);
    let mut basis = ElementBasis::default();
    for e in 0..space.n_elements() {
        let (ke, fe) = element_system(space, e, &rule, &problem.body_force, &mut basis)?;
        let dofs = space.element_dofs(e);
        let m = dofs.len();
        for a in 0..m {
            let Some(ra) = map[dofs[a]] else { continue };
            f[ra] += fe[a];
            for c in 0..m {
                let Some(rc) = map[dofs[c]] else { continue };
                if rc <= ra {
                    k.add(ra, rc, ke[a * m + c]);
                }
            }
        }
    }
    let stored_entries = k.stored_entries();
    k.factor()?;
    let sol = k.solve(&f);
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite solution".into()));
    }
    let energy = 0.5 * sol.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>();
    let mut u = vec![0.0; space.n_dofs()];
    for (d, m) in map.iter().enumerate() {
        if let Some(i) = m {
            u[d] = sol[*i];
        }
    }
    Ok(PoissonSolution { u, energy, n_free, stored_entries })
}

/// Dense global stiffness over all dofs (no boundary conditions); for small checks.
pub fn assemble_dense_stiffness<D: Discretization>(space: &D, quad_order: usize) -> Result<DMatrix<f64>> {
    let n = space.n_dofs();
    let mut k = DMatrix::zeros(n, n);
    let rule = element_rule(space.dim(), quad_order);
    let zero: ScalarField = Arc::new(|_| 0.0);
    let mut basis = ElementBasis::default();
    for e in 0..space.n_elements() {
        let (ke, _) = element_system(space, e, &rule, &zero, &mut basis)?;
        let dofs = space.element_dofs(e);
        let m = dofs.len();
        for a in 0..m {
            for c in 0..m {
                k[(dofs[a], dofs[c])] += ke[a * m + c];
            }
        }
    }
    Ok(k)
}

/// Relative L2 and H1 errors against the exact solution and gradient.
pub fn error_norms<D: Discretization>(
    space: &D,
    u: &[f64],
    exact: &dyn Fn([f64; 2]) -> f64,
    exact_grad: &dyn Fn([f64; 2]) -> [f64; 2],
    quad_order: usize,
) -> Result<(f64, f64)> {
    if u.len() != space.n_dofs() {
        return Err(contract("solution length does not match the number of dofs"));
    }
    let rule = element_rule(space.dim(), quad_order);
    let mut basis = ElementBasis::default();
    let (mut e0, mut e1, mut n0, mut n1) = (0.0, 0.0, 0.0, 0.0);
    for e in 0..space.n_elements() {
        for &(xi, eta, w) in &rule {
            space.eval(e, xi, eta, &mut basis)?;
            let wj = w * basis.det_j;
            let (uh, gh) = basis.interpolate(u);
            let ue = exact(basis.x);
            let ge = exact_grad(basis.x);
            let dim = space.dim();
            e0 += (ue - uh).powi(2) * wj;
            n0 += ue * ue * wj;
            for d in 0..dim {
                e1 += (ge[d] - gh[d]).powi(2) * wj;
                n1 += ge[d] * ge[d] * wj;
            }
        }
    }
    if !(n0 > 0.0) {
        return Err(contract("exact solution has zero norm"));
    }
    Ok(((e0 / n0).sqrt(), ((e0 + e1) / (n0 + n1)).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manufactured_derivatives_match_finite_differences() {
        let m = Manufactured;
        let h = 1e-4;
        for p in [[2.5, 3.5], [6.8, 7.3], [1.0, 9.0]] {
            let g = m.gradient(p);
            let fx = (m.value([p[0] + h, p[1]]) - m.value([p[0] - h, p[1]])) / (2.0 * h);
            let fy = (m.value([p[0], p[1] + h]) - m.value([p[0], p[1] - h])) / (2.0 * h);
            assert!((g[0] - fx).abs() < 1e-7 && (g[1] - fy).abs() < 1e-7);
            let lap = (m.value([p[0] + h, p[1]])
                + m.value([p[0] - h, p[1]])
                + m.value([p[0], p[1] + h])
                + m.value([p[0], p[1] - h])
                - 4.0 * m.value(p))
                / (h * h);
            assert!((m.laplacian(p) - lap).abs() < 1e-5, "{} vs {lap}", m.laplacian(p));
        }
        assert_eq!(m.value([0.0, 4.0]), 0.0);
        assert_eq!(m.value([3.0, 10.0]), 0.0);
    }
}
