//! Convergence studies and interpolation property checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lagrange::LagrangeSpace;
use super::mesh::Mesh;
use super::poisson::{assemble_and_solve, element_rule, error_norms, PoissonProblem};
use super::rpim::monomial_exponents;
use super::space::{combine_interpolants, ChidennSpace, Discretization};
use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fem,
    Chidenn,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fem => "fem",
            Method::Chidenn => "chidenn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// Elements per direction on (0,10)².
    pub n_elements: Vec<usize>,
    pub chidenn_p: Vec<usize>,
    pub fem_p: Vec<usize>,
    pub s: usize,
    pub a: f64,
    pub quad_order: usize,
    pub error_quad_order: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            n_elements: vec![10, 20, 40, 80],
            chidenn_p: vec![1, 2, 3],
            fem_p: vec![1, 2, 3],
            s: 3,
            a: 30.0,
            quad_order: 6,
            error_quad_order: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub method: Method,
    pub p: usize,
    pub h: f64,
    pub dofs: usize,
    pub l2: f64,
    pub h1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn series(&self, method: Method, p: usize) -> Vec<&ConvergenceRow> {
        let mut v: Vec<&ConvergenceRow> = self.rows.iter().filter(|r| r.method == method && r.p == p).collect();
        v.sort_by(|a, b| b.h.total_cmp(&a.h));
        v
    }

    /// Fitted (L2, H1) rates over the three finest meshes of a series.
    pub fn rates(&self, method: Method, p: usize) -> Option<(f64, f64)> {
        let s = self.series(method, p);
        let h: Vec<f64> = s.iter().map(|r| r.h).collect();
        let l2: Vec<f64> = s.iter().map(|r| r.l2).collect();
        let h1: Vec<f64> = s.iter().map(|r| r.h1).collect();
        Some((fitted_rate(&h, &l2)?, fitted_rate(&h, &h1)?))
    }

    /// Columns: method,p,h,dofs,l2,h1,l2_rate,h1_rate (rates repeat per series).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,p,h,dofs,l2,h1,l2_rate,h1_rate\n");
        for r in &self.rows {
            let (a, b) = self.rates(r.method, r.p).unwrap_or((f64::NAN, f64::NAN));
            out.push_str(&format!(
                "{},{},{:e},{},{:e},{:e},{:.6},{:.6}\n",
                r.method.as_str(),
                r.p,
                r.h,
                r.dofs,
                r.l2,
                r.h1,
                a,
                b
            ));
        }
        out
    }
}

/// Least-squares slope of log(error) against log(h) over the three smallest h.
pub fn fitted_rate(h: &[f64], err: &[f64]) -> Option<f64> {
    if h.len() != err.len() || h.len() < 2 {
        return None;
    }
    let mut pts: Vec<(f64, f64)> = h.iter().zip(err).map(|(&a, &b)| (a, b)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.truncate(3);
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Degrees of freedom at which an error curve reaches `target`, by
/// log-log interpolation between bracketing points (linear extrapolation
/// from the nearest pair otherwise).
pub fn dofs_for_error(curve: &[(usize, f64)], target: f64) -> Option<f64> {
    if curve.len() < 2 || !(target > 0.0) {
        return None;
    }
    let mut pts: Vec<(f64, f64)> = curve.iter().map(|&(d, e)| ((d as f64).ln(), e.ln())).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let t = target.ln();
    let pair = (0..pts.len() - 1).find(|&i| (pts[i].1 - t) * (pts[i + 1].1 - t) <= 0.0).unwrap_or(if t > pts[0].1 {
        0
    } else {
        pts.len() - 2
    });
    let (a, b) = (pts[pair], pts[pair + 1]);
    if a.1 == b.1 {
        return None;
    }
    let x = a.0 + (t - a.1) * (b.0 - a.0) / (b.1 - a.1);
    Some(x.exp())
}

/// Runs both methods on the manufactured problem for every mesh and order.
pub fn convergence_study(cfg: &ConvergenceConfig) -> Result<ConvergenceTable> {
    if cfg.n_elements.is_empty() {
        return Err(contract("at least one mesh is required"));
    }
    let problem = PoissonProblem::manufactured();
    let (exact, grad) = problem.exact.clone().expect("manufactured problem has an exact solution");
    let mut rows = Vec::new();
    let lo = [0.0, 0.0];
    let hi = [10.0, 10.0];
    for &p in &cfg.fem_p {
        for &n in &cfg.n_elements {
            let space = LagrangeSpace::rectangle(lo, hi, n, n, p)?;
            let sol = assemble_and_solve(&space, &problem, cfg.quad_order)?;
            let (l2, h1) = error_norms(&space, &sol.u, &*exact, &*grad, cfg.error_quad_order)?;
            rows.push(ConvergenceRow { method: Method::Fem, p, h: 10.0 / n as f64, dofs: space.n_dofs(), l2, h1 });
        }
    }
    for &p in &cfg.chidenn_p {
        for &n in &cfg.n_elements {
            let space = ChidennSpace::new(Mesh::rectangle(lo, hi, n, n)?, cfg.s, cfg.a, p)?;
            let sol = assemble_and_solve(&space, &problem, cfg.quad_order)?;
            let (l2, h1) = error_norms(&space, &sol.u, &*exact, &*grad, cfg.error_quad_order)?;
            rows.push(ConvergenceRow { method: Method::Chidenn, p, h: 10.0 / n as f64, dofs: space.n_dofs(), l2, h1 });
        }
    }
    Ok(ConvergenceTable { rows })
}

/// Comparisons drawn from a convergence table between the two methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceChecks {
    /// `(p, fitted L2 rate)` of C-HiDeNN.
    pub chidenn_l2_rates: Vec<(usize, f64)>,
    /// `(h, C-HiDeNN p=1 L2 / FEM p=1 L2)` on every shared mesh.
    pub equal_h_ratios: Vec<(f64, f64)>,
    /// FEM p=3 dofs needed for the error C-HiDeNN p=3 reaches on its
    /// coarsest mesh, divided by the C-HiDeNN dofs there.
    pub p3_dof_ratio: Option<f64>,
}

impl ConvergenceChecks {
    pub fn from_table(table: &ConvergenceTable) -> Self {
        let chidenn_l2_rates =
            [1, 2].into_iter().filter_map(|p| table.rates(Method::Chidenn, p).map(|(l2, _)| (p, l2))).collect();
        let fem1 = table.series(Method::Fem, 1);
        let equal_h_ratios = table
            .series(Method::Chidenn, 1)
            .iter()
            .filter_map(|c| {
                let f = fem1.iter().find(|f| (f.h - c.h).abs() <= 1e-12 * c.h)?;
                Some((c.h, c.l2 / f.l2))
            })
            .collect();
        let fem3: Vec<(usize, f64)> = table.series(Method::Fem, 3).iter().map(|r| (r.dofs, r.l2)).collect();
        let p3_dof_ratio =
            table.series(Method::Chidenn, 3).first().and_then(|c| Some(dofs_for_error(&fem3, c.l2)? / c.dofs as f64));
        Self { chidenn_l2_rates, equal_h_ratios, p3_dof_ratio }
    }

    /// L2 rate at least p + 0.7 for p = 1 and 2.
    pub fn rates_pass(&self) -> bool {
        [1, 2].iter().all(|&p| self.chidenn_l2_rates.iter().any(|&(q, r)| q == p && r >= p as f64 + 0.7))
    }

    /// C-HiDeNN p=1 at most a tenth of FEM p=1 on every mesh.
    pub fn equal_h_pass(&self) -> bool {
        !self.equal_h_ratios.is_empty() && self.equal_h_ratios.iter().all(|&(_, r)| r <= 0.1)
    }

    pub fn dof_ratio_pass(&self) -> bool {
        self.p3_dof_ratio.is_some_and(|r| r >= 5.0)
    }
}

/// Largest nodal difference between the `s = 0` space and bilinear Lagrange
/// elements on the manufactured problem with `n × n` elements.
pub fn s0_fem_agreement(n: usize, quad_order: usize) -> Result<f64> {
    let problem = PoissonProblem::manufactured();
    let space = ChidennSpace::new(Mesh::rectangle([0.0, 0.0], [10.0, 10.0], n, n)?, 0, 1.0, 1)?;
    let fem = LagrangeSpace::rectangle([0.0, 0.0], [10.0, 10.0], n, n, 1)?;
    let a = assemble_and_solve(&space, &problem, quad_order)?;
    let b = assemble_and_solve(&fem, &problem, quad_order)?;
    let mut by_coord = std::collections::HashMap::new();
    for d in 0..fem.n_dofs() {
        let x = fem.dof_coord(d);
        by_coord.insert(((x[0] * 1e6).round() as i64, (x[1] * 1e6).round() as i64), b.u[d]);
    }
    let mut worst: f64 = 0.0;
    for (node, x) in space.mesh.nodes().iter().enumerate() {
        let key = ((x[0] * 1e6).round() as i64, (x[1] * 1e6).round() as i64);
        let v = by_coord.get(&key).ok_or_else(|| contract("meshes do not share nodes"))?;
        worst = worst.max((a.u[node] - v).abs());
    }
    Ok(worst)
}

/// Relative change of the discrete energy when the element quadrature order is doubled.
pub fn quadrature_energy_change<D: Discretization>(
    space: &D,
    problem: &PoissonProblem,
    quad_order: usize,
) -> Result<f64> {
    let a = assemble_and_solve(space, problem, quad_order)?.energy;
    let b = assemble_and_solve(space, problem, 2 * quad_order)?.energy;
    Ok((a - b).abs() / b.abs().max(f64::MIN_POSITIVE))
}

/// Worst deviations of the composed basis from its defining properties.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub kronecker_delta: f64,
    pub partition_of_unity: f64,
    pub gradient_sum: f64,
    pub reproduction: f64,
    pub lowered_nodes: usize,
    pub max_condition: f64,
}

impl PropertyReport {
    pub fn merge(&mut self, other: &PropertyReport) {
        self.kronecker_delta = self.kronecker_delta.max(other.kronecker_delta);
        self.partition_of_unity = self.partition_of_unity.max(other.partition_of_unity);
        self.gradient_sum = self.gradient_sum.max(other.gradient_sum);
        self.reproduction = self.reproduction.max(other.reproduction);
        self.lowered_nodes += other.lowered_nodes;
        self.max_condition = self.max_condition.max(other.max_condition);
    }
}

/// Checks nodal Kronecker delta, partition of unity at all quadrature
/// points, and reproduction of every monomial of total degree ≤ p at
/// `points_per_element` random points per element. Monomials are taken in
/// coordinates centred on the domain and scaled by its extent.
pub fn check_properties(
    space: &ChidennSpace,
    quad_order: usize,
    points_per_element: usize,
    seed: u64,
) -> Result<PropertyReport> {
    let mesh = &space.mesh;
    let dim = mesh.dim();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in mesh.nodes() {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let centre = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    let extent = [(hi[0] - lo[0]).max(1e-300), (hi[1] - lo[1]).max(1e-300)];
    let scaled = |x: [f64; 2]| [(x[0] - centre[0]) / extent[0], (x[1] - centre[1]) / extent[1]];
    let exps = monomial_exponents(dim, space.p);
    let nodal: Vec<Vec<f64>> = exps
        .iter()
        .map(|&(i, j)| {
            mesh.nodes()
                .iter()
                .map(|&x| {
                    let u = scaled(x);
                    u[0].powi(i as i32) * u[1].powi(j as i32)
                })
                .collect()
        })
        .collect();
    let corners: &[(f64, f64)] =
        if dim == 1 { &[(-1.0, 0.0), (1.0, 0.0)] } else { &[(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] };
    let rule = element_rule(dim, quad_order);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = PropertyReport {
        lowered_nodes: space.lowered_nodes.len(),
        max_condition: space.max_condition,
        ..Default::default()
    };
    for e in 0..mesh.n_elements() {
        let conn = &mesh.elements()[e];
        for (loc, &(xi, eta)) in corners.iter().enumerate() {
            let b = combine_interpolants(space, e, xi, eta)?;
            for (k, &d) in b.dofs.iter().enumerate() {
                let t = if d == conn[loc] { 1.0 } else { 0.0 };
                rep.kronecker_delta = rep.kronecker_delta.max((b.n[k] - t).abs());
            }
        }
        for &(xi, eta, _) in &rule {
            let b = combine_interpolants(space, e, xi, eta)?;
            rep.partition_of_unity = rep.partition_of_unity.max((b.n.iter().sum::<f64>() - 1.0).abs());
            rep.gradient_sum =
                rep.gradient_sum.max(b.dndx.iter().sum::<f64>().abs()).max(b.dndy.iter().sum::<f64>().abs());
        }
        for _ in 0..points_per_element {
            let xi = rng.random_range(-1.0..1.0);
            let eta = if dim == 1 { 0.0 } else { rng.random_range(-1.0..1.0) };
            let b = combine_interpolants(space, e, xi, eta)?;
            let u = scaled(b.x);
            for (m, &(i, j)) in exps.iter().enumerate() {
                let (v, _) = b.interpolate(&nodal[m]);
                let q = u[0].powi(i as i32) * u[1].powi(j as i32);
                rep.reproduction = rep.reproduction.max((v - q).abs());
            }
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_of_exact_power_law() {
        let h = [1.0, 0.5, 0.25, 0.125];
        let e: Vec<f64> = h.iter().map(|x: &f64| 3.0 * x.powi(2)).collect();
        assert!((fitted_rate(&h, &e).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dof_interpolation() {
        let curve = [(100, 1e-2), (400, 1e-3), (1600, 1e-4)];
        assert!((dofs_for_error(&curve, 1e-3).unwrap() - 400.0).abs() < 1e-9);
        assert!((dofs_for_error(&curve, 10f64.powf(-3.5)).unwrap() - 800.0).abs() < 1e-6);
        assert!((dofs_for_error(&curve, 1e-5).unwrap() - 6400.0).abs() < 1e-6);
        assert!((dofs_for_error(&curve, 1e-1).unwrap() - 25.0).abs() < 1e-9);
    }

    #[test]
    fn linear_fem_converges_at_second_order() {
        let cfg =
            ConvergenceConfig { n_elements: vec![20, 40, 80], chidenn_p: vec![], fem_p: vec![1], ..Default::default() };
        let t = convergence_study(&cfg).unwrap();
        let (l2, h1) = t.rates(Method::Fem, 1).unwrap();
        assert!((l2 - 2.0).abs() < 0.2, "{l2}");
        assert!(h1 > 0.7, "{h1}");
    }

    #[test]
    fn checks_from_a_synthetic_table() {
        let mut rows = Vec::new();
        for (i, n) in [10usize, 20, 40, 80].into_iter().enumerate() {
            let h = 10.0 / n as f64;
            let dofs = (n + 1) * (n + 1);
            let fem3_dofs = (3 * n + 1) * (3 * n + 1);
            let row = |method, p, dofs, l2| ConvergenceRow { method, p, h, dofs, l2, h1: l2 };
            rows.push(row(Method::Fem, 1, dofs, 0.1 * h * h));
            rows.push(row(Method::Chidenn, 1, dofs, 0.005 * h.powi(2)));
            rows.push(row(Method::Chidenn, 2, dofs, 0.005 * h.powi(3)));
            rows.push(row(Method::Fem, 3, fem3_dofs, 10f64.powi(-(i as i32) - 2)));
            rows.push(row(Method::Chidenn, 3, dofs, 1e-2));
        }
        let mut table = ConvergenceTable { rows };
        let c = ConvergenceChecks::from_table(&table);
        assert!(c.rates_pass());
        assert_eq!(c.equal_h_ratios.len(), 4);
        assert!(c.equal_h_ratios.iter().all(|&(_, r)| (r - 0.05).abs() < 1e-12));
        assert!(c.equal_h_pass());
        // The FEM curve reaches 1e-2 at its coarsest mesh of 961 dofs.
        assert!((c.p3_dof_ratio.unwrap() - 961.0 / 121.0).abs() < 1e-9);
        assert!(c.dof_ratio_pass());
        for r in table.rows.iter_mut().filter(|r| r.method == Method::Chidenn && r.p == 2) {
            r.l2 = r.h.powi(2);
        }
        assert!(!ConvergenceChecks::from_table(&table).rates_pass());
    }

    #[test]
    fn zero_patch_size_matches_bilinear_fem() {
        assert!(s0_fem_agreement(8, 4).unwrap() < 1e-10);
    }

    #[test]
    fn properties_hold_on_small_meshes() {
        for p in 1..=3 {
            let space =
                ChidennSpace::new(Mesh::rectangle([0.0, 0.0], [10.0, 10.0], 6, 6).unwrap(), 3, 30.0, p).unwrap();
            let r = check_properties(&space, 6, 5, 1).unwrap();
            assert!(r.kronecker_delta < 1e-8, "{r:?}");
            assert!(r.partition_of_unity < 1e-10, "{r:?}");
            assert!(r.reproduction < 1e-7, "{r:?}");
            let space = ChidennSpace::new(Mesh::interval(0.0, 10.0, 12).unwrap(), 3, 30.0, p).unwrap();
            let r = check_properties(&space, 6, 20, 2).unwrap();
            assert!(r.kronecker_delta < 1e-8 && r.partition_of_unity < 1e-10 && r.reproduction < 1e-7, "{r:?}");
        }
    }
}
