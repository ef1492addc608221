//! C-HiDeNN interpolation properties, the s = 0 limit and convergence against FEM.

use dldc_core::chidenn::{
    check_properties, convergence_study, quadrature_energy_change, s0_fem_agreement, ChidennSpace, ConvergenceChecks,
    ConvergenceConfig, Mesh, PoissonProblem, PropertyReport,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{derive_seed, timed};
use crate::error::{core, Result};
use crate::manifest::{Check, OutputDir};

const KRONECKER_TOL: f64 = 1e-8;
const PARTITION_TOL: f64 = 1e-10;
const REPRODUCTION_TOL: f64 = 1e-7;
const S0_TOL: f64 = 1e-10;
const RATE_MARGIN: f64 = 0.7;
const EQUAL_H_RATIO: f64 = 0.1;
const DOF_RATIO: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChidennConfig {
    pub convergence: ConvergenceConfig,
    pub property_p: Vec<usize>,
    pub property_s: usize,
    pub property_a: f64,
    /// Elements per direction of the 2-D property mesh on (0,10)².
    pub property_elements_2d: usize,
    /// Elements of the 1-D property mesh on (0,10).
    pub property_elements_1d: usize,
    pub property_points_2d: usize,
    pub property_points_1d: usize,
    pub property_quad_order: usize,
    pub seed: u64,
    pub s0_elements: usize,
    pub s0_quad_order: usize,
    /// Meshes on which the effect of doubling the quadrature order is reported (C-HiDeNN p = 1).
    pub energy_check_elements: Vec<usize>,
}

impl Default for ChidennConfig {
    fn default() -> Self {
        Self {
            convergence: ConvergenceConfig::default(),
            property_p: vec![1, 2, 3],
            property_s: 3,
            property_a: 30.0,
            property_elements_2d: 6,
            property_elements_1d: 12,
            property_points_2d: 5,
            property_points_1d: 20,
            property_quad_order: 6,
            seed: 1,
            s0_elements: 20,
            s0_quad_order: 6,
            energy_check_elements: vec![10, 20],
        }
    }
}

#[derive(Debug, Serialize)]
struct PropertyRun {
    dim: usize,
    p: usize,
    report: PropertyReport,
}

fn properties(cfg: &ChidennConfig, seed: u64) -> Result<Vec<PropertyRun>> {
    let mut runs = Vec::new();
    for &p in &cfg.property_p {
        let meshes = [
            (
                2,
                Mesh::rectangle([0.0, 0.0], [10.0, 10.0], cfg.property_elements_2d, cfg.property_elements_2d),
                cfg.property_points_2d,
            ),
            (1, Mesh::interval(0.0, 10.0, cfg.property_elements_1d), cfg.property_points_1d),
        ];
        for (dim, mesh, points) in meshes {
            let mesh = mesh.map_err(core("property mesh"))?;
            let space = ChidennSpace::new(mesh, cfg.property_s, cfg.property_a, p)
                .map_err(core(format!("{dim}-D space with p = {p}")))?;
            let report =
                check_properties(&space, cfg.property_quad_order, points, derive_seed(seed, cfg.seed + dim as u64))
                    .map_err(core(format!("{dim}-D properties with p = {p}")))?;
            runs.push(PropertyRun { dim, p, report });
        }
    }
    Ok(runs)
}

/// Outputs: `chidenn_convergence.csv`, `chidenn_properties.json`, `chidenn_summary.json`.
pub fn run_chidenn(cfg: &ChidennConfig, seed: u64, out: &mut OutputDir) -> Result<Vec<Check>> {
    let (props, t_props) = timed(|| properties(cfg, seed));
    let props = props?;
    let mut worst = PropertyReport::default();
    for r in &props {
        worst.merge(&r.report);
    }
    out.write_json("chidenn_properties.json", &json!({ "runs": props, "worst": worst }))?;
    let check5 = Check::new(5)
        .at_most("Kronecker delta defect", worst.kronecker_delta, KRONECKER_TOL)
        .at_most("partition of unity defect", worst.partition_of_unity, PARTITION_TOL)
        .at_most("monomial reproduction defect", worst.reproduction, REPRODUCTION_TOL)
        .finish(t_props);

    let (s0, t_s0) = timed(|| s0_fem_agreement(cfg.s0_elements, cfg.s0_quad_order));
    let s0 = s0.map_err(core("s = 0 comparison"))?;
    let check6 = Check::new(6).at_most("max nodal difference to bilinear FEM", s0, S0_TOL).finish(t_s0);

    let (table, t_conv) = timed(|| convergence_study(&cfg.convergence));
    let table = table.map_err(core("convergence study"))?;
    out.write("chidenn_convergence.csv", &table.to_csv())?;
    let checks = ConvergenceChecks::from_table(&table);
    let mut check7 = Check::new(7);
    for p in [1, 2] {
        let rate = checks.chidenn_l2_rates.iter().find(|r| r.0 == p).map_or(f64::NAN, |r| r.1);
        check7 = check7.at_least(format!("C-HiDeNN p = {p} L2 rate"), rate, p as f64 + RATE_MARGIN);
    }
    for &(h, ratio) in &checks.equal_h_ratios {
        check7 = check7.at_most(format!("C-HiDeNN/FEM p = 1 L2 ratio at h = {h}"), ratio, EQUAL_H_RATIO);
    }
    check7 =
        check7.at_least("FEM/C-HiDeNN p = 3 dofs at equal error", checks.p3_dof_ratio.unwrap_or(f64::NAN), DOF_RATIO);
    let check7 = check7.finish(t_conv);

    let problem = PoissonProblem::manufactured();
    let mut energy = Vec::new();
    for &n in &cfg.energy_check_elements {
        let c = &cfg.convergence;
        let mesh = Mesh::rectangle([0.0, 0.0], [10.0, 10.0], n, n).map_err(core("energy mesh"))?;
        let space = ChidennSpace::new(mesh, c.s, c.a, 1).map_err(core("energy space"))?;
        let change = quadrature_energy_change(&space, &problem, c.quad_order).map_err(core("energy change"))?;
        energy.push(json!({ "elements": n, "relative_energy_change": change }));
    }
    let rates: Vec<_> = table
        .rows
        .iter()
        .map(|r| (r.method, r.p))
        .fold(Vec::new(), |mut acc, k| {
            if !acc.contains(&k) {
                acc.push(k);
            }
            acc
        })
        .into_iter()
        .map(|(m, p)| {
            let (l2, h1) = table.rates(m, p).unwrap_or((f64::NAN, f64::NAN));
            json!({ "method": m, "p": p, "l2_rate": l2, "h1_rate": h1 })
        })
        .collect();
    out.write_json(
        "chidenn_summary.json",
        &json!({
            "rates": rates,
            "chidenn_l2_rates": checks.chidenn_l2_rates,
            "equal_h_ratios": checks.equal_h_ratios,
            "p3_dof_ratio": checks.p3_dof_ratio,
            "s0_max_nodal_difference": s0,
            "quadrature_doubling": energy,
        }),
    )?;
    Ok(vec![check5, check6, check7])
}
