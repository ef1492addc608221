//! Clustered Lippmann-Schwinger solutions and the graph kernel network trained on them.

use dldc_core::sca::{extrapolate, oracle_tables, train_study_network, MicroDomain, ScaStudyConfig};
use serde_json::json;

use super::timed;
use crate::error::{core, Result};
use crate::manifest::{Check, OutputDir};

const ORACLE_TOL: f64 = 0.01;
const NMSE_REDUCTION: f64 = 0.1;
const EXTRAPOLATION_NMSE: f64 = 0.05;
/// Diagnostic thresholds reported in the summary only.
const TEST_TRAIN_RATIO: f64 = 3.0;
const MEAN_TOL: f64 = 0.02;
const LINEARITY_TOL: f64 = 1e-8;
const MEAN_DEFECT_TOL: f64 = 1e-10;

/// Outputs: `sca_oracle_k{k}.csv`, `sca_training.csv`, `sca_extrapolation.csv`, `sca_summary.json`.
pub fn run_sca(cfg: &ScaStudyConfig, seed: u64, out: &mut OutputDir) -> Result<Vec<Check>> {
    let domain = MicroDomain::reference(cfg.length, cfg.n_points).map_err(core("micro domain"))?;

    let (tables, t_oracle) = timed(|| oracle_tables(cfg, &domain, seed));
    let tables = tables.map_err(core("SCA oracle tables"))?;
    let oracle_err = tables.iter().find(|t| t.k == cfg.oracle_k).map_or(f64::NAN, |t| t.rel_l2);
    let check12 =
        Check::new(12).at_most(format!("relative L2 at k = {}", cfg.oracle_k), oracle_err, ORACLE_TOL).finish(t_oracle);

    let (trained, t_train) = timed(|| train_study_network(cfg, &domain, seed));
    let trained = trained.map_err(core("GKN training"))?;
    let report = &trained.report;
    let (initial, train, test) = (report.initial_train(), report.final_train(), report.final_test());
    let check13 = Check::new(13).at_most("final train NMSE", train, NMSE_REDUCTION * initial).finish(t_train);

    let (ext, t_ext) = timed(|| extrapolate(cfg, &domain, &trained.net, seed));
    let ext = ext.map_err(core("extrapolation"))?;
    let check14 =
        Check::new(14).below(format!("NMSE against SCA at k = {}", ext.k), ext.nmse, EXTRAPOLATION_NMSE).finish(t_ext);

    for t in &tables {
        out.write(&format!("sca_oracle_k{}.csv", t.k), &t.to_csv())?;
    }
    out.write("sca_training.csv", &report.to_csv())?;
    out.write("sca_extrapolation.csv", &ext.to_csv())?;

    let rel = |k: usize| tables.iter().find(|t| t.k == k).map(|t| t.rel_l2);
    let refinement = match (rel(2), rel(8), rel(128)) {
        (Some(a), Some(b), Some(c)) => Some(c < b && b < a),
        _ => None,
    };
    let max_mean_defect = tables.iter().map(|t| t.mean_defect).fold(0.0, f64::max);
    let mean_error = (ext.gkn_mean - ext.strain).abs() / ext.strain;
    out.write_json(
        "sca_summary.json",
        &json!({
            "oracle": tables.iter().map(|t| json!({
                "k": t.k,
                "strain": t.strain,
                "relative_l2": t.rel_l2,
                "mean_defect": t.mean_defect,
                "kmeans_reseeds": t.kmeans_reseeds,
            })).collect::<Vec<_>>(),
            "dataset": { "train": trained.n_train, "test": trained.n_test },
            "parameters": trained.net.n_parameters(),
            "training": {
                "epochs": report.history.len(),
                "initial_train_nmse": initial,
                "final_train_nmse": train,
                "final_test_nmse": test,
                "lr_halved": report.lr_halved,
                "aborted": report.aborted,
            },
            "extrapolation": {
                "k": ext.k,
                "strain": ext.strain,
                "nmse": ext.nmse,
                "max_abs": ext.max_abs,
                "gkn_mean": ext.gkn_mean,
                "sca_oracle_relative_l2": ext.sca_oracle_rel_l2,
            },
            "diagnostics": {
                "test_over_train_nmse": { "value": test / train, "threshold": TEST_TRAIN_RATIO, "passed": test <= TEST_TRAIN_RATIO * train },
                "gkn_mean_relative_error": { "value": mean_error, "threshold": MEAN_TOL, "passed": mean_error <= MEAN_TOL },
                "sca_oracle_at_extrapolation": { "value": ext.sca_oracle_rel_l2, "threshold": ORACLE_TOL, "passed": ext.sca_oracle_rel_l2 <= ORACLE_TOL },
                "linearity_defect": { "value": trained.linearity_defect, "threshold": LINEARITY_TOL, "passed": trained.linearity_defect <= LINEARITY_TOL },
                "max_mean_strain_defect": { "value": max_mean_defect, "threshold": MEAN_DEFECT_TOL, "passed": max_mean_defect <= MEAN_DEFECT_TOL },
                "monotone_refinement_2_8_128": refinement,
            },
        }),
    )?;
    Ok(vec![check12, check13, check14])
}
