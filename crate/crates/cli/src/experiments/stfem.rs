//! Space-time FEM identification of the spring-mass-damper coefficients.

use dldc_core::stfem::{
    add_noise, assemble_smd, consistency, run_identification, validate, Identification, StfemStudyConfig, TimeSeries,
    ValidationResult,
};
use serde_json::json;

use super::{derive_seed, timed};
use crate::error::{core, Result};
use crate::manifest::{Check, OutputDir};

const CLEAN_COEFF_TOL: f64 = 0.01;
const CLEAN_PREDICTION_TOL: f64 = 0.01;
const NOISY_COEFF_TOL: f64 = 0.15;
const NOISY_PREDICTION_TOL: f64 = 0.05;
const EQUIVALENCE_TOL: f64 = 1e-9;
const GRADCHECK_TOL: f64 = 1e-4;

fn seeded(cfg: &StfemStudyConfig, seed: u64) -> StfemStudyConfig {
    let mut c = cfg.clone();
    c.noise_seed = derive_seed(seed, cfg.noise_seed);
    c.seeds = cfg.seeds.iter().map(|&s| derive_seed(seed, s)).collect();
    c
}

fn coefficient_json(id: &Identification) -> serde_json::Value {
    json!({
        "n_elem": id.n_elem,
        "noise_variance": id.noise_variance,
        "mode": id.run.mode,
        "winning_seed": id.run.seed,
        "coefficients": id.run.names.iter().zip(&id.run.coeffs).map(|(n, v)| (n.clone(), *v)).collect::<std::collections::BTreeMap<_, _>>(),
        "relative_errors": id.relative_errors.iter().cloned().collect::<std::collections::BTreeMap<_, _>>(),
        "final_loss": id.run.final_loss,
        "epochs": id.run.history.epochs(),
        "loss_increase_fraction": id.loss_increase_fraction,
    })
}

fn validation_json(v: &[ValidationResult]) -> serde_json::Value {
    v.iter().map(|r| json!({ "case": r.name, "max_relative_error": r.max_rel, "max_abs_error": r.max_abs })).collect()
}

fn write_validation(out: &mut OutputDir, tag: &str, v: &[ValidationResult]) -> Result<()> {
    for r in v {
        out.write(&format!("stfem_prediction_{tag}_{}.csv", r.name), &r.to_csv())?;
    }
    Ok(())
}

fn observed_csv(clean: &TimeSeries, noisy: &TimeSeries) -> String {
    let mut s = String::from("t,u_clean,u_noisy\n");
    for (i, t) in clean.times.iter().enumerate() {
        s.push_str(&format!("{t:e},{:e},{:e}\n", clean.values[i][0], noisy.values[i][0]));
    }
    s
}

/// Outputs: `stfem_history_{clean,noisy}.csv`, `stfem_prediction_{clean,noisy}_<case>.csv`,
/// `stfem_noisy_data.csv`, `stfem_summary.json`.
pub fn run_stfem(cfg: &StfemStudyConfig, seed: u64, out: &mut OutputDir) -> Result<Vec<Check>> {
    let cfg = seeded(cfg, seed);

    let (clean, t_clean) = timed(|| run_identification(&cfg, cfg.clean_elements, 0.0, cfg.clean_mode));
    let clean = clean.map_err(core("clean identification"))?;
    let mut check8 = Check::new(8);
    for (name, err) in &clean.relative_errors {
        check8 = check8.at_most(format!("relative error of {name}"), *err, CLEAN_COEFF_TOL);
    }
    let check8 = check8.finish(t_clean);

    let (clean_val, t_val) = timed(|| validate(&cfg, clean.coeffs(), cfg.clean_elements));
    let clean_val = clean_val.map_err(core("clean validation"))?;
    let mut check9 = Check::new(9);
    for r in &clean_val {
        check9 = check9.at_most(format!("{} max relative error", r.name), r.max_rel, CLEAN_PREDICTION_TOL);
    }
    let check9 = check9.finish(t_val);

    let (noisy, t_noisy) = timed(|| -> dldc_core::Result<_> {
        let id = run_identification(&cfg, cfg.noisy_elements, cfg.noise_variance, cfg.noisy_mode)?;
        let val = validate(&cfg, id.coeffs(), cfg.noisy_elements)?;
        Ok((id, val))
    });
    let (noisy, noisy_val) = noisy.map_err(core("noisy identification"))?;
    let mut check10 = Check::new(10);
    for (name, err) in &noisy.relative_errors {
        check10 = check10.at_most(format!("relative error of {name}"), *err, NOISY_COEFF_TOL);
    }
    for r in &noisy_val {
        check10 = check10.at_most(format!("{} max abs error", r.name), r.max_abs, NOISY_PREDICTION_TOL);
    }
    let check10 = check10.finish(t_noisy);

    let (cons, t_cons) = timed(|| consistency(&cfg));
    let cons = cons.map_err(core("stepper consistency"))?;
    let check11 = Check::new(11)
        .at_most("iterated stepping vs direct solve", cons.ar_vs_direct, EQUIVALENCE_TOL)
        .at_most("single step vs direct solve", cons.single_step, EQUIVALENCE_TOL)
        .at_most("finite-difference gradient error", cons.gradcheck, GRADCHECK_TOL)
        .finish(t_cons);

    let mut sweep = Vec::new();
    for &v in &cfg.noise_sweep {
        let id = run_identification(&cfg, cfg.noisy_elements, v, cfg.noisy_mode)
            .map_err(core(format!("identification at noise variance {v}")))?;
        sweep.push(coefficient_json(&id));
    }

    let truth = assemble_smd(&cfg.problem(cfg.noisy_elements)).map_err(core("noisy-mesh system"))?;
    let clean_series = TimeSeries::from_slices(truth.times(), &truth.solve_direct().map_err(core("direct solve"))?)
        .map_err(core("observed series"))?;
    let noisy_series =
        add_noise(&clean_series, cfg.noise_mean, cfg.noise_variance, cfg.noise_seed).map_err(core("noisy series"))?;

    out.write("stfem_history_clean.csv", &clean.history_csv())?;
    out.write("stfem_history_noisy.csv", &noisy.history_csv())?;
    out.write("stfem_noisy_data.csv", &observed_csv(&clean_series, &noisy_series))?;
    write_validation(out, "clean", &clean_val)?;
    write_validation(out, "noisy", &noisy_val)?;
    out.write_json(
        "stfem_summary.json",
        &json!({
            "truth": { "m": cfg.m, "c": cfg.c, "k": cfg.k },
            "clean": coefficient_json(&clean),
            "clean_validation": validation_json(&clean_val),
            "noisy": coefficient_json(&noisy),
            "noisy_validation": validation_json(&noisy_val),
            "noise_sweep": sweep,
            "consistency": cons,
        }),
    )?;
    Ok(vec![check8, check9, check10, check11])
}
