//! Stencil, Euler and quadrature recovery.

use dldc_core::calculus::{
    apply_stencil, classical_stencil_oracle, explicit_euler_trajectory, gauss_oracle, integrate, train_euler,
    train_quadrature, train_stencil, EulerNet, QuadratureNet, SampledFunction, StencilNet,
};
use dldc_core::optim::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{derive_seed, timed};
use crate::error::{core, Result};
use crate::manifest::{Check, OutputDir};

/// Relative tolerance on recovered stencil weights.
const STENCIL_TOL: f64 = 1e-3;
/// Transfer slack as a fraction of max |f'|.
const TRANSFER_SLACK: f64 = 1e-3;
const EULER_TOL: f64 = 1e-3;
const EULER_ENDPOINT_SLACK: f64 = 1e-6;
const QUADRATURE_TOL: f64 = 1e-3;
/// Largest epoch-to-epoch loss increase factor of a well-behaved training curve.
const LOSS_JUMP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreePointConfig {
    pub offsets: Vec<i64>,
    pub spacing: f64,
    pub x0: f64,
    pub n_samples: usize,
    pub epochs: usize,
    pub lr: f64,
    pub lr_final: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StencilConfig {
    /// Sample spacing of the sine and cosine data, in degrees.
    pub spacing_deg: f64,
    pub n_samples: usize,
    pub offsets: Vec<i64>,
    pub epochs: usize,
    pub lr: f64,
    pub lr_final: f64,
    pub seed: u64,
    /// One-sided stencil fitted to x² samples.
    pub three_point: ThreePointConfig,
}

impl Default for StencilConfig {
    fn default() -> Self {
        Self {
            spacing_deg: 1.0,
            n_samples: 361,
            offsets: vec![0, 1],
            epochs: 20_000,
            lr: 0.005,
            lr_final: 1e-5,
            seed: 1,
            three_point: ThreePointConfig {
                offsets: vec![0, 1, 2],
                spacing: 0.1,
                x0: -1.0,
                n_samples: 21,
                epochs: 40_000,
                lr: 0.005,
                lr_final: 1e-6,
                seed: 5,
            },
        }
    }
}

fn max_rel(learned: &[f64], oracle: &[f64]) -> f64 {
    learned.iter().zip(oracle).map(|(w, o)| (w - o).abs() / o.abs()).fold(0.0, f64::max)
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Outputs: `stencil_weights.json`, `stencil_training.csv`,
/// `stencil3_training.csv`, `stencil_predictions.csv`.
pub fn run_stencil(cfg: &StencilConfig, seed: u64, out: &mut OutputDir) -> Result<Vec<Check>> {
    let h = cfg.spacing_deg.to_radians();
    let (fits, t_train) = timed(|| -> Result<_> {
        let sine = SampledFunction::uniform(0.0, h, cfg.n_samples, f64::sin).map_err(core("sine samples"))?;
        let dsine: Vec<f64> = sine.xs().iter().map(|x| x.cos()).collect();
        let net = StencilNet::new(cfg.offsets.clone(), h).map_err(core("stencil"))?;
        let train = TrainConfig::new(cfg.epochs, cfg.lr).with_decay(cfg.lr_final);
        let two = train_stencil(&net, &[(sine, dsine)], &train, derive_seed(seed, cfg.seed))
            .map_err(core("training the sine stencil"))?;
        let tp = &cfg.three_point;
        let quad = SampledFunction::uniform(tp.x0, tp.spacing, tp.n_samples, |x| x * x).map_err(core("x² samples"))?;
        let dquad: Vec<f64> = quad.xs().iter().map(|x| 2.0 * x).collect();
        let net3 = StencilNet::new(tp.offsets.clone(), tp.spacing).map_err(core("stencil"))?;
        let train3 = TrainConfig::new(tp.epochs, tp.lr).with_decay(tp.lr_final);
        let three = train_stencil(&net3, &[(quad, dquad)], &train3, derive_seed(seed, tp.seed))
            .map_err(core("training the three-point stencil"))?;
        Ok((two, three))
    });
    let (two, three) = fits?;
    let oracle2 = classical_stencil_oracle(&cfg.offsets, h).map_err(core("stencil oracle"))?;
    let oracle3 =
        classical_stencil_oracle(&cfg.three_point.offsets, cfg.three_point.spacing).map_err(core("stencil oracle"))?;
    let err2 = max_rel(&two.net.weights, &oracle2);
    let err3 = max_rel(&three.net.weights, &oracle3);

    let (transfer, t_transfer) = timed(|| -> Result<_> {
        let mut classical = two.net.clone();
        classical.weights = oracle2.clone();
        let mut rows = String::from("function,x_deg,f,df_true,df_net,df_classical\n");
        let mut rmses = Vec::new();
        for (name, f, df) in [
            ("sin", f64::sin as fn(f64) -> f64, f64::cos as fn(f64) -> f64),
            ("cos", f64::cos as fn(f64) -> f64, (|x: f64| -x.sin()) as fn(f64) -> f64),
        ] {
            let samples = SampledFunction::uniform(0.0, h, cfg.n_samples, f).map_err(core("samples"))?;
            let net_out = apply_stencil(&two.net, &samples).map_err(core("applying the stencil"))?;
            let fd_out = apply_stencil(&classical, &samples).map_err(core("applying the stencil"))?;
            let truth: Vec<f64> = net_out.indices.iter().map(|&i| df(samples.xs()[i])).collect();
            for (k, &i) in net_out.indices.iter().enumerate() {
                let x = samples.xs()[i];
                rows.push_str(&format!(
                    "{name},{:e},{:e},{:e},{:e},{:e}\n",
                    x.to_degrees(),
                    samples.ys()[i],
                    truth[k],
                    net_out.values[k],
                    fd_out.values[k]
                ));
            }
            let max_df = samples.xs().iter().map(|&x| df(x).abs()).fold(0.0, f64::max);
            rmses.push((rmse(&net_out.values, &truth), rmse(&fd_out.values, &truth), max_df));
        }
        Ok((rows, rmses))
    });
    let (rows, rmses) = transfer?;
    let (net_rmse, fd_rmse, max_df) = rmses[1];

    out.write("stencil_training.csv", &two.history.to_csv(&names("w_dx_", cfg.offsets.len())))?;
    out.write("stencil3_training.csv", &three.history.to_csv(&names("w_dx_", cfg.three_point.offsets.len())))?;
    out.write("stencil_predictions.csv", &rows)?;
    out.write_json(
        "stencil_weights.json",
        &json!({
            "two_point": {
                "offsets": cfg.offsets,
                "spacing": h,
                "learned": two.net.weights,
                "oracle": oracle2,
                "max_relative_error": err2,
                "epochs": two.history.epochs(),
                "final_loss": two.history.loss.last(),
                "loss_curve_well_behaved": two.history.is_well_behaved(LOSS_JUMP),
            },
            "three_point": {
                "offsets": cfg.three_point.offsets,
                "spacing": cfg.three_point.spacing,
                "learned": three.net.weights,
                "oracle": oracle3,
                "max_relative_error": err3,
                "epochs": three.history.epochs(),
                "final_loss": three.history.loss.last(),
                "loss_curve_well_behaved": three.history.is_well_behaved(LOSS_JUMP),
            },
            "transfer": {
                "sine_rmse_net": rmses[0].0,
                "sine_rmse_classical": rmses[0].1,
                "cosine_rmse_net": net_rmse,
                "cosine_rmse_classical": fd_rmse,
                "cosine_max_abs_derivative": max_df,
            },
        }),
    )?;
    Ok(vec![
        Check::new(1)
            .at_most("two-point max relative weight error", err2, STENCIL_TOL)
            .at_most("three-point max relative weight error", err3, STENCIL_TOL)
            .finish(t_train),
        Check::new(2)
            .at_most("cosine derivative RMSE of the net", net_rmse, fd_rmse + TRANSFER_SLACK * max_df)
            .finish(t_train + t_transfer),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EulerConfig {
    pub dt: f64,
    /// Training steps of explicit Euler on dy/dt = 15t² + 8t from y(0) = 0.
    pub n_steps: usize,
    /// End of the integration interval starting at t = 0.
    pub t_end: f64,
    pub epochs: usize,
    pub lr: f64,
    pub lr_final: f64,
    pub seed: u64,
}

impl Default for EulerConfig {
    fn default() -> Self {
        Self { dt: 0.01, n_steps: 100, t_end: 1.0, epochs: 20_000, lr: 0.01, lr_final: 1e-8, seed: 0 }
    }
}

fn rhs(_: f64, t: f64) -> f64 {
    15.0 * t * t + 8.0 * t
}

fn exact(t: f64) -> f64 {
    5.0 * t.powi(3) + 4.0 * t * t
}

/// Outputs: `euler_weights.json`, `euler_training.csv`, `euler_trajectory.csv`.
pub fn run_euler(cfg: &EulerConfig, seed: u64, out: &mut OutputDir) -> Result<Vec<Check>> {
    let (res, runtime) = timed(|| -> Result<_> {
        let data = explicit_euler_trajectory(rhs, 0.0, 0.0, cfg.dt, cfg.n_steps);
        let net = EulerNet::new(0.0, cfg.dt).map_err(core("Euler net"))?;
        let mut train = TrainConfig::new(cfg.epochs, cfg.lr).with_decay(cfg.lr_final);
        train.early_stop = false;
        let fit = train_euler(&net, &data, &train, derive_seed(seed, cfg.seed)).map_err(core("training"))?;
        let y_net = integrate(&fit.net, rhs, 0.0, (0.0, cfg.t_end), cfg.dt).map_err(core("integrating"))?;
        let mut classical = net.clone();
        classical.weights = net.classical_weights();
        let y_euler = integrate(&classical, rhs, 0.0, (0.0, cfg.t_end), cfg.dt).map_err(core("integrating"))?;
        Ok((fit, classical, y_net, y_euler))
    });
    let (fit, classical, y_net, y_euler) = res?;
    let (w, c) = (&fit.net.weights, &classical.weights);
    let err_y = (w[0] - c[0]).abs();
    let err_f = (w[1] - c[1]).abs() / c[1].abs();
    let target = exact(cfg.t_end);
    let end_net = y_net.last().map_or(f64::NAN, |p| p.1);
    let end_euler = y_euler.last().map_or(f64::NAN, |p| p.1);

    let mut traj = String::from("t,y_net,y_euler,y_exact\n");
    for ((t, a), (_, b)) in y_net.iter().zip(&y_euler) {
        traj.push_str(&format!("{t:e},{a:e},{b:e},{:e}\n", exact(*t)));
    }
    out.write("euler_trajectory.csv", &traj)?;
    out.write("euler_training.csv", &fit.history.to_csv(&["w_y".into(), "w_f_over_dt".into()]))?;
    out.write_json(
        "euler_weights.json",
        &json!({
            "dt": cfg.dt,
            "learned": w,
            "classical": c,
            "abs_error_w_y": err_y,
            "rel_error_w_f": err_f,
            "gram_condition": fit.gram_condition,
            "degenerate": fit.degenerate,
            "y_net_end": end_net,
            "y_euler_end": end_euler,
            "y_exact_end": target,
            "epochs": fit.history.epochs(),
            "loss_curve_well_behaved": fit.history.is_well_behaved(LOSS_JUMP),
        }),
    )?;
    Ok(vec![Check::new(3)
        .at_most("|w_y - 1|", err_y, EULER_TOL)
        .at_most("|w_f - dt| / dt", err_f, EULER_TOL)
        .at_most("|y_net(1) - 9|", (end_net - target).abs(), (end_euler - target).abs() + EULER_ENDPOINT_SLACK)
        .finish(runtime)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub n_points: Vec<usize>,
    /// Random training polynomials of degree 2n − 1.
    pub n_samples: usize,
    pub epochs: usize,
    pub lr: f64,
    pub lr_final: f64,
    pub seed: u64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { n_points: vec![2, 3, 4], n_samples: 64, epochs: 20_000, lr: 0.005, lr_final: 1e-5, seed: 7 }
    }
}

/// Outputs: `quadrature_rules.json`, `quadrature_comparison.csv`,
/// `quadrature_training_n{n}.csv`.
pub fn run_quadrature(cfg: &QuadratureConfig, seed: u64, out: &mut OutputDir) -> Result<Vec<Check>> {
    let mut check = Check::new(4);
    let mut total = 0.0;
    let mut table = String::from("n,i,node,weight,gauss_node,gauss_weight\n");
    let mut rules = Vec::new();
    for &n in &cfg.n_points {
        let (fit, t) = timed(|| {
            let net = QuadratureNet::new(n)?;
            let train = TrainConfig::new(cfg.epochs, cfg.lr).with_decay(cfg.lr_final);
            train_quadrature(&net, cfg.n_samples, &train, derive_seed(seed, cfg.seed))
        });
        total += t;
        let fit = fit.map_err(core(format!("training the {n}-point rule")))?;
        let (x, w) = fit.net.sorted();
        let (gx, gw) = gauss_oracle(n).map_err(core("Gauss oracle"))?;
        let err = x.iter().zip(&gx).chain(w.iter().zip(&gw)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        for i in 0..n {
            table.push_str(&format!("{n},{i},{:e},{:e},{:e},{:e}\n", x[i], w[i], gx[i], gw[i]));
        }
        let mut cols = names("node_", n);
        cols.extend(names("weight_", n));
        out.write(&format!("quadrature_training_n{n}.csv"), &fit.history.to_csv(&cols))?;
        rules.push(json!({
            "n": n,
            "nodes": x,
            "weights": w,
            "gauss_nodes": gx,
            "gauss_weights": gw,
            "max_abs_error": err,
            "epochs": fit.history.epochs(),
            "final_loss": fit.history.loss.last(),
            "loss_curve_well_behaved": fit.history.is_well_behaved(LOSS_JUMP),
        }));
        check = check.at_most(format!("n = {n} max abs node/weight error"), err, QUADRATURE_TOL);
    }
    out.write("quadrature_comparison.csv", &table)?;
    out.write_json("quadrature_rules.json", &json!({ "rules": rules }))?;
    Ok(vec![check.finish(total)])
}
