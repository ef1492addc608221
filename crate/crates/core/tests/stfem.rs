use std::f64::consts::PI;

use dldc_core::stfem::{
    add_noise, assemble_smd, damping_ratio_from_response, max_relative_error, predict_new_conditions,
    smd_element_matrices, teacher_forced_loss, Forcing, SmdProblem, TimeSeries,
};
use nalgebra::DMatrix;

/// Closed-form response of m u'' + c u' + k u = f0 sin(ωt) for an underdamped oscillator.
fn analytic_smd(p: &SmdProblem, f0: f64, omega: f64, t: f64) -> f64 {
    let (m, c, k) = (p.m, p.c, p.k);
    let d = (k - m * omega * omega).powi(2) + (c * omega).powi(2);
    let a = f0 * (k - m * omega * omega) / d;
    let b = -f0 * c * omega / d;
    let sigma = c / (2.0 * m);
    let wd = (k / m - sigma * sigma).sqrt();
    let c1 = p.u0 - b;
    let c2 = (p.v0 + sigma * c1 - a * omega) / wd;
    (-sigma * t).exp() * (c1 * (wd * t).cos() + c2 * (wd * t).sin()) + a * (omega * t).sin() + b * (omega * t).cos()
}

#[test]
fn unit_step_element_matrices() {
    let (m, c, k) = smd_element_matrices(1.0);
    assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    assert_eq!(c, DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, -0.5, 0.5]));
    assert!((k - DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0])).amax() < 1e-15);
}

#[test]
fn forced_oscillator_converges_to_the_closed_form() {
    let mut errors = Vec::new();
    for n in [300, 600, 1200] {
        let p = SmdProblem::reference(n);
        let sys = assemble_smd(&p).unwrap();
        let u = sys.solve_direct().unwrap();
        let err = sys
            .times()
            .iter()
            .zip(&u)
            .map(|(t, u)| (u[0] - analytic_smd(&p, 10.0, 2.0 * PI, *t)).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    assert!(errors[2] < 1e-3, "{errors:?}");
    // Second-order accuracy: halving Δt cuts the error about fourfold.
    for w in errors.windows(2) {
        assert!(w[0] / w[1] > 3.0, "{errors:?}");
    }
}

#[test]
fn free_particle_and_stepping_agree_with_the_direct_solve() {
    let p = SmdProblem { m: 2.0, c: 0.0, k: 0.0, forcing: Forcing::none(), u0: 0.5, v0: -1.0, t_end: 2.0, n_elem: 40 };
    let sys = assemble_smd(&p).unwrap();
    let direct = sys.solve_direct().unwrap();
    for (t, u) in sys.times().iter().zip(&direct) {
        assert!((u[0] - (0.5 - t)).abs() < 1e-10);
    }
    let rolled = sys.rollout().unwrap();
    for (a, b) in rolled.iter().zip(&direct) {
        assert!((a[0] - b[0]).abs() < 1e-10);
    }
}

#[test]
fn true_coefficients_are_a_stationary_point_of_the_clean_loss() {
    let p = SmdProblem::reference(150);
    let sys = assemble_smd(&p).unwrap();
    let obs = TimeSeries::from_slices(sys.times(), &sys.solve_direct().unwrap()).unwrap();
    let (loss, grad) = teacher_forced_loss(&sys, &obs).unwrap();
    assert!(loss < 1e-10);
    assert!(grad.iter().all(|g| g.abs() < 1e-8), "{grad:?}");
    let off = assemble_smd(&p.with_coeffs([1.1, 10.0, 100.0])).unwrap();
    assert!(teacher_forced_loss(&off, &obs).unwrap().0 > 1e-6);
}

#[test]
fn damping_ratio_of_the_reference_oscillator() {
    let s = predict_new_conditions([1.0, 10.0, 100.0], (1.0, 0.0), Forcing::none(), 3.0, 3000).unwrap();
    let zeta = damping_ratio_from_response(&s.component(0)).unwrap();
    assert!((zeta - 0.5).abs() < 5e-3, "{zeta}");
}

#[test]
fn noise_has_the_requested_variance_and_is_reproducible() {
    let base = TimeSeries::new((0..20_000).map(|i| i as f64).collect(), vec![vec![1.0]; 20_000]).unwrap();
    let a = add_noise(&base, 0.0, 0.001, 5).unwrap();
    assert_eq!(a, add_noise(&base, 0.0, 0.001, 5).unwrap());
    assert_ne!(a, add_noise(&base, 0.0, 0.001, 6).unwrap());
    let v = a.component(0);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    assert!((mean - 1.0).abs() < 2e-3 && (var - 0.001).abs() < 1e-4, "{mean} {var}");
    assert!(max_relative_error(&a, &base).unwrap() > 0.0);
}
