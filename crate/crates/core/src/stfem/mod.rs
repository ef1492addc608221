//! Space-time finite elements as a second-order autoregressive network, and
//! identification of the physical coefficients behind its weights.

mod bar;
mod forcing;
mod identify;
mod smd;
mod study;
mod system;

pub use bar::{assemble_bar, bar_element_matrices, BarProblem, BarSupport};
pub use forcing::Forcing;
pub use identify::{
    add_noise, damping_ratio_from_response, identify, identify_once, max_abs_error, max_relative_error,
    predict_new_conditions, rollout_loss, teacher_forced_loss, IdentificationRun, IdentifyConfig, IdentifyMode,
    NoiseMeta, TimeSeries,
};
pub use smd::{assemble_smd, smd_element_matrices, SmdProblem};
pub use study::{
    consistency, run_identification, validate, ConsistencyReport, Identification, StfemStudyConfig, StudyProblem,
    ValidationCase, ValidationResult,
};
pub use system::{BlockSet, SpaceTimeSystem};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::gauss_legendre;
    use crate::optim::{finite_diff_gradcheck, ParamStore};
    use nalgebra::{DMatrix, DVector};

    fn bar(support: BarSupport, n_nodes: usize, n_time: usize) -> BarProblem {
        BarProblem {
            e: 2.0,
            a_cs: 1.5,
            rho: 0.8,
            length: 1.0,
            n_nodes,
            n_time,
            t_end: 0.5,
            support,
            tip_force: Forcing::sine(1.0, 3.0),
            u0: (0..n_nodes).map(|i| 0.01 * i as f64).collect(),
            v0: vec![0.05; n_nodes],
        }
    }

    fn max_rel(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
        let scale = b.iter().map(|v| v.amax()).fold(0.0, f64::max);
        a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max) / scale
    }

    #[test]
    fn smd_element_matrices_for_unit_step() {
        let (m, c, k) = smd_element_matrices(1.0);
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, -0.5, 0.5]));
        let kk = DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0]);
        assert!((k - kk).amax() < 1e-15);
    }

    #[test]
    fn bar_element_matrices_match_gauss_integration() {
        let (k, m) = bar_element_matrices(1.0, 1.0, 1.0, 1.0);
        let (x, w) = gauss_legendre(2);
        // Bilinear shape functions on the unit square, node k = 2·(time) + (space).
        let n = |k: usize, s: f64, t: f64| {
            let a = if k.is_multiple_of(2) { 1.0 - s } else { s };
            let b = if k / 2 == 0 { 1.0 - t } else { t };
            (a, b)
        };
        let ds = |k: usize| if k.is_multiple_of(2) { -1.0 } else { 1.0 };
        let dt = |k: usize| if k / 2 == 0 { -1.0 } else { 1.0 };
        let mut ko = DMatrix::zeros(4, 4);
        let mut mo = DMatrix::zeros(4, 4);
        for (xa, wa) in x.iter().zip(&w) {
            for (xb, wb) in x.iter().zip(&w) {
                let (s, t) = (0.5 * (xa + 1.0), 0.5 * (xb + 1.0));
                let wt = 0.25 * wa * wb;
                for i in 0..4 {
                    for j in 0..4 {
                        let (ai, bi) = n(i, s, t);
                        let (aj, bj) = n(j, s, t);
                        ko[(i, j)] += wt * ds(i) * bi * ds(j) * bj;
                        mo[(i, j)] += wt * ai * dt(i) * aj * dt(j);
                    }
                }
            }
        }
        assert!((k - ko).amax() < 1e-14);
        assert!((m - mo).amax() < 1e-14);
    }

    #[test]
    fn free_particle_moves_linearly() {
        let p =
            SmdProblem { m: 1.0, c: 0.0, k: 0.0, forcing: Forcing::none(), u0: 0.0, v0: 1.0, t_end: 2.0, n_elem: 20 };
        let sys = assemble_smd(&p).unwrap();
        for (t, u) in sys.times().iter().zip(sys.solve_direct().unwrap()) {
            assert!((u[0] - t).abs() < 1e-10);
        }
    }

    #[test]
    fn stepping_equals_direct_solve() {
        let smd = assemble_smd(&SmdProblem::reference(150)).unwrap();
        let bars = [
            assemble_bar(&bar(BarSupport::ClampedFree, 8, 40)).unwrap(),
            assemble_bar(&bar(BarSupport::FreeFree, 5, 30)).unwrap(),
        ];
        for sys in std::iter::once(&smd).chain(&bars) {
            let direct = sys.solve_direct().unwrap();
            let stepped = sys.step_from(&direct[0], &direct[1]).unwrap();
            assert!(max_rel(&stepped, &direct) < 1e-9);
            assert!(max_rel(&sys.rollout().unwrap(), &direct) < 1e-9);
            for t in 1..sys.n_time - 1 {
                let u = sys.ar_step(&direct[t - 1], &direct[t], &sys.forces[t]).unwrap();
                assert!((&u - &direct[t + 1]).amax() <= 1e-9 * direct[t + 1].amax().max(1e-12));
            }
        }
    }

    #[test]
    fn zero_data_gives_zero_response() {
        let p = SmdProblem { forcing: Forcing::none(), u0: 0.0, v0: 0.0, ..SmdProblem::reference(30) };
        let sys = assemble_smd(&p).unwrap();
        assert!(sys.rollout().unwrap().iter().all(|u| u[0] == 0.0));
        assert!(sys.solve_direct().unwrap().iter().all(|u| u[0] == 0.0));
    }

    #[test]
    fn global_matrix_has_the_block_band_profile() {
        let sys = assemble_bar(&bar(BarSupport::FreeFree, 4, 6)).unwrap();
        let (m, _) = sys.global_system();
        let n = sys.n_space;
        let b = sys.blocks();
        for row in 0..m.dim() {
            let blk = row / n;
            let (lo, hi) = match blk {
                0 => (0, n),
                1 => (0, 2 * n),
                t => ((t - 2) * n, (t + 1) * n),
            };
            for col in 0..m.dim() {
                if col < lo || col >= hi {
                    assert_eq!(m.get(row, col), 0.0, "({row},{col})");
                }
            }
            if blk >= 2 {
                let i = row % n;
                for j in 0..n {
                    assert_eq!(m.get(row, lo + j), b.a[(i, j)]);
                    assert_eq!(m.get(row, lo + n + j), b.b[(i, j)]);
                    assert_eq!(m.get(row, lo + 2 * n + j), b.c[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn undamped_bar_has_identical_a_and_c() {
        let b = assemble_bar(&bar(BarSupport::FreeFree, 6, 10)).unwrap().blocks();
        assert_eq!(b.a, b.c);
        assert_eq!(b.a, b.a.transpose());
    }

    fn assert_affine(sys: &SpaceTimeSystem, t1: &[f64], t2: &[f64]) {
        let sum: Vec<f64> = t1.iter().zip(t2).map(|(a, b)| a + b).collect();
        let zero = vec![0.0; t1.len()];
        let at = |c: &[f64]| sys.with_coeffs(c).unwrap().blocks();
        let (s, a, b, z) = (at(&sum), at(t1), at(t2), at(&zero));
        for (x, y) in [(&s.a, &a.a + &b.a - &z.a), (&s.b, &a.b + &b.b - &z.b), (&s.c, &a.c + &b.c - &z.c)] {
            assert!((x - y).amax() <= 1e-12 * x.amax());
        }
        assert!((&s.vel - (&a.vel + &b.vel - &z.vel)).amax() <= 1e-12 * s.vel.amax().max(1.0));
    }

    #[test]
    fn blocks_are_affine_in_the_coefficients() {
        let smd = assemble_smd(&SmdProblem::reference(10)).unwrap();
        assert_affine(&smd, &[1.0, 10.0, 100.0], &[0.3, -2.0, 7.0]);
        let b = assemble_bar(&bar(BarSupport::ClampedFree, 5, 6)).unwrap();
        assert_affine(&b, &[2.0, 0.8], &[1.0, 0.1]);
        let e1 = b.with_coeffs(&[1.0, 0.0]).unwrap().blocks();
        let e2 = b.with_coeffs(&[2.0, 0.0]).unwrap().blocks();
        let free = assemble_bar(&bar(BarSupport::FreeFree, 5, 6)).unwrap();
        let f1 = free.with_coeffs(&[1.0, 0.0]).unwrap().blocks();
        let f2 = free.with_coeffs(&[2.0, 0.0]).unwrap().blocks();
        assert_eq!(f2.b, &f1.b * 2.0);
        assert_eq!(f2.a, &f1.a * 2.0);
        assert_eq!(e2.b.row(1), (&e1.b * 2.0).row(1));
    }

    #[test]
    fn massless_bar_is_static_under_constant_load() {
        let (e, a_cs, p, len, n) = (3.0, 2.0, 0.6, 2.0, 6);
        let dx = len / (n - 1) as f64;
        let us: Vec<f64> = (0..n).map(|i| p * i as f64 * dx / (e * a_cs)).collect();
        let prob = BarProblem {
            e,
            a_cs,
            rho: 0.0,
            length: len,
            n_nodes: n,
            n_time: 5,
            t_end: 1.0,
            support: BarSupport::ClampedFree,
            tip_force: Forcing::constant(p),
            u0: us.clone(),
            v0: vec![0.0; n],
        };
        let sys = assemble_bar(&prob).unwrap();
        for u in sys.solve_direct().unwrap() {
            for (a, b) in u.iter().zip(&us) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let p = SmdProblem { m: 0.0, ..SmdProblem::reference(10) };
        assert!(matches!(assemble_smd(&p), Err(crate::Error::Contract(_))));
        let mut b = bar(BarSupport::FreeFree, 4, 5);
        b.e = -1.0;
        assert!(matches!(assemble_bar(&b), Err(crate::Error::Contract(_))));
        // C = m/Δt + c/2 + kΔt/6 vanishes for m = 1, Δt = 0.1, c = −20, k = 0.
        let sys =
            assemble_smd(&SmdProblem { m: 1.0, c: -20.0, k: 0.0, t_end: 1.0, ..SmdProblem::reference(10) }).unwrap();
        let z = DVector::zeros(1);
        match sys.ar_step(&z, &z, &z) {
            Err(crate::Error::Singular(msg)) => assert!(msg.contains("c = -20"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    fn observed(p: &SmdProblem) -> TimeSeries {
        let sys = assemble_smd(p).unwrap();
        TimeSeries::from_slices(sys.times(), &sys.solve_direct().unwrap()).unwrap()
    }

    #[test]
    fn noise_statistics_and_determinism() {
        let base = TimeSeries::new((0..10_000).map(|i| i as f64).collect(), vec![vec![0.0]; 10_000]).unwrap();
        assert_eq!(add_noise(&base, 0.0, 0.0, 1).unwrap().values, base.values);
        let a = add_noise(&base, 0.0, 0.001, 7).unwrap();
        let b = add_noise(&base, 0.0, 0.001, 7).unwrap();
        assert_eq!(a, b);
        let v = a.component(0);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        assert!((0.0008..=0.0012).contains(&var), "{var}");
        assert!(add_noise(&base, 0.0, -1.0, 0).is_err());
    }

    #[test]
    fn fixed_point_of_the_true_coefficients() {
        let p = SmdProblem::reference(150);
        let sys = assemble_smd(&p).unwrap();
        let (loss, grad) = teacher_forced_loss(&sys, &observed(&p)).unwrap();
        assert!(loss < 1e-10, "{loss}");
        assert!(grad.iter().all(|g| *g == 0.0), "{grad:?}");
    }

    #[test]
    fn analytic_gradients_pass_finite_difference_checks() {
        let p = SmdProblem::reference(60);
        let obs = add_noise(&observed(&p), 0.0, 1e-4, 3).unwrap();
        let template = assemble_smd(&p).unwrap();
        for mode in [IdentifyMode::TeacherForced, IdentifyMode::Rollout] {
            let mut params = ParamStore::new(0);
            let id = params.add("theta", vec![0.8, 12.0, 90.0], true).unwrap();
            let loss_at = |ps: &ParamStore| {
                let sys = template.with_coeffs(ps.value(id)).unwrap();
                mode.loss(&sys, &obs).unwrap()
            };
            let (_, g) = loss_at(&params);
            params.set_grad(id, &g).unwrap();
            let err = finite_diff_gradcheck(|ps| loss_at(ps).0, &params, 1e-6).unwrap();
            assert!(err < 1e-4, "{mode:?}: {err}");
        }
        let b = bar(BarSupport::ClampedFree, 5, 20);
        let bsys = assemble_bar(&b).unwrap();
        let bobs = TimeSeries::from_slices(bsys.times(), &bsys.solve_direct().unwrap()).unwrap();
        let bobs = add_noise(&bobs, 0.0, 1e-8, 4).unwrap();
        for mode in [IdentifyMode::TeacherForced, IdentifyMode::Rollout] {
            let mut params = ParamStore::new(0);
            let id = params.add("theta", vec![2.3, 0.7], true).unwrap();
            let loss_at = |ps: &ParamStore| mode.loss(&bsys.with_coeffs(ps.value(id)).unwrap(), &bobs).unwrap();
            let (_, g) = loss_at(&params);
            params.set_grad(id, &g).unwrap();
            let err = finite_diff_gradcheck(|ps| loss_at(ps).0, &params, 1e-7).unwrap();
            assert!(err < 1e-4, "bar {mode:?}: {err}");
        }
    }

    #[test]
    fn free_decay_has_the_expected_damping_ratio() {
        let s = predict_new_conditions([1.0, 10.0, 100.0], (1.0, 0.0), Forcing::none(), 3.0, 3000).unwrap();
        let zeta = damping_ratio_from_response(&s.component(0)).unwrap();
        assert!((zeta - 0.5).abs() < 0.01 * 0.5, "{zeta}");
    }

    #[test]
    fn clean_data_identifies_the_oscillator() {
        let p = SmdProblem::reference(150);
        let truth = assemble_smd(&p).unwrap();
        let template = assemble_smd(&p.with_coeffs([0.5, 5.0, 50.0])).unwrap();
        let cfg = IdentifyConfig {
            trainable: vec!["m".into(), "c".into(), "k".into()],
            init: vec![0.5, 5.0, 50.0],
            train: crate::optim::TrainConfig::new(20_000, 0.01).with_decay(1e-4),
            mode: IdentifyMode::TeacherForced,
            seeds: vec![0, 1, 2],
            init_jitter: 0.3,
        };
        let run = identify(&template, &observed(&p), &cfg).unwrap();
        for (name, err) in run.relative_errors(&truth) {
            assert!(err < 0.01, "{name}: {err}");
        }
        assert_eq!(run.history.params.len(), run.history.epochs());
        let first = identify_once(&template, &observed(&p), &cfg, 0, 0.0).unwrap();
        for (a, b) in first.history.params[0].iter().zip([0.5, 5.0, 50.0]) {
            assert!((a - b).abs() < 1e-12 * b);
        }
    }

    #[test]
    fn unknown_trainable_name_is_rejected() {
        let p = SmdProblem::reference(20);
        let cfg = IdentifyConfig {
            trainable: vec!["q".into()],
            init: vec![],
            train: crate::optim::TrainConfig::new(10, 0.01),
            mode: IdentifyMode::TeacherForced,
            seeds: vec![0],
            init_jitter: 0.0,
        };
        assert!(identify(&assemble_smd(&p).unwrap(), &observed(&p), &cfg).is_err());
    }
}
