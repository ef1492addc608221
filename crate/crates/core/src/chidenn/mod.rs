//! Convolution-enhanced finite elements (C-HiDeNN) for the Poisson equation.

mod lagrange;
mod mesh;
mod poisson;
mod rpim;
mod space;
mod study;
mod topology;

pub use lagrange::LagrangeSpace;
pub use mesh::{Grid, Mesh};
pub use poisson::{
    assemble_and_solve, assemble_dense_stiffness, element_rule, error_norms, PoissonProblem, PoissonSolution,
    ScalarField, VectorField,
};
pub use rpim::{monomial_exponents, rpim_patch_function, ConvPatchFunction, RpimCache, MAX_CONDITION, RIDGE_CONDITION};
pub use space::{combine_interpolants, ChidennSpace, Discretization, ElementBasis};
pub use study::{
    check_properties, convergence_study, dofs_for_error, fitted_rate, quadrature_energy_change, s0_fem_agreement,
    ConvergenceChecks, ConvergenceConfig, ConvergenceRow, ConvergenceTable, Method, PropertyReport,
};
pub use topology::{build_patch_topology, PatchTopology};

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_square(n: usize) -> Mesh {
        Mesh::rectangle([0.0, 0.0], [1.0, 1.0], n, n).unwrap()
    }

    #[test]
    fn s_less_than_p_is_rejected() {
        let err = ChidennSpace::new(unit_square(4), 1, 30.0, 2).unwrap_err();
        assert!(matches!(err, crate::Error::Contract(_)));
        assert!(ChidennSpace::new(unit_square(4), 0, 30.0, 3).is_ok());
    }

    #[test]
    fn s_zero_reduces_to_bilinear_shape_functions() {
        let space = ChidennSpace::new(unit_square(3), 0, 30.0, 1).unwrap();
        let b = combine_interpolants(&space, 4, 0.2, -0.6).unwrap();
        let (n, _, _) = space.mesh.shape(0.2, -0.6);
        let conn = &space.mesh.elements()[4];
        for (k, &d) in b.dofs.iter().enumerate() {
            let loc = conn.iter().position(|&c| c == d).unwrap();
            assert!((b.n[k] - n[loc]).abs() < 1e-15);
        }
    }

    #[test]
    fn composed_basis_is_a_partition_of_unity_with_zero_gradient_sum() {
        for p in 1..=3 {
            let space = ChidennSpace::new(unit_square(6), 3, 30.0, p).unwrap();
            for e in [0, 7, 20, 35] {
                for &(xi, eta, _) in &element_rule(2, 3) {
                    let b = combine_interpolants(&space, e, xi, eta).unwrap();
                    assert!((b.n.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                    assert!(b.dndx.iter().sum::<f64>().abs() < 1e-8);
                    assert!(b.dndy.iter().sum::<f64>().abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn quadratic_is_reproduced_through_the_composition() {
        let space = ChidennSpace::new(Mesh::interval(0.0, 2.0, 8).unwrap(), 3, 30.0, 2).unwrap();
        let u: Vec<f64> = space.mesh.nodes().iter().map(|x| x[0] * x[0]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for e in 0..8 {
            for _ in 0..5 {
                let xi = rng.random_range(-1.0..1.0);
                let b = combine_interpolants(&space, e, xi, 0.0).unwrap();
                let (v, g) = b.interpolate(&u);
                assert!((v - b.x[0] * b.x[0]).abs() < 1e-8);
                assert!((g[0] - 2.0 * b.x[0]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn nodal_kronecker_delta() {
        let space = ChidennSpace::new(unit_square(5), 3, 30.0, 2).unwrap();
        let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
        for e in [0, 12, 24] {
            let conn = space.mesh.elements()[e].clone();
            for (loc, &(xi, eta)) in corners.iter().enumerate() {
                let b = combine_interpolants(&space, e, xi, eta).unwrap();
                for (k, &d) in b.dofs.iter().enumerate() {
                    let target = if d == conn[loc] { 1.0 } else { 0.0 };
                    assert!((b.n[k] - target).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn zero_load_gives_zero_solution() {
        let space = ChidennSpace::new(unit_square(4), 2, 30.0, 2).unwrap();
        let sol = assemble_and_solve(&space, &PoissonProblem::new(|_| 0.0), 4).unwrap();
        assert!(sol.u.iter().all(|v| *v == 0.0));
    }

    fn two_point_nodal_error(s: usize, p: usize) -> f64 {
        let space = ChidennSpace::new(Mesh::interval(0.0, 1.0, 10).unwrap(), s, 30.0, p).unwrap();
        let sol = assemble_and_solve(&space, &PoissonProblem::new(|_| 2.0), 6).unwrap();
        space.mesh.nodes().iter().zip(&sol.u).map(|(x, u)| (u - x[0] * (1.0 - x[0])).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn one_dimensional_two_point_problem_is_nodally_exact() {
        // Linear elements are nodally exact; quadratic reproduction contains x(1 − x).
        assert!(two_point_nodal_error(0, 1) < 1e-12);
        for s in [2, 3] {
            assert!(two_point_nodal_error(s, 2) < 1e-8, "s={s}");
        }
        // With p = 1 and s > 0 the space no longer contains the piecewise
        // linear Green's functions, so nodal values carry a small error.
        let e = two_point_nodal_error(3, 1);
        assert!(e > 1e-8 && e < 1e-3, "{e}");
    }

    #[test]
    fn stiffness_is_symmetric_and_positive_definite_after_constraints() {
        let space = ChidennSpace::new(unit_square(5), 3, 30.0, 2).unwrap();
        let k = assemble_dense_stiffness(&space, 6).unwrap();
        let scale = k.amax();
        assert!((&k - k.transpose()).amax() < 1e-10 * scale);
        let free: Vec<usize> = {
            let b = space.boundary_dofs();
            (0..space.n_dofs()).filter(|d| !b.contains(d)).collect()
        };
        let kf = k.select_rows(&free).select_columns(&free);
        assert!(kf.cholesky().is_some());
    }

    #[test]
    fn error_norm_identities() {
        let space = ChidennSpace::new(unit_square(4), 0, 30.0, 1).unwrap();
        let f = |x: [f64; 2]| x[0] + 2.0 * x[1];
        let g = |_: [f64; 2]| [1.0, 2.0];
        let u: Vec<f64> = space.mesh.nodes().iter().map(|&x| f(x)).collect();
        let (l2, h1) = error_norms(&space, &u, &f, &g, 4).unwrap();
        assert!(l2 < 1e-14 && h1 < 1e-14);
        let (l2, h1) = error_norms(&space, &vec![0.0; u.len()], &f, &g, 4).unwrap();
        assert!((l2 - 1.0).abs() < 1e-14 && (h1 - 1.0).abs() < 1e-14);
        let scaled: Vec<f64> = u.iter().map(|v| 1.1 * v).collect();
        let (l2, _) = error_norms(&space, &scaled, &f, &g, 4).unwrap();
        assert!((l2 - 0.1).abs() < 1e-12);
    }
}
