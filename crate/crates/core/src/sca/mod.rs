//! Self-consistent clustering analysis of a 1-D Lippmann-Schwinger problem
//! and a graph kernel network trained on its cluster centroids.

mod dataset;
mod domain;
mod gkn;
mod kmeans;
mod lippmann;
mod study;
mod train;

pub use dataset::{build_dataset, cluster_seed, sca_sample, GraphSample};
pub use domain::{elastic_precompute, MicroDomain};
pub use gkn::{sample_nmse, Activation, ForwardTrace, GknConfig, Graph, GraphKernelNet, Neighborhood, PreparedSet};
pub use kmeans::{cluster_domain, kmeans_cluster, kmeans_restarts, ClusterPartition, KMeans, KMEANS_RESTARTS};
pub use lippmann::{
    analytic_cluster_strain, apply_green, interaction_tensor, relative_l2, sca_solve, InteractionTensor, ScaMethod,
    ScaSolution,
};
pub use study::{
    extrapolate, oracle_table, oracle_tables, run_sca_study, train_study_network, Extrapolation, OracleTable, ScaStudy,
    ScaStudyConfig, TrainedGkn,
};
pub use train::{gkn_train, split_dataset, EpochRecord, GknTrainConfig, TrainReport};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::finite_diff_gradcheck;
    use proptest::prelude::*;

    fn reference() -> MicroDomain {
        MicroDomain::reference(10.0, 1000).unwrap()
    }

    /// Optimal 1-D k-means objective by dynamic programming over sorted values.
    fn dp_kmeans(values: &[f64], k: usize) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mut s1 = vec![0.0; n + 1];
        let mut s2 = vec![0.0; n + 1];
        for i in 0..n {
            s1[i + 1] = s1[i] + v[i];
            s2[i + 1] = s2[i] + v[i] * v[i];
        }
        let cost = |i: usize, j: usize| {
            let m = (j - i) as f64;
            let s = s1[j] - s1[i];
            (s2[j] - s2[i]) - s * s / m
        };
        let mut dp: Vec<f64> = (0..=n).map(|j| if j == 0 { 0.0 } else { cost(0, j) }).collect();
        for m in 2..=k {
            let mut next = vec![f64::INFINITY; n + 1];
            for j in m..=n {
                for i in (m - 1)..j {
                    next[j] = next[j].min(dp[i] + cost(i, j));
                }
            }
            dp = next;
        }
        dp[n]
    }

    fn naive_dft_green(f: &[f64], c0: f64) -> Vec<f64> {
        let n = f.len();
        let tau = std::f64::consts::TAU;
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        for q in 1..n {
            for (x, v) in f.iter().enumerate() {
                let ang = -tau * (q * x) as f64 / n as f64;
                re[q] += v * ang.cos();
                im[q] += v * ang.sin();
            }
        }
        (0..n)
            .map(|x| {
                (1..n)
                    .map(|q| {
                        let ang = tau * (q * x) as f64 / n as f64;
                        re[q] * ang.cos() - im[q] * ang.sin()
                    })
                    .sum::<f64>()
                    / (n as f64 * c0)
            })
            .collect()
    }

    fn solve(dom: &MicroDomain, k: usize, strain: f64) -> (ClusterPartition, ScaSolution) {
        let part = cluster_domain(dom, k, cluster_seed(0, k), 500).unwrap();
        let t = interaction_tensor(&part, dom.mean_stiffness()).unwrap();
        let sol = sca_solve(&part, &t, strain, ScaMethod::Direct).unwrap();
        (part, sol)
    }

    fn toy_sample() -> GraphSample {
        GraphSample {
            k: 5,
            strain: 0.3,
            x: vec![0.7, 2.1, 3.0, 5.5, 8.9],
            stiffness: vec![0.6, 0.2, 0.1, 0.03, 0.012],
            fractions: vec![0.3, 0.25, 0.2, 0.15, 0.1],
            target: vec![0.01, 0.04, 0.08, 0.3, 0.7],
        }
    }

    #[test]
    fn homogeneous_concentration_is_one() {
        let dom = MicroDomain::from_fn(10.0, 50, |_| 3.0).unwrap();
        assert!(elastic_precompute(&dom).iter().all(|a| (a - 1.0).abs() < 1e-15));
    }

    #[test]
    fn reference_concentration() {
        let a = elastic_precompute(&reference());
        assert!((a[0] - 1.0 / (1.0 + 100.0 / 3.0)).abs() < 5e-5, "A(0) = {}", a[0]);
        assert!((a.iter().sum::<f64>() / a.len() as f64 - 1.0).abs() < 1e-10);
        assert!(a.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn invalid_domains_rejected() {
        assert!(MicroDomain::from_fn(10.0, 10, |x| 1.0 - x).is_err());
        assert!(MicroDomain::reference(0.0, 10).is_err());
        assert!(MicroDomain::reference(1.0, 1).is_err());
    }

    #[test]
    fn kmeans_one_cluster_per_point() {
        let f: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let km = kmeans_cluster(&f, 40, 3, 100).unwrap();
        assert_eq!(km.final_objective(), 0.0);
        let mut l = km.labels.clone();
        l.sort_unstable();
        assert_eq!(l, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn kmeans_two_valued_bipartition() {
        let f: Vec<f64> = (0..30).map(|i| if i % 3 == 0 { 5.0 } else { -1.0 }).collect();
        let km = kmeans_cluster(&f, 2, 9, 100).unwrap();
        for (l, v) in km.labels.iter().zip(&f) {
            assert_eq!(*l, usize::from(*v > 0.0));
        }
        assert_eq!(km.final_objective(), 0.0);
        assert!(kmeans_cluster(&f, 3, 0, 10).is_err());
        assert!(kmeans_cluster(&f, 0, 0, 10).is_err());
    }

    #[test]
    fn kmeans_matches_dynamic_programming_optimum() {
        let dom = MicroDomain::reference(10.0, 100).unwrap();
        let a = elastic_precompute(&dom);
        for k in 2..=8 {
            let km = kmeans_restarts(&a, k, cluster_seed(0, k), 500, KMEANS_RESTARTS).unwrap();
            let opt = dp_kmeans(&a, k);
            // Lloyd is a local method; restarts bring it within 2% of the global optimum.
            assert!(km.final_objective() >= opt * (1.0 - 1e-12));
            assert!(km.final_objective() <= opt * 1.02, "k = {k}: {} vs {opt}", km.final_objective());
            // Monotone feature: clusters are contiguous in x.
            assert!(km.labels.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn clusters_are_contiguous_and_narrow_where_the_feature_is_steep() {
        let part = cluster_domain(&reference(), 33, cluster_seed(0, 33), 500).unwrap();
        assert!(part.labels.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
        let counts = part.counts();
        assert!(counts.iter().all(|&c| c > 0));
        assert!(counts[0] > 3 * counts[32], "{counts:?}");
        assert!(part.kmeans.objective.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert!((part.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn green_operator_matches_naive_dft() {
        let f: Vec<f64> = (0..24).map(|i| (i as f64 * 0.9).cos() + 0.1 * i as f64).collect();
        let fast = apply_green(std::slice::from_ref(&f), 0.7).unwrap();
        let slow = naive_dft_green(&f, 0.7);
        for (a, b) in fast[0].iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        for (a, v) in fast[0].iter().zip(&f) {
            assert!((a - (v - mean) / 0.7).abs() < 1e-12);
        }
        assert!(apply_green(&[f], 0.0).is_err());
    }

    #[test]
    fn interaction_tensor_two_point_grid() {
        let dom = MicroDomain::new(1.0, vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
        let km = kmeans_cluster(&[0.0, 1.0], 2, 0, 10).unwrap();
        let part = ClusterPartition::from_labels(&dom, vec![0, 1], vec![0.0, 1.0], km).unwrap();
        let c0 = 1.5;
        let t = interaction_tensor(&part, c0).unwrap();
        let g = naive_dft_green(&[1.0, 0.0], c0);
        assert!((t.d[(0, 0)] - g[0]).abs() < 1e-15 && (t.d[(1, 0)] - g[1]).abs() < 1e-15);
        assert!((t.d[(0, 0)] - 0.5 / c0).abs() < 1e-15);
        assert!((t.d[(0, 0)] + t.d[(0, 1)]).abs() < 1e-15);
        assert!((t.d[(1, 1)] + t.d[(1, 0)]).abs() < 1e-15);
    }

    #[test]
    fn interaction_tensor_properties() {
        let dom = reference();
        let c0 = dom.mean_stiffness();
        let one = cluster_domain(&dom, 1, 0, 10).unwrap();
        assert!(interaction_tensor(&one, c0).unwrap().d.amax() < 1e-12);
        let part = cluster_domain(&dom, 12, 5, 500).unwrap();
        let t = interaction_tensor(&part, c0).unwrap();
        assert!(t.constant_defect(1.0) < 1e-10);
        assert!(t.constant_defect(-3.5) < 1e-10);
        for i in 0..12 {
            for j in 0..12 {
                let expect = (if i == j { 1.0 } else { 0.0 } - part.fractions[j]) / c0;
                assert!((t.d[(i, j)] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn homogeneous_material_gives_uniform_strain() {
        let dom = MicroDomain::from_fn(10.0, 200, |_| 2.0).unwrap();
        // Constant feature: only one distinct value, so k = 1.
        let part = cluster_domain(&dom, 1, 0, 10).unwrap();
        let t = interaction_tensor(&part, 2.0).unwrap();
        let sol = sca_solve(&part, &t, 0.3, ScaMethod::Direct).unwrap();
        assert!((sol.strains[0] - 0.3).abs() < 1e-14);
        let km = kmeans_cluster(&dom.coords, 4, 0, 100).unwrap();
        let part = ClusterPartition::from_labels(&dom, km.labels.clone(), vec![1.0; 200], km).unwrap();
        let t = interaction_tensor(&part, 1.3).unwrap();
        for method in [ScaMethod::Direct, ScaMethod::FixedPoint { max_iter: 200 }] {
            let sol = sca_solve(&part, &t, 0.3, method).unwrap();
            assert!(sol.strains.iter().all(|e| (e - 0.3).abs() < 1e-12));
        }
    }

    #[test]
    fn sca_matches_analytic_oracle_at_33_clusters() {
        let dom = reference();
        let (part, sol) = solve(&dom, 33, 0.2);
        let oracle = analytic_cluster_strain(&dom, &part, 0.2);
        assert!(relative_l2(&sol.strains, &oracle) < 0.01);
        assert!((part.volume_mean(&sol.strains) - 0.2).abs() < 1e-10);
        assert!(sol.residual < 1e-10);
        // Clustered constant stress: C^I Δε^I is the same in every cluster.
        let s0 = part.stiffness[0] * sol.strains[0];
        assert!(part.stiffness.iter().zip(&sol.strains).all(|(c, e)| (c * e - s0).abs() < 1e-12 * s0.abs().max(1.0)));
    }

    #[test]
    fn sca_refines_monotonically() {
        let dom = reference();
        let disc = |k| {
            let (p, s) = solve(&dom, k, 0.2);
            relative_l2(&s.strains, &analytic_cluster_strain(&dom, &p, 0.2))
        };
        let (d2, d8, d128) = (disc(2), disc(8), disc(128));
        assert!(d128 < d8 && d8 < d2, "{d2} {d8} {d128}");
    }

    #[test]
    fn sca_is_linear_in_applied_strain() {
        let dom = reference();
        let part = cluster_domain(&dom, 16, 1, 500).unwrap();
        let t = interaction_tensor(&part, dom.mean_stiffness()).unwrap();
        let a = sca_solve(&part, &t, 0.2, ScaMethod::Direct).unwrap();
        let b = sca_solve(&part, &t, 0.4, ScaMethod::Direct).unwrap();
        for (x, y) in a.strains.iter().zip(&b.strains) {
            assert!((2.0 * x - y).abs() < 1e-10 * y.abs().max(1.0));
        }
    }

    #[test]
    fn fixed_point_falls_back_at_high_contrast() {
        let dom = reference();
        let part = cluster_domain(&dom, 8, 0, 500).unwrap();
        let t = interaction_tensor(&part, dom.mean_stiffness()).unwrap();
        let fp = sca_solve(&part, &t, 0.2, ScaMethod::FixedPoint { max_iter: 100 }).unwrap();
        let direct = sca_solve(&part, &t, 0.2, ScaMethod::Direct).unwrap();
        assert!(fp.fell_back);
        assert_eq!(fp.strains, direct.strains);

        let mild = MicroDomain::from_fn(10.0, 400, |x| 1.0 + 0.05 * x.sin()).unwrap();
        let part = cluster_domain(&mild, 6, 0, 500).unwrap();
        let t = interaction_tensor(&part, mild.mean_stiffness()).unwrap();
        let fp = sca_solve(&part, &t, 0.2, ScaMethod::FixedPoint { max_iter: 500 }).unwrap();
        let direct = sca_solve(&part, &t, 0.2, ScaMethod::Direct).unwrap();
        assert!(!fp.fell_back && fp.iterations > 1);
        assert!(relative_l2(&fp.strains, &direct.strains) < 1e-10);
    }

    #[test]
    fn dataset_contract() {
        let dom = reference();
        let data = build_dataset(&dom, &[2, 5, 9], &[0.05, 0.1, 0.3], 4, 500).unwrap();
        assert_eq!(data.len(), 9);
        for s in &data {
            assert!((s.volume_mean(&s.target) - s.strain).abs() < 1e-10);
            assert_eq!(s.n_nodes(), s.k);
        }
        for k in 0..3 {
            let (a, b) = (&data[3 * k], &data[3 * k + 1]);
            assert_eq!(a.x, b.x);
            for (x, y) in a.target.iter().zip(&b.target) {
                assert!((y / x - 2.0).abs() < 1e-8);
            }
        }
        assert_eq!(data, build_dataset(&dom, &[2, 5, 9], &[0.05, 0.1, 0.3], 4, 500).unwrap());
        assert!(build_dataset(&dom, &[], &[0.1], 0, 10).is_err());
    }

    #[test]
    fn neighborhoods_include_self_and_fall_back() {
        let net = GraphKernelNet::new(GknConfig::default(), 0).unwrap();
        let n = net.neighborhoods(&[1.0, 6.0]);
        assert_eq!(n, vec![vec![0, 1], vec![0, 1]]);
        let x = [0.0, 0.5, 1.0, 4.0, 9.0, 9.5];
        let n = net.neighborhoods(&x);
        assert_eq!(n[0], vec![0, 1, 2]);
        assert_eq!(n[3], vec![1, 2, 3, 4, 5]);
        assert!(n.iter().enumerate().all(|(i, v)| v.contains(&i)));
        let cfg = GknConfig { neighborhood: Neighborhood::NearestPerSide, ..GknConfig::default() };
        let n = GraphKernelNet::new(cfg, 0).unwrap().neighborhoods(&x);
        assert_eq!(n[0], vec![0, 1, 2]);
        assert_eq!(n[2], vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn degenerate_network_passes_the_lift_through() {
        let cfg = GknConfig { activation: Activation::Identity, width: 4, ..GknConfig::default() };
        let mut net = GraphKernelNet::new(cfg, 2).unwrap();
        let p = &mut net.params;
        for name in ["kernel_w2", "kernel_b2"] {
            let id = p.id(name).unwrap();
            p.value_mut(id).iter_mut().for_each(|v| *v = 0.0);
        }
        let w = p.id("w").unwrap();
        for (i, v) in p.value_mut(w).iter_mut().enumerate() {
            *v = if i % 5 == 0 { 1.0 } else { 0.0 };
        }
        let s = toy_sample();
        let tr = net.trace(&s).unwrap();
        let lw = net.params.value(net.params.id("lift_w").unwrap()).to_vec();
        let lb = net.params.value(net.params.id("lift_b").unwrap()).to_vec();
        let pw = net.params.value(net.params.id("proj_w").unwrap()).to_vec();
        let pb = net.params.value(net.params.id("proj_b").unwrap())[0];
        for i in 0..5 {
            let a = [s.x[i] / 10.0, s.stiffness[i], s.strain];
            let lifted: Vec<f64> = (0..4).map(|r| lb[r] + (0..3).map(|c| lw[r * 3 + c] * a[c]).sum::<f64>()).collect();
            let expect = pb + lifted.iter().zip(&pw).map(|(x, y)| x * y).sum::<f64>();
            assert!((tr.output[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_permutation_equivariant() {
        let net = GraphKernelNet::new(GknConfig::default(), 1).unwrap();
        let s = toy_sample();
        let y = net.forward(&s).unwrap();
        let perm = [3, 0, 4, 2, 1];
        let yp = net.forward(&s.permuted(&perm)).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert!((yp[i] - y[p]).abs() < 1e-12);
        }
        assert_eq!(y, net.forward(&s).unwrap());
    }

    #[test]
    fn constant_kernel_aggregates_identically_over_global_neighborhoods() {
        let cfg = GknConfig { radius: 100.0, ..GknConfig::default() };
        let mut net = GraphKernelNet::new(cfg, 4).unwrap();
        let id = net.params.id("kernel_w2").unwrap();
        net.params.value_mut(id).iter_mut().for_each(|v| *v = 0.0);
        let id = net.params.id("kernel_b2").unwrap();
        net.params.value_mut(id).iter_mut().enumerate().for_each(|(i, v)| *v = (i as f64 * 0.13).sin());
        let s = toy_sample();
        let g = net.graph(&s.x, &s.stiffness).unwrap();
        let v: Vec<f64> = (0..5 * 16).map(|i| (i as f64 * 0.71).cos()).collect();
        let agg = net.aggregate(&g, &v);
        for i in 1..5 {
            for a in 0..16 {
                assert!((agg[i * 16 + a] - agg[a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_pass_finite_difference_check() {
        for activation in [Activation::Softplus, Activation::Identity] {
            let cfg = GknConfig { width: 6, kernel_hidden: 5, layers: 3, activation, ..GknConfig::default() };
            let mut net = GraphKernelNet::new(cfg, 7).unwrap();
            let mut s2 = toy_sample();
            s2.strain = 0.1;
            let set = net.prepare(&[toy_sample(), s2]).unwrap();
            net.nmse(&set, true).unwrap();
            let probe = net.clone();
            let err = finite_diff_gradcheck(
                |p| {
                    let mut n = probe.clone();
                    n.params = p.clone();
                    n.nmse(&set, false).unwrap()
                },
                &net.params,
                1e-6,
            )
            .unwrap();
            assert!(err < 1e-4, "{activation:?}: {err}");
        }
    }

    #[test]
    fn memorizes_a_single_sample() {
        let data = build_dataset(&reference(), &[8], &[0.3], 0, 500).unwrap();
        let mut net = GraphKernelNet::new(GknConfig::default(), 0).unwrap();
        let cfg = GknTrainConfig { epochs: 5000, lr: 3e-3, lr_final: 3e-4, divergence_factor: 100.0 };
        let rep = gkn_train(&mut net, &data, &[], &cfg).unwrap();
        assert!(!rep.lr_halved);
        assert!(rep.final_train() < 1e-4, "{}", rep.final_train());
        assert!(rep.final_test().is_nan());
        assert!(sample_nmse(&net.forward(&data[0]).unwrap(), &data[0].target) < 1e-4);
    }

    #[test]
    fn divergence_halves_the_learning_rate_then_aborts() {
        let mut net = GraphKernelNet::new(GknConfig { width: 4, kernel_hidden: 4, ..GknConfig::default() }, 0).unwrap();
        let cfg = GknTrainConfig { epochs: 200, lr: 50.0, lr_final: 50.0, divergence_factor: 2.0 };
        let rep = gkn_train(&mut net, &[toy_sample()], &[], &cfg).unwrap();
        assert!(rep.lr_halved && rep.aborted);
        assert!(rep.history.iter().all(|r| r.train_nmse.is_finite()));
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let data = build_dataset(&reference(), &[2, 3], &[0.1, 0.2, 0.3, 0.4, 0.5], 0, 100).unwrap();
        let (tr, te) = split_dataset(&data, 0.2, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        assert!(te.iter().all(|t| !tr.contains(t)));
        assert_eq!(split_dataset(&data, 0.2, 3).unwrap(), (tr, te));
        assert!(split_dataset(&data, 1.0, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn kmeans_invariants(f in proptest::collection::vec(-5.0f64..5.0, 10..60), k in 1usize..6, seed in 0u64..100) {
            let km = kmeans_cluster(&f, k, seed, 200).unwrap();
            prop_assert!(km.labels.iter().all(|&l| l < k));
            let mut used = vec![false; k];
            km.labels.iter().for_each(|&l| used[l] = true);
            prop_assert!(used.iter().all(|u| *u));
            prop_assert!(km.objective.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12));
            prop_assert!(km.centers.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn sca_mean_strain_and_constant_annihilation(
            amp in 0.0f64..0.9, freq in 0.1f64..2.0, k in 1usize..10, strain in -1.0f64..1.0,
        ) {
            let dom = MicroDomain::from_fn(10.0, 120, |x| 1.0 + amp * (freq * x).sin()).unwrap();
            let part = cluster_domain(&dom, k, 0, 200).unwrap();
            let t = interaction_tensor(&part, dom.mean_stiffness()).unwrap();
            prop_assert!(t.constant_defect(1.0) < 1e-10);
            let sol = sca_solve(&part, &t, strain, ScaMethod::Direct).unwrap();
            prop_assert!((part.volume_mean(&sol.strains) - strain).abs() < 1e-10);
        }

        #[test]
        fn equivariance_for_random_permutations(seed in 0u64..50) {
            use rand::{seq::SliceRandom, SeedableRng};
            let net = GraphKernelNet::new(GknConfig { width: 8, kernel_hidden: 8, ..GknConfig::default() }, seed).unwrap();
            let s = toy_sample();
            let mut perm: Vec<usize> = (0..5).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let y = net.forward(&s).unwrap();
            let yp = net.forward(&s.permuted(&perm)).unwrap();
            for (i, &p) in perm.iter().enumerate() {
                prop_assert!((yp[i] - y[p]).abs() < 1e-12);
            }
        }
    }
}
