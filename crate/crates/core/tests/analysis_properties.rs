mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use privform_core::analysis::{
    consensus_projector, covariance_recursion, default_burn_in, error_bound, m_matrix, projected_noise, sigma_z,
    steady_state,
};
use privform_core::graph::spectral_summary;
use privform_core::lyapunov::{lyapunov_residual, solve_fixed_point, solve_kronecker};
use privform_core::privacy::NoiseModel;
use privform_core::scenario::NetworkScenario;

use common::{is_psd, partial_sum, random_scenario};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(1000))]

    #[test]
    fn exact_error_never_exceeds_bound(seed in any::<u64>()) {
        let s = random_scenario(seed);
        let r = steady_state(&s).unwrap();
        let b = error_bound(&s).unwrap();
        prop_assert!(r.e_ss_exact <= b.bound * (1.0 + 1e-12) + 1e-12, "{} > {}", r.e_ss_exact, b.bound);
        prop_assert!((r.e_ss_bound - b.bound).abs() <= 1e-12 * b.bound.max(1.0));
    }

    #[test]
    fn steady_state_covariance_is_psd_and_orthogonal_to_ones(seed in any::<u64>()) {
        let s = random_scenario(seed);
        let r = steady_state(&s).unwrap();
        let sigma = r.sigma_inf_matrix();
        let q = DMatrix::from_fn(sigma.nrows(), sigma.ncols(), |i, j| r.q[i][j]);
        let scale = q.norm().max(1.0);
        prop_assert!((&sigma - sigma.transpose()).amax() <= 1e-10 * scale);
        prop_assert!(is_psd(&sigma, 1e-10 * scale));
        let ones = nalgebra::DVector::from_element(sigma.nrows(), 1.0);
        prop_assert!((&sigma * ones).amax() <= 1e-9 * scale);
        prop_assert!(r.lyapunov_residual <= 1e-10 * scale);
        prop_assert!((r.e_ss_exact - s.dimension() as f64 / s.n_agents() as f64 * sigma.trace()).abs() <= 1e-12 * scale);
    }
}

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn raising_one_privacy_sigma_never_lowers_error(seed in any::<u64>(), agent in 0usize..10, bump in 0.01f64..2.0) {
        let s = random_scenario(seed);
        let n = s.n_agents();
        let agent = agent % n;
        let mut sigmas = s.noise().privacy_sigmas().to_vec();
        sigmas[agent] += bump;
        let noise = NoiseModel::explicit(sigmas, s.noise().process_sigmas().to_vec()).unwrap();
        let louder = NetworkScenario::consensus(s.graph().clone(), s.dimension(), s.gamma(), noise).unwrap();
        let before = steady_state(&s).unwrap().e_ss_exact;
        let after = steady_state(&louder).unwrap().e_ss_exact;
        prop_assert!(after >= before - 1e-12 * before.max(1.0), "{after} < {before}");
    }

    #[test]
    fn sigma_z_exceeds_process_noise_by_a_psd_term(seed in any::<u64>()) {
        let s = random_scenario(seed);
        let sz = sigma_z(s.graph(), s.gamma(), s.noise());
        let sn = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            s.n_agents(),
            s.noise().process_sigmas().iter().map(|x| x * x),
        ));
        prop_assert!(is_psd(&(sz - sn), 1e-12));
    }

    #[test]
    fn kronecker_and_fixed_point_agree(seed in any::<u64>()) {
        let s = random_scenario(seed);
        let m = m_matrix(s.graph(), s.gamma());
        let q = projected_noise(&sigma_z(s.graph(), s.gamma(), s.noise()));
        let direct = solve_kronecker(&m, &q).unwrap();
        let iterated = solve_fixed_point(&m, &q, 1e-14, 10_000_000).unwrap();
        prop_assert!((&direct - &iterated).norm() <= 1e-9 * q.norm().max(1.0));
        prop_assert!(lyapunov_residual(&m, &q, &direct) <= 1e-10 * q.norm().max(1.0));
    }

    #[test]
    fn recursion_converges_within_ten_burn_ins(seed in any::<u64>()) {
        let s = random_scenario(seed);
        let m = m_matrix(s.graph(), s.gamma());
        let q = projected_noise(&sigma_z(s.graph(), s.gamma(), s.noise()));
        let steps = 10 * default_burn_in(&s).unwrap();
        let mut sigma = DMatrix::zeros(q.nrows(), q.ncols());
        for _ in 0..steps {
            sigma = covariance_recursion(&sigma, &m, &sigma_z(s.graph(), s.gamma(), s.noise()));
        }
        let exact = steady_state(&s).unwrap().sigma_inf_matrix();
        prop_assert!((sigma - exact).norm() <= 1e-8);
    }

    #[test]
    fn fiedler_mode_sets_the_contraction_rate(seed in any::<u64>()) {
        let s = random_scenario(seed);
        let spectrum = spectral_summary(s.graph()).unwrap();
        let gamma = s.gamma();
        let low = 1.0 - gamma * spectrum.lambda2;
        let high = 1.0 - gamma * spectrum.lambda_max;
        let m = m_matrix(s.graph(), gamma);
        let smax = m.singular_values().max();
        if low >= high.abs() {
            prop_assert!((smax - low).abs() <= 1e-9, "{smax} vs {low}");
        } else {
            prop_assert!((smax - high.abs()).abs() <= 1e-9);
        }
        prop_assert!(smax < 1.0);
    }
}

#[test]
fn recursion_matches_partial_sums() {
    for seed in 0..20 {
        let s = random_scenario(seed);
        let m = m_matrix(s.graph(), s.gamma());
        let sz = sigma_z(s.graph(), s.gamma(), s.noise());
        let q = projected_noise(&sz);
        let mut sigma = DMatrix::zeros(q.nrows(), q.ncols());
        for k in 1..=10 {
            sigma = covariance_recursion(&sigma, &m, &sz);
            let oracle = partial_sum(&m, &q, k);
            assert!((&sigma - &oracle).amax() <= 1e-12 * q.norm().max(1.0), "seed {seed}, k {k}");
        }
    }
}

#[test]
fn projected_noise_uses_the_consensus_projector() {
    let s = random_scenario(3);
    let sz = sigma_z(s.graph(), s.gamma(), s.noise());
    let p = consensus_projector(s.n_agents());
    assert!((projected_noise(&sz) - &p * &sz * &p).amax() < 1e-14);
}

#[test]
fn single_edge_bound_is_tight() {
    for (w, gamma, sigma) in [(1.0, 0.25, 1.0), (2.0, 0.3, 0.7), (0.5, 1.5, 2.5)] {
        let s = common::single_edge_scenario(w, gamma, sigma);
        let r = steady_state(&s).unwrap();
        assert!((r.e_ss_exact - r.e_ss_bound).abs() <= 1e-12 * r.e_ss_exact.max(1.0), "{w} {gamma} {sigma}");
    }
    let r = steady_state(&common::single_edge_scenario(1.0, 0.25, 1.0)).unwrap();
    assert!((r.e_ss_exact - 1.0 / 24.0).abs() < 1e-12);
}
