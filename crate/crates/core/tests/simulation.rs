mod common;

use nalgebra::DMatrix;

use privform_core::analysis::steady_state;
use privform_core::formation::{
    agent_streams, initial_state, monte_carlo, network_error, simulate, simulate_from, step_private, NetworkState,
    SimulationOptions,
};
use privform_core::graph::spectral_summary;
use privform_core::privacy::NoiseModel;
use privform_core::rng::StreamRng;
use privform_core::scenario::NetworkScenario;

#[test]
fn empirical_error_matches_exact_steady_state() {
    for n in [2, 3, 5, 10] {
        let s = common::simulation_fixture(n);
        let exact = steady_state(&s).unwrap().e_ss_exact;
        let options = SimulationOptions {
            horizon: 100_000,
            ..SimulationOptions::default()
        };
        let mc = monte_carlo(&s, &options, 4, 2024 + n as u64).unwrap();
        assert!(mc.horizon - mc.burn_in >= 90_000);
        let rel = (mc.mean_mse - exact).abs() / exact;
        assert!(rel <= 0.05, "N = {n}: empirical {} vs exact {exact}", mc.mean_mse);
    }
}

#[test]
fn one_step_mean_follows_noiseless_dynamics() {
    let s = common::simulation_fixture(5);
    let quiet = NetworkScenario::new(
        s.graph().clone(),
        s.formation().clone(),
        s.gamma(),
        NoiseModel::explicit(vec![0.0; 5], vec![0.0; 5]).unwrap(),
    )
    .unwrap();
    let start = initial_state(&s, 2.0, 1, 0).unwrap();
    let target = step_private(&start, &quiet, &mut agent_streams(1, 0, 5)).unwrap();

    let trials = 20_000;
    let mut mean = DMatrix::zeros(5, 1);
    for t in 0..trials {
        let next = step_private(&start, &s, &mut agent_streams(99, t, 5)).unwrap();
        mean += next.states / trials as f64;
    }
    // Standard deviation of agent i's next state.
    let gamma = s.gamma();
    let sig = s.noise().privacy_sigmas();
    let proc = s.noise().process_sigmas();
    for i in 0..5 {
        let var: f64 = (0..5).map(|j| (gamma * s.graph().weight(i, j) * sig[j]).powi(2)).sum::<f64>() + proc[i] * proc[i];
        let tol = 5.0 * var.sqrt() / (trials as f64).sqrt();
        assert!((mean[(i, 0)] - target.states[(i, 0)]).abs() <= tol, "agent {i}");
    }
}

#[test]
fn noiseless_error_contracts_at_the_fiedler_rate() {
    for n in [3, 5, 10] {
        let s = common::simulation_fixture(n);
        let quiet = NetworkScenario::new(
            s.graph().clone(),
            s.formation().clone(),
            s.gamma(),
            NoiseModel::explicit(vec![0.0; n], vec![0.0; n]).unwrap(),
        )
        .unwrap();
        let spectrum = spectral_summary(quiet.graph()).unwrap();
        let rate = 1.0 - quiet.gamma() * spectrum.lambda2;
        assert!(rate >= (1.0 - quiet.gamma() * spectrum.lambda_max).abs(), "fixture {n} leaves the Fiedler regime");
        let options = SimulationOptions {
            horizon: 3_000,
            burn_in: Some(2_000),
            initial_spread: 5.0,
            record_trajectory: true,
        };
        let r = simulate(&quiet, &options, 5).unwrap();
        for pair in r.error_trajectory.windows(2) {
            assert!(pair[1].norm() <= rate * pair[0].norm() + 1e-14);
        }
        assert!(r.empirical_mse_tail < 1e-12, "{}", r.empirical_mse_tail);
        let last = r.error_trajectory.last().unwrap();
        let ones = DMatrix::from_element(1, n, 1.0);
        assert!((ones * last).amax() < 1e-12);
    }
}

#[test]
fn relabeling_agents_permutes_the_trajectory() {
    let s = common::simulation_fixture(5);
    let perm = [3, 0, 4, 1, 2];
    let p = s.permuted(&perm).unwrap();
    let options = SimulationOptions {
        horizon: 300,
        burn_in: Some(10),
        initial_spread: 1.0,
        record_trajectory: true,
    };
    let start = initial_state(&s, 1.0, 8, 0).unwrap();
    let mut shifted = DMatrix::zeros(5, s.dimension());
    for i in 0..5 {
        shifted.set_row(perm[i], &start.shifted_states.row(i));
    }
    let start_p = NetworkState::from_shifted(0, shifted, p.formation()).unwrap();

    let streams = agent_streams(8, 0, 5);
    let mut streams_p: Vec<Option<StreamRng>> = vec![None; 5];
    for (i, rng) in streams.iter().enumerate() {
        streams_p[perm[i]] = Some(rng.clone());
    }
    let streams_p = streams_p.into_iter().map(Option::unwrap).collect();

    let a = simulate_from(&s, &options, start, streams, 8, 0).unwrap();
    let b = simulate_from(&p, &options, start_p, streams_p, 8, 0).unwrap();
    for (x, y) in a.states.iter().zip(&b.states) {
        for i in 0..5 {
            let diff = (x.states.row(i) - y.states.row(perm[i])).amax();
            assert!(diff < 1e-10, "step {} agent {i}: {diff}", x.time_index);
        }
    }
    assert!((a.empirical_mse_tail - b.empirical_mse_tail).abs() < 1e-10);
}

#[test]
fn errors_are_orthogonal_to_consensus() {
    let s = common::simulation_fixture(10);
    let options = SimulationOptions {
        horizon: 500,
        burn_in: Some(10),
        initial_spread: 1.0,
        record_trajectory: true,
    };
    let r = simulate(&s, &options, 4).unwrap();
    for (state, e) in r.states.iter().zip(&r.error_trajectory) {
        assert_eq!(&network_error(state), e);
        for l in 0..e.ncols() {
            assert!(e.column(l).sum().abs() < 1e-12);
        }
    }
}

#[test]
fn monte_carlo_is_reproducible() {
    let s = common::simulation_fixture(3);
    let options = SimulationOptions {
        horizon: 2_000,
        ..SimulationOptions::default()
    };
    let a = monte_carlo(&s, &options, 6, 17).unwrap();
    let b = monte_carlo(&s, &options, 6, 17).unwrap();
    assert_eq!(a, b);
    let c = monte_carlo(&s, &options, 6, 18).unwrap();
    assert_ne!(a.per_trial_mse, c.per_trial_mse);
}
