//! Random scenarios and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use privform_core::codesign::CodesignProblem;
use privform_core::graph::{TopologyMask, WeightedGraph};
use privform_core::io::read_graph_file;
use privform_core::privacy::NoiseModel;
use privform_core::scenario::NetworkScenario;

pub const TEN_NODE_EPS_MAX: [f64; 10] = [0.4, 0.9, 0.55, 0.35, 0.8, 0.45, 0.7, 0.5, 0.52, 0.58];

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Random connected graph: a random spanning tree plus extra edges with
/// probability `extra`, weights in `[0.1, 2)`.
pub fn random_connected_graph(rng: &mut impl Rng, n: usize, extra: f64) -> WeightedGraph {
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.push((u, v, rng.random_range(0.1..2.0)));
    }
    for i in 0..n {
        for j in i + 1..n {
            if !edges.iter().any(|&(a, b, _)| (a, b) == (i, j) || (a, b) == (j, i)) && rng.random_bool(extra) {
                edges.push((i, j, rng.random_range(0.1..2.0)));
            }
        }
    }
    WeightedGraph::from_weighted_edges(n, &edges).unwrap()
}

/// Random graph that may be disconnected.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> WeightedGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j, rng.random_range(0.1..2.0)));
            }
        }
    }
    WeightedGraph::from_weighted_edges(n, &edges).unwrap()
}

/// Random connected consensus scenario with `sigma_i in [0, 3]`,
/// `s_i in [0, 1]` and `gamma = 0.9 / d_max`.
pub fn random_scenario(seed: u64) -> NetworkScenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=10);
    let extra = rng.random_range(0.0..0.6);
    let g = random_connected_graph(&mut rng, n, extra);
    let sigmas = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
    let process = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let d = rng.random_range(1..=3);
    let gamma = 0.9 / g.max_degree();
    NetworkScenario::consensus(g, d, gamma, NoiseModel::explicit(sigmas, process).unwrap()).unwrap()
}

pub fn single_edge_scenario(w: f64, gamma: f64, sigma: f64) -> NetworkScenario {
    let g = WeightedGraph::from_weighted_edges(2, &[(0, 1, w)]).unwrap();
    NetworkScenario::consensus(g, 1, gamma, NoiseModel::explicit(vec![sigma; 2], vec![0.0; 2]).unwrap()).unwrap()
}

pub fn ten_node_mask() -> TopologyMask {
    read_graph_file(&data_dir().join("ten_node.json")).unwrap().mask().unwrap()
}

/// Ten-node problem with the privacy caps used throughout the sweeps.
pub fn ten_node_problem(e_r: f64, lambda2_min: f64, vartheta: f64) -> CodesignProblem {
    CodesignProblem {
        mask: ten_node_mask(),
        e_r,
        lambda2_min,
        vartheta,
        eps_max: TEN_NODE_EPS_MAX.to_vec(),
        deltas: vec![0.05; 10],
        adjacency_bounds: vec![1.0; 10],
        process_sigmas: vec![0.0; 10],
        gamma: 1.0 / 20.0,
        dimension: 2,
    }
}

/// `sum_{t<k} M^t Q M^t` by direct powers.
pub fn partial_sum(m: &DMatrix<f64>, q: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = m.nrows();
    let mut total = DMatrix::zeros(n, n);
    let mut power = DMatrix::identity(n, n);
    for _ in 0..k {
        total += &power * q * power.transpose();
        power = m * power;
    }
    total
}

/// Is `a` positive semidefinite up to `tol`?
pub fn is_psd(a: &DMatrix<f64>, tol: f64) -> bool {
    a.clone().symmetric_eigen().eigenvalues.iter().all(|&l| l >= -tol)
}

/// Formation scenario on `graph` with reference points on a circle.
pub fn circle_formation(graph: WeightedGraph, gamma: f64, noise: NoiseModel, dimension: usize) -> NetworkScenario {
    use privform_core::formation::FormationSpec;
    let n = graph.n_agents();
    let points = (0..n)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            (0..dimension).map(|l| if l % 2 == 0 { 3.0 * a.cos() } else { 3.0 * a.sin() }).collect()
        })
        .collect();
    let formation = FormationSpec::from_reference_points(points, graph.mask()).unwrap();
    NetworkScenario::new(graph, formation, gamma, noise).unwrap()
}

/// Simulation fixtures with mixed privacy and process noise, `n` in
/// {2, 3, 5, 10}.
pub fn simulation_fixture(n: usize) -> NetworkScenario {
    match n {
        2 => single_edge_scenario(1.0, 0.25, 1.0),
        3 => {
            let g = WeightedGraph::from_weighted_edges(3, &[(0, 1, 1.0), (1, 2, 0.5)]).unwrap();
            let noise = NoiseModel::explicit(vec![1.0, 0.5, 2.0], vec![0.0, 0.3, 0.1]).unwrap();
            circle_formation(g, 0.4, noise, 2)
        }
        5 => {
            let g = WeightedGraph::from_weighted_edges(
                5,
                &[(0, 1, 1.0), (1, 2, 0.7), (2, 3, 1.3), (3, 4, 0.4), (4, 0, 0.9), (0, 2, 0.6)],
            )
            .unwrap();
            let noise = NoiseModel::explicit(vec![0.3, 1.5, 0.0, 2.2, 0.8], vec![0.2, 0.0, 0.5, 0.1, 0.0]).unwrap();
            circle_formation(g, 0.3, noise, 1)
        }
        10 => {
            use privform_core::privacy::PrivacySpec;
            let g = WeightedGraph::uniform(ten_node_mask(), 1.0).unwrap();
            let specs: Vec<_> = TEN_NODE_EPS_MAX.iter().map(|&e| PrivacySpec::new(e, 0.05, 1.0).unwrap()).collect();
            let process = (0..10).map(|i| 0.05 * i as f64).collect();
            circle_formation(g, 0.12, NoiseModel::from_specs(&specs, process).unwrap(), 2)
        }
        _ => panic!("no fixture with {n} agents"),
    }
}

/// Gaussian upper tail by composite Simpson on `[y, y + 15]`.
pub fn tail_by_quadrature(y: f64) -> f64 {
    let intervals = 20_000;
    let h = 15.0 / intervals as f64;
    let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut sum = pdf(y) + pdf(y + 15.0);
    for k in 1..intervals {
        let weight = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += weight * pdf(y + k as f64 * h);
    }
    sum * h / 3.0
}

/// Quantile of the tail by bisection on the quadrature.
pub fn quantile_oracle(p: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if tail_by_quadrature(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
