mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use privform_core::graph::{
    adjacency_and_degrees, component_count, is_connected, is_connected_bfs, laplacian, spectral_summary,
    WeightedGraph, DEGENERACY_TOL,
};

fn graph_from_seed(seed: u64) -> WeightedGraph {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=12);
    let p = rng.random_range(0.0..0.7);
    common::random_graph(&mut rng, n, p)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn laplacian_rows_sum_to_zero_and_is_symmetric(seed in any::<u64>()) {
        let g = graph_from_seed(seed);
        let l = laplacian(&g);
        for i in 0..l.nrows() {
            prop_assert!(l.row(i).sum().abs() <= 1e-12);
            for j in 0..l.ncols() {
                prop_assert_eq!(l[(i, j)], l[(j, i)]);
            }
        }
    }

    #[test]
    fn laplacian_is_degree_minus_adjacency(seed in any::<u64>()) {
        let g = graph_from_seed(seed);
        let (a, d) = adjacency_and_degrees(&g);
        let rebuilt = DMatrix::from_diagonal(&d) - a;
        prop_assert!((rebuilt - laplacian(&g)).amax() <= 1e-12);
    }

    #[test]
    fn lambda2_vanishes_exactly_when_disconnected(seed in any::<u64>()) {
        let g = graph_from_seed(seed);
        let s = spectral_summary(&g).unwrap();
        let bfs = is_connected_bfs(&g);
        prop_assert!(s.lambda2 >= -1e-9);
        prop_assert_eq!(s.lambda2.abs() <= 1e-9, !bfs, "lambda2 {}", s.lambda2);
        prop_assert_eq!(is_connected(&g, 1e-9).unwrap(), bfs);
        prop_assert_eq!(bfs, component_count(&g) == 1);
    }

    #[test]
    fn eigenpairs_have_small_residuals(seed in any::<u64>()) {
        let g = graph_from_seed(seed);
        let l = laplacian(&g);
        let s = spectral_summary(&g).unwrap();
        let scale = s.lambda_max.max(1.0);
        prop_assert!(s.eigenvalues.windows(2).all(|p| p[0] <= p[1]));
        prop_assert!(s.eigenvalues[0].abs() <= 1e-9 * scale);
        for (k, &lam) in s.eigenvalues.iter().enumerate() {
            let v = s.eigenvectors.column(k);
            prop_assert!((&l * v - v * lam).norm() <= 1e-8 * scale);
            prop_assert!((v.norm() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn eigenvalues_match_independent_solver(seed in any::<u64>()) {
        let g = graph_from_seed(seed);
        let s = spectral_summary(&g).unwrap();
        let mut reference: Vec<f64> = laplacian(&g).symmetric_eigen().eigenvalues.iter().copied().collect();
        reference.sort_by(f64::total_cmp);
        for (a, b) in s.eigenvalues.iter().zip(&reference) {
            prop_assert!((a - b).abs() <= 1e-9 * s.lambda_max.max(1.0));
        }
    }

    #[test]
    fn fiedler_vector_is_unit_and_orthogonal_to_ones(seed in any::<u64>()) {
        let g = graph_from_seed(seed);
        let s = spectral_summary(&g).unwrap();
        prop_assert!((s.fiedler_vector.norm() - 1.0).abs() <= 1e-10);
        prop_assert!(s.fiedler_vector.sum().abs() <= 1e-9);
        let gap = s.eigenvalues.get(2).map_or(f64::INFINITY, |l3| l3 - s.lambda2);
        if gap < DEGENERACY_TOL {
            prop_assert!(s.degenerate_fiedler);
        }
    }
}

#[test]
fn ten_node_mask_is_connected() {
    let g = WeightedGraph::uniform(common::ten_node_mask(), 1.0).unwrap();
    assert!(is_connected_bfs(&g));
    assert!(is_connected(&g, 1e-9).unwrap());
    assert_eq!(g.n_weighted_edges(), 19);
}

#[test]
fn complete_graph_spectrum() {
    // K_N with unit weights has eigenvalues 0 and N (multiplicity N - 1).
    for n in 2..=8 {
        let mask = privform_core::graph::TopologyMask::complete(n).unwrap();
        let s = spectral_summary(&WeightedGraph::uniform(mask, 1.0).unwrap()).unwrap();
        assert!(s.eigenvalues[0].abs() < 1e-12);
        for &l in &s.eigenvalues[1..] {
            assert!((l - n as f64).abs() < 1e-10, "K{n}: {l}");
        }
        assert_eq!(s.degenerate_fiedler, n > 2);
    }
}
