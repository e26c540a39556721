mod common;

use proptest::prelude::*;
use qvm::neighbor::{expected_neighbor_count, CellIndex};
use qvm::rng::keyed_rng;
use qvm::Dimension;
use rand::Rng;

#[test]
fn cell_list_matches_brute_force() {
    let mut rng = keyed_rng(2024, 0, 0);
    for config in 0..100 {
        let dims = if config % 4 == 3 { Dimension::Two } else { Dimension::Three };
        let r_c = [1.0, 0.7, 1.3][config % 3];
        let box_length = r_c * rng.random_range(2.0..9.0);
        let n = rng.random_range(1..600);
        let positions = common::random_positions(&mut rng, n, box_length, dims.get(), 0.3);
        let index = CellIndex::build(&positions, box_length, r_c, dims).unwrap();
        let expected = common::brute_neighbors(&positions, box_length, r_c, dims.get());
        for (j, want) in expected.iter().enumerate() {
            assert_eq!(&index.neighbors(&positions, j, r_c), want, "config {config}, particle {j}");
        }
    }
}

#[test]
fn boxes_with_fewer_than_three_cells_do_not_double_count() {
    let mut rng = keyed_rng(7, 0, 0);
    for box_length in [2.0, 2.5, 2.9, 3.0, 3.5] {
        let positions = common::random_positions(&mut rng, 200, box_length, 3, 0.5);
        let index = CellIndex::build(&positions, box_length, 1.0, Dimension::Three).unwrap();
        let expected = common::brute_neighbors(&positions, box_length, 1.0, 3);
        for (j, want) in expected.iter().enumerate() {
            assert_eq!(&index.neighbors(&positions, j, 1.0), want);
        }
    }
}

#[test]
fn mean_neighbor_count_matches_interaction_volume() {
    for dims in [Dimension::Two, Dimension::Three] {
        let (rho, box_length, r_c) = (0.5, 10.0f64, 1.0);
        let n = (rho * box_length.powi(dims.get() as i32)) as usize;
        let mut samples = Vec::new();
        for trial in 0..60u64 {
            let mut rng = keyed_rng(trial, 1, dims.get() as u64);
            let positions = common::random_positions(&mut rng, n, box_length, dims.get(), 0.0);
            let index = CellIndex::build(&positions, box_length, r_c, dims).unwrap();
            let total: usize = (0..n).map(|j| index.neighbors(&positions, j, r_c).len() - 1).sum();
            samples.push(total as f64 / n as f64);
        }
        let m = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / m;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let se = (var / m).sqrt();
        // N - 1 other particles at uniform density (N - 1) / L^d
        let expected = expected_neighbor_count(rho, r_c, dims) * (n - 1) as f64 / n as f64;
        assert!((mean - expected).abs() < 3.0 * se, "{dims}D: {mean} vs {expected} (se {se})");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn neighbor_relation_is_symmetric(seed in any::<u64>(), n in 1usize..300, l in 2.0f64..8.0) {
        let mut rng = keyed_rng(seed, 0, 0);
        let positions = common::random_positions(&mut rng, n, l, 3, 0.3);
        let index = CellIndex::build(&positions, l, 1.0, Dimension::Three).unwrap();
        let lists: Vec<Vec<usize>> = (0..n).map(|j| index.neighbors(&positions, j, 1.0)).collect();
        for (j, list) in lists.iter().enumerate() {
            prop_assert!(list.binary_search(&j).is_ok());
            for &i in list {
                prop_assert!(lists[i].binary_search(&j).is_ok());
            }
        }
    }
}

#[test]
fn radius_beyond_half_box_is_rejected() {
    let positions = [qvm::Vector3::new(0.5, 0.5, 0.5)];
    assert!(CellIndex::build(&positions, 1.9, 1.0, Dimension::Three).is_err());
}
