//! Kept in its own binary so no sibling test competes for the CPU while
//! timing.

mod common;

use common::rng;
use rand::Rng;
use rawlsgcn::balance::BalanceConfig;
use rawlsgcn::experiment::benchmark_sinkhorn;
use rawlsgcn::graph::{renormalized_laplacian, SparseMatrix};

/// Random graph on `n` nodes with about `m` edges.
fn sparse_random(n: usize, m: usize, seed: u64) -> SparseMatrix {
    let mut r = rng(seed);
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (r.random_range(0..i), i)).collect();
    while edges.len() < m {
        let (i, j) = (r.random_range(0..n), r.random_range(0..n));
        if i != j {
            edges.push((i.min(j), i.max(j)));
        }
    }
    SparseMatrix::from_edge_list(&edges, n, true).unwrap()
}

fn per_iteration(m: &SparseMatrix) -> f64 {
    let cfg = BalanceConfig::default();
    (0..5)
        .map(|_| benchmark_sinkhorn(m, &cfg).unwrap().seconds_per_iteration)
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn per_iteration_cost_grows_linearly_with_edges() {
    let n = 100_000;
    let small = renormalized_laplacian(&sparse_random(n, 4 * n, 1)).unwrap();
    let large = renormalized_laplacian(&sparse_random(n, 8 * n, 2)).unwrap();
    let ratio = per_iteration(&large) / per_iteration(&small);
    assert!((1.3..=3.0).contains(&ratio), "time ratio {ratio:.2}");
}

#[test]
fn pathological_input_is_reported_not_hung() {
    let m = SparseMatrix::identity(4);
    let t = benchmark_sinkhorn(&m, &BalanceConfig::default()).unwrap();
    assert_eq!(t.iterations, 1);
    assert_eq!(t.max_deviation, 0.0);
}
