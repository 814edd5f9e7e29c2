//! Shared test helpers: random graphs and small dense reference
//! implementations written independently of the library.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rawlsgcn::graph::SparseMatrix;
use rawlsgcn::nn::{DenseMatrix, GcnModel};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/two_communities")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Connected undirected graph: a random spanning tree plus each remaining
/// pair with probability `p`.
pub fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> SparseMatrix {
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.random_range(0..i), i));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    SparseMatrix::from_edge_list(&edges, n, true).unwrap()
}

pub fn random_dense(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_labels(n: usize, classes: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..classes)).collect()
}

/// Glorot-initialized model with the given layer widths.
pub fn random_model(dims: &[usize], seed: u64) -> GcnModel {
    GcnModel::glorot(dims, seed).unwrap()
}

pub fn dense(m: &SparseMatrix) -> Vec<Vec<f64>> {
    (0..m.n_rows())
        .map(|i| (0..m.n_cols()).map(|j| m.get(i, j)).collect())
        .collect()
}

/// `D^{-1/2}(A + I)D^{-1/2}` on a dense adjacency.
pub fn dense_renormalized(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut b = a.to_vec();
    for (i, row) in b.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    let d: Vec<f64> = b.iter().map(|r| r.iter().sum::<f64>()).collect();
    (0..n)
        .map(|i| (0..n).map(|j| b[i][j] / (d[i] * d[j]).sqrt()).collect())
        .collect()
}

/// Alternating row and column normalization until every sum is within `tol`.
pub fn dense_sinkhorn(m: &[Vec<f64>], tol: f64, max_iter: usize) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut p = m.to_vec();
    for _ in 0..max_iter {
        for row in p.iter_mut() {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        let col_sums: Vec<f64> = (0..n).map(|j| p.iter().map(|row| row[j]).sum()).collect();
        for row in p.iter_mut() {
            row.iter_mut().zip(&col_sums).for_each(|(x, s)| *x /= s);
        }
        let worst = (0..n)
            .map(|i| (p[i].iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        if worst <= tol {
            return p;
        }
    }
    panic!("dense reference did not converge");
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}
