//! Sinkhorn-Knopp balancing of a non-negative square matrix into doubly
//! stochastic form.
//!
//! Starting from `r = c = 1`, each iteration sets `c ← 1 / (Mᵀ r)` followed by
//! `r ← 1 / (M c)`. The balanced matrix is `diag(r) · M · diag(c)`. One
//! iteration costs two sparse matrix-vector products and O(n) extra work; the
//! product `Mᵀ r` needed to measure column deviations is reused as the next
//! iteration's column update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BalanceConfig {
    /// Exit once every row and column sum is within this of 1.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        BalanceConfig {
            tolerance: 1e-8,
            max_iterations: 10_000,
        }
    }
}

impl BalanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::Input(format!(
                "balance tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Input("balance max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BalanceResult {
    /// `diag(row_scale) · M · diag(col_scale)`.
    pub matrix: SparseMatrix,
    pub row_scale: Vec<f64>,
    pub col_scale: Vec<f64>,
    pub iterations: usize,
    /// Worst `|sum - 1|` over all rows and columns of `matrix`.
    pub max_deviation: f64,
}

/// True iff every main-diagonal entry is positive, which is sufficient for
/// the matrix to have support.
pub fn has_support_diag(m: &SparseMatrix) -> bool {
    m.is_square() && (0..m.n_rows()).all(|i| m.get(i, i) > 0.0)
}

/// Worst absolute deviation of any row or column sum from 1.
pub fn stochastic_deviation(m: &SparseMatrix) -> f64 {
    m.row_sums()
        .into_iter()
        .chain(m.col_sums())
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max)
}

pub fn sinkhorn_knopp(m: &SparseMatrix, cfg: &BalanceConfig) -> Result<BalanceResult> {
    cfg.validate()?;
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "balancing needs a square matrix, got {}x{}",
            m.n_rows(),
            m.n_cols()
        )));
    }
    let n = m.n_rows();
    if let Some(i) = m.row_sums().iter().position(|&s| s <= 0.0) {
        return Err(Error::Degenerate(format!("row {i} is all zero")));
    }
    if let Some(j) = m.col_sums().iter().position(|&s| s <= 0.0) {
        return Err(Error::Degenerate(format!("column {j} is all zero")));
    }

    let mut r = vec![1.0; n];
    let mut c = vec![1.0; n];
    // col_mass = Mᵀ r, row_mass = M c, both relative to the current scales.
    let mut col_mass = vec![0.0; n];
    let mut row_mass = vec![0.0; n];
    m.matvec_transpose_into(&r, &mut col_mass);

    let mut iterations = 0;
    loop {
        for (cj, &t) in c.iter_mut().zip(&col_mass) {
            *cj = 1.0 / t;
        }
        m.matvec_into(&c, &mut row_mass);
        for (ri, &u) in r.iter_mut().zip(&row_mass) {
            *ri = 1.0 / u;
        }
        iterations += 1;
        m.matvec_transpose_into(&r, &mut col_mass);

        let col_dev = c.iter().zip(&col_mass).map(|(cj, t)| (cj * t - 1.0).abs());
        let row_dev = r.iter().zip(&row_mass).map(|(ri, u)| (ri * u - 1.0).abs());
        let deviation = col_dev.chain(row_dev).fold(0.0, f64::max);
        if !deviation.is_finite() {
            return Err(Error::NotConverged {
                iterations,
                max_deviation: deviation,
            });
        }
        if deviation <= cfg.tolerance {
            break;
        }
        if iterations >= cfg.max_iterations {
            return Err(Error::NotConverged {
                iterations,
                max_deviation: deviation,
            });
        }
    }

    let matrix = m.scaled(&r, &c);
    let max_deviation = stochastic_deviation(&matrix);
    Ok(BalanceResult {
        matrix,
        row_scale: r,
        col_scale: c,
        iterations,
        max_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::renormalized_laplacian;
    use crate::nn::DenseMatrix;

    /// Dense alternating row/column scaling, iterated until the matrix itself
    /// is stochastic to `tol`.
    fn dense_oracle(m: &DenseMatrix, tol: f64) -> DenseMatrix {
        let mut p = m.clone();
        let n = p.n_rows();
        for _ in 0..100_000 {
            for j in 0..n {
                let s: f64 = (0..n).map(|i| p[(i, j)]).sum();
                for i in 0..n {
                    p[(i, j)] /= s;
                }
            }
            for i in 0..n {
                let s: f64 = p.row(i).iter().sum();
                for v in p.row_mut(i) {
                    *v /= s;
                }
            }
            let worst = (0..n)
                .map(|j| ((0..n).map(|i| p[(i, j)]).sum::<f64>() - 1.0).abs())
                .fold(0.0, f64::max);
            if worst < tol {
                return p;
            }
        }
        panic!("oracle did not converge");
    }

    #[test]
    fn identity_is_fixed_point() {
        let res = sinkhorn_knopp(&SparseMatrix::identity(5), &BalanceConfig::default()).unwrap();
        assert_eq!(res.iterations, 1);
        assert_eq!(res.max_deviation, 0.0);
        assert_eq!(res.matrix, SparseMatrix::identity(5));
    }

    #[test]
    fn all_ones_balances_to_half() {
        let m =
            SparseMatrix::from_dense(&DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]))
                .unwrap();
        let res = sinkhorn_knopp(&m, &BalanceConfig::default()).unwrap();
        assert!(res.matrix.values().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn path_graph_matches_dense_oracle() {
        let a = SparseMatrix::from_edge_list(&[(0, 1), (1, 2)], 3, true).unwrap();
        let ah = renormalized_laplacian(&a).unwrap();
        let res = sinkhorn_knopp(&ah, &BalanceConfig::default()).unwrap();
        assert!(res.max_deviation <= 1e-8);
        assert!(res.iterations < 200);
        let oracle = dense_oracle(&ah.to_dense(), 1e-12);
        let got = res.matrix.to_dense();
        for (g, o) in got.as_slice().iter().zip(oracle.as_slice()) {
            assert!((g - o).abs() < 1e-7, "{g} vs {o}");
        }
    }

    #[test]
    fn scale_recovery() {
        let a = SparseMatrix::from_edge_list(&[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)], 4, true)
            .unwrap();
        let ah = renormalized_laplacian(&a).unwrap();
        let res = sinkhorn_knopp(&ah, &BalanceConfig::default()).unwrap();
        assert!(res.matrix.same_pattern(&ah));
        for i in 0..4 {
            for (j, v) in ah.row(i) {
                let rebuilt = res.row_scale[i] * v * res.col_scale[j];
                assert!((rebuilt - res.matrix.get(i, j)).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn zero_row_is_degenerate() {
        let m = SparseMatrix::new(2, 2, vec![0, 1, 1], vec![0], vec![1.0]).unwrap();
        assert!(matches!(
            sinkhorn_knopp(&m, &BalanceConfig::default()),
            Err(Error::Degenerate(_))
        ));
        // nonzero rows, zero column
        let m = SparseMatrix::new(2, 2, vec![0, 1, 2], vec![0, 0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            sinkhorn_knopp(&m, &BalanceConfig::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn missing_total_support_does_not_converge() {
        // [[1, 1], [0, 1]] has support but the off-diagonal entry lies on no
        // positive diagonal, so the scaling only approaches the identity.
        let m = SparseMatrix::new(2, 2, vec![0, 2, 3], vec![0, 1, 1], vec![1.0, 1.0, 1.0]).unwrap();
        assert!(has_support_diag(&m));
        let cfg = BalanceConfig {
            tolerance: 1e-12,
            max_iterations: 50,
        };
        match sinkhorn_knopp(&m, &cfg) {
            Err(Error::NotConverged {
                iterations,
                max_deviation,
            }) => {
                assert_eq!(iterations, 50);
                assert!(max_deviation > 1e-12);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let m = SparseMatrix::identity(2);
        let bad = BalanceConfig {
            tolerance: 0.0,
            max_iterations: 10,
        };
        assert!(matches!(sinkhorn_knopp(&m, &bad), Err(Error::Input(_))));
        let bad = BalanceConfig {
            tolerance: 1e-8,
            max_iterations: 0,
        };
        assert!(matches!(sinkhorn_knopp(&m, &bad), Err(Error::Input(_))));
    }

    #[test]
    fn support_diag() {
        assert!(has_support_diag(&SparseMatrix::identity(3)));
        assert!(!has_support_diag(&SparseMatrix::zeros(3, 3)));
        let a = SparseMatrix::from_edge_list(&[(0, 1)], 3, true).unwrap();
        assert!(!has_support_diag(&a));
        assert!(has_support_diag(&renormalized_laplacian(&a).unwrap()));
    }
}
