//! Sparse CSR matrices, degrees, and the normalizations of `A + I` used as
//! GCN propagation matrices.

use std::fmt;
use std::fs;
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::balance::{sinkhorn_knopp, BalanceConfig};
use crate::error::{input_err, io_err, Error, Result};
use crate::nn::DenseMatrix;
use crate::par::{self, Execution};

/// Square or rectangular non-negative matrix in canonical CSR form.
///
/// Column indices are strictly increasing within each row and every stored
/// value is finite and non-negative.
#[derive(Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl fmt::Debug for SparseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SparseMatrix")
            .field("shape", &(self.n_rows, self.n_cols))
            .field("nnz", &self.nnz())
            .finish()
    }
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, checking every invariant.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return input_err(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n_rows + 1
            ));
        }
        if row_offsets[0] != 0 || *row_offsets.last().unwrap() != values.len() {
            return input_err("row_offsets must start at 0 and end at nnz");
        }
        if col_indices.len() != values.len() {
            return input_err("col_indices and values differ in length");
        }
        for i in 0..n_rows {
            let (lo, hi) = (row_offsets[i], row_offsets[i + 1]);
            if lo > hi {
                return input_err(format!("row_offsets decreases at row {i}"));
            }
            let cols = &col_indices[lo..hi];
            if cols.iter().any(|&c| c >= n_cols) {
                return input_err(format!("column index out of range in row {i}"));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return input_err(format!("row {i} columns are not strictly increasing"));
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return input_err(format!("stored value {v} is negative or not finite"));
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Unit-weight adjacency matrix from an edge list. Duplicate edges collapse
    /// to a single entry; with `symmetrize` each edge is stored in both
    /// directions.
    pub fn from_edge_list(edges: &[(usize, usize)], n: usize, symmetrize: bool) -> Result<Self> {
        let mut pairs = Vec::with_capacity(if symmetrize { 2 } else { 1 } * edges.len());
        for &(u, v) in edges {
            if u >= n || v >= n {
                return input_err(format!("edge ({u}, {v}) out of range for {n} nodes"));
            }
            pairs.push((u, v));
            if symmetrize && u != v {
                pairs.push((v, u));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut row_offsets = vec![0usize; n + 1];
        for &(u, _) in &pairs {
            row_offsets[u + 1] += 1;
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        let col_indices = pairs.iter().map(|&(_, v)| v).collect();
        Ok(SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets,
            col_indices,
            values: vec![1.0; pairs.len()],
        })
    }

    /// Keeps the strictly positive entries of a dense matrix.
    pub fn from_dense(m: &DenseMatrix) -> Result<Self> {
        let mut row_offsets = Vec::with_capacity(m.n_rows() + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for i in 0..m.n_rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(values.len());
        }
        SparseMatrix::new(m.n_rows(), m.n_cols(), row_offsets, col_indices, values)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                out[(i, j)] = v;
            }
        }
        out
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates the stored `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Stored value at `(i, j)`, or zero.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.col_indices[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// Same sparsity pattern with new values.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_offsets: self.row_offsets.clone(),
            col_indices: self.col_indices.clone(),
            values,
        }
    }

    pub fn same_pattern(&self, other: &SparseMatrix) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.row_offsets == other.row_offsets
            && self.col_indices == other.col_indices
    }

    /// Returns `self + I`, merging into any existing diagonal entry.
    pub fn add_identity(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::Dimension(format!(
                "cannot add identity to a {}x{} matrix",
                self.n_rows, self.n_cols
            )));
        }
        let n = self.n_rows;
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::with_capacity(self.nnz() + n);
        let mut values = Vec::with_capacity(self.nnz() + n);
        row_offsets.push(0);
        for i in 0..n {
            let mut placed = false;
            for (j, v) in self.row(i) {
                if !placed && j >= i {
                    if j == i {
                        col_indices.push(i);
                        values.push(v + 1.0);
                        placed = true;
                        continue;
                    }
                    col_indices.push(i);
                    values.push(1.0);
                    placed = true;
                }
                col_indices.push(j);
                values.push(v);
            }
            if !placed {
                col_indices.push(i);
                values.push(1.0);
            }
            row_offsets.push(values.len());
        }
        Ok(SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &j in &self.col_indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let row_offsets = counts.clone();
        let mut next = counts;
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                let slot = next[j];
                col_indices[slot] = i;
                values[slot] = v;
                next[j] += 1;
            }
        }
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Largest `|M[i,j] - M[j,i]|` over all pairs; infinite for non-square input.
    pub fn max_asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let t = self.transpose();
        if t.row_offsets != self.row_offsets || t.col_indices != self.col_indices {
            // Pattern differs: some entry has no mirror, so compare densely by lookup.
            let mut worst: f64 = 0.0;
            for i in 0..self.n_rows {
                for (j, v) in self.row(i) {
                    worst = worst.max((v - self.get(j, i)).abs());
                }
            }
            return worst;
        }
        self.values
            .iter()
            .zip(&t.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.max_asymmetry() <= tol
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| self.row(i).map(|(_, v)| v).sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_cols];
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                sums[j] += v;
            }
        }
        sums
    }

    /// `out = M x`.
    pub(crate) fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `out = Mᵀ x`.
    pub(crate) fn matvec_transpose_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                out[j] += v * xi;
            }
        }
    }

    /// `diag(row_scale) · M · diag(col_scale)`, same pattern.
    pub fn scaled(&self, row_scale: &[f64], col_scale: &[f64]) -> Self {
        let mut values = Vec::with_capacity(self.nnz());
        for (i, &r) in row_scale.iter().enumerate().take(self.n_rows) {
            values.extend(self.row(i).map(|(j, v)| r * v * col_scale[j]));
        }
        self.with_values(values)
    }
}

/// Per-node weighted degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeVector(pub Vec<f64>);

impl Deref for DegreeVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Row,
    Column,
}

pub fn degrees(m: &SparseMatrix, axis: Axis) -> DegreeVector {
    DegreeVector(match axis {
        Axis::Row => m.row_sums(),
        Axis::Column => m.col_sums(),
    })
}

/// Integer degrees of an unweighted adjacency matrix, ignoring self-loops.
pub fn node_degrees(a: &SparseMatrix) -> Vec<usize> {
    (0..a.n_rows())
        .map(|i| a.row(i).filter(|&(j, _)| j != i).count())
        .collect()
}

/// Normalization applied to the propagation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Row,
    Column,
    Symmetric,
    DoublyStochastic,
}

impl Normalization {
    pub const ALL: [Normalization; 4] = [
        Normalization::Row,
        Normalization::Column,
        Normalization::Symmetric,
        Normalization::DoublyStochastic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::Row => "row",
            Normalization::Column => "column",
            Normalization::Symmetric => "symmetric",
            Normalization::DoublyStochastic => "doubly_stochastic",
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row" => Ok(Normalization::Row),
            "column" | "col" => Ok(Normalization::Column),
            "symmetric" | "sym" => Ok(Normalization::Symmetric),
            "doubly_stochastic" | "ds" => Ok(Normalization::DoublyStochastic),
            other => input_err(format!("unknown normalization '{other}'")),
        }
    }
}

/// `D^{-1/2} M D^{-1/2}` with `D` the row sums of `M`.
fn symmetric_scale(m: &SparseMatrix) -> Result<SparseMatrix> {
    let d = m.row_sums();
    if let Some(i) = d.iter().position(|&x| x <= 0.0) {
        return Err(Error::Degenerate(format!("row {i} has zero sum")));
    }
    let mut values = Vec::with_capacity(m.nnz());
    for i in 0..m.n_rows() {
        // d_i * d_j commutes exactly, so symmetric input yields bit-symmetric output.
        values.extend(m.row(i).map(|(j, v)| v / (d[i] * d[j]).sqrt()));
    }
    Ok(m.with_values(values))
}

/// The renormalized propagation matrix `D̃^{-1/2} (A + I) D̃^{-1/2}`.
pub fn renormalized_laplacian(a: &SparseMatrix) -> Result<SparseMatrix> {
    symmetric_scale(&a.add_identity()?)
}

/// Rescales the nonzeros of `m` according to `variant`.
///
/// `Row`, `Column` and `Symmetric` expect `m = A + I`; `DoublyStochastic`
/// expects the renormalized matrix and runs Sinkhorn-Knopp on it.
pub fn normalize(
    m: &SparseMatrix,
    variant: Normalization,
    balance: &BalanceConfig,
) -> Result<SparseMatrix> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "normalization needs a square matrix, got {}x{}",
            m.n_rows(),
            m.n_cols()
        )));
    }
    match variant {
        Normalization::Row => {
            let d = m.row_sums();
            if let Some(i) = d.iter().position(|&x| x <= 0.0) {
                return Err(Error::Degenerate(format!("row {i} has zero sum")));
            }
            let ones = vec![1.0; m.n_cols()];
            let inv: Vec<f64> = d.iter().map(|x| 1.0 / x).collect();
            Ok(m.scaled(&inv, &ones))
        }
        Normalization::Column => {
            let d = m.col_sums();
            if let Some(j) = d.iter().position(|&x| x <= 0.0) {
                return Err(Error::Degenerate(format!("column {j} has zero sum")));
            }
            let mut values = Vec::with_capacity(m.nnz());
            for i in 0..m.n_rows() {
                values.extend(m.row(i).map(|(j, v)| v / d[j]));
            }
            Ok(m.with_values(values))
        }
        Normalization::Symmetric => symmetric_scale(m),
        Normalization::DoublyStochastic => Ok(sinkhorn_knopp(m, balance)?.matrix),
    }
}

fn check_product_dims(rows: usize, x: &DenseMatrix, what: &str) -> Result<()> {
    if rows != x.n_rows() {
        return Err(Error::Dimension(format!(
            "{what}: matrix has {rows} rows to contract, dense operand has {}",
            x.n_rows()
        )));
    }
    Ok(())
}

/// `M X`.
pub fn spmm(m: &SparseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    spmm_with(Execution::default(), m, x)
}

pub fn spmm_with(exec: Execution, m: &SparseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    check_product_dims(m.n_cols(), x, "spmm")?;
    let d = x.n_cols();
    let mut out = DenseMatrix::zeros(m.n_rows(), d);
    par::for_each_row(exec, out.as_mut_slice(), d, |i, row| {
        for (j, v) in m.row(i) {
            for (o, xv) in row.iter_mut().zip(x.row(j)) {
                *o += v * xv;
            }
        }
    });
    Ok(out)
}

/// `Mᵀ X` without forming `Mᵀ`.
pub fn spmm_transpose(m: &SparseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    spmm_transpose_with(Execution::default(), m, x)
}

/// Column block width for the parallel transpose product.
const T_BLOCK: usize = 16;

pub fn spmm_transpose_with(
    exec: Execution,
    m: &SparseMatrix,
    x: &DenseMatrix,
) -> Result<DenseMatrix> {
    check_product_dims(m.n_rows(), x, "spmm_transpose")?;
    let d = x.n_cols();
    let n_out = m.n_cols();
    let mut out = DenseMatrix::zeros(n_out, d);
    if exec == Execution::Sequential || d < 2 * T_BLOCK || n_out * d < 4096 {
        let buf = out.as_mut_slice();
        for i in 0..m.n_rows() {
            let xi = x.row(i);
            for (j, v) in m.row(i) {
                for (o, xv) in buf[j * d..(j + 1) * d].iter_mut().zip(xi) {
                    *o += v * xv;
                }
            }
        }
        return Ok(out);
    }
    // Each worker owns a block of output columns and scans all nonzeros in row
    // order, so every output entry accumulates in the same order as above.
    let starts: Vec<usize> = (0..d).step_by(T_BLOCK).collect();
    let blocks = par::map_ordered(exec, &starts, |&c0| {
        let c1 = (c0 + T_BLOCK).min(d);
        let w = c1 - c0;
        let mut local = vec![0.0; n_out * w];
        for i in 0..m.n_rows() {
            let xi = &x.row(i)[c0..c1];
            for (j, v) in m.row(i) {
                for (o, xv) in local[j * w..(j + 1) * w].iter_mut().zip(xi) {
                    *o += v * xv;
                }
            }
        }
        local
    });
    for (&c0, local) in starts.iter().zip(&blocks) {
        let w = (c0 + T_BLOCK).min(d) - c0;
        for j in 0..n_out {
            out.row_mut(j)[c0..c0 + w].copy_from_slice(&local[j * w..(j + 1) * w]);
        }
    }
    Ok(out)
}

/// Reads a `src<TAB>dst` edge list with `#` comments. Returns the edges and
/// one past the largest node id seen.
pub fn read_edge_list(path: &Path) -> Result<(Vec<(usize, usize)>, usize)> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_edge_list(&text, path)
}

pub(crate) fn parse_edge_list(text: &str, path: &Path) -> Result<(Vec<(usize, usize)>, usize)> {
    let mut edges = Vec::new();
    let mut n = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let mut fields = line.split_whitespace();
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(format!("expected two node ids, got '{line}'")));
        };
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| parse_err(format!("bad node id '{s}': {e}")))
        };
        let (u, v) = (parse(a)?, parse(b)?);
        n = n.max(u + 1).max(v + 1);
        edges.push((u, v));
    }
    Ok((edges, n))
}
