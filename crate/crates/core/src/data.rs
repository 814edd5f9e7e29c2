//! Dataset loading, seeded train/val/test splits, and a synthetic power-law
//! graph generator with planted communities.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{input_err, io_err, Error, Result};
use crate::graph::{parse_edge_list, SparseMatrix};
use crate::nn::DenseMatrix;

/// Disjoint node index sets.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn is_disjoint(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .all(|&i| seen.insert(i))
    }
}

#[derive(Debug, Clone)]
pub struct GraphDataset {
    /// Symmetric, unit-weight, no self-loops.
    pub adjacency: SparseMatrix,
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
    /// Self-loops found in the edge file and discarded.
    pub dropped_self_loops: usize,
}

impl GraphDataset {
    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    /// Scales each feature row to sum to 1; all-zero rows stay zero.
    pub fn row_normalize_features(&mut self) {
        for i in 0..self.features.n_rows() {
            let row = self.features.row_mut(i);
            let s: f64 = row.iter().sum();
            if s != 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
    }
}

fn read(dir: &Path, name: &str) -> Result<(PathBuf, String)> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    Ok((path, text))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Loads `edges.tsv`, `features.csv` and `labels.csv` from `dir`. The split
/// is left empty.
pub fn load_dataset(dir: &Path) -> Result<GraphDataset> {
    let (fpath, ftext) = read(dir, "features.csv")?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, text) in data_lines(&ftext) {
        let row = text
            .split(',')
            .map(|s| {
                let s = s.trim();
                s.parse::<f64>().map_err(|e| Error::Parse {
                    path: fpath.clone(),
                    line,
                    msg: format!("bad feature value '{s}': {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    path: fpath,
                    line,
                    msg: format!("{} columns, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    let features = DenseMatrix::from_rows(&rows);
    let n = features.n_rows();

    let (lpath, ltext) = read(dir, "labels.csv")?;
    let mut labels = Vec::with_capacity(n);
    for (line, text) in data_lines(&ltext) {
        let label = text.parse::<usize>().map_err(|e| Error::Parse {
            path: lpath.clone(),
            line,
            msg: format!("unknown class index '{text}': {e}"),
        })?;
        labels.push(label);
    }
    if labels.len() != n {
        return input_err(format!(
            "labels.csv has {} rows but features.csv has {n}",
            labels.len()
        ));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);

    let (epath, etext) = read(dir, "edges.tsv")?;
    let (edges, max_id) = parse_edge_list(&etext, &epath)?;
    if max_id > n {
        return input_err(format!(
            "edges.tsv references node {} but only {n} nodes have features",
            max_id - 1
        ));
    }
    let before = edges.len();
    let edges: Vec<(usize, usize)> = edges.into_iter().filter(|(u, v)| u != v).collect();
    let dropped_self_loops = before - edges.len();
    let adjacency = SparseMatrix::from_edge_list(&edges, n, true)?;

    Ok(GraphDataset {
        adjacency,
        features,
        labels,
        num_classes,
        split: Split::default(),
        dropped_self_loops,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train_per_class: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes {
            train_per_class: 20,
            val: 500,
            test: 1000,
        }
    }
}

/// Standard semi-supervised split: `train_per_class` nodes of every class,
/// then `val` and `test` nodes drawn uniformly from the rest.
pub fn make_split(
    labels: &[usize],
    num_classes: usize,
    sizes: SplitSizes,
    seed: u64,
) -> Result<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= num_classes {
            return input_err(format!("label {y} of node {i} is not below {num_classes}"));
        }
        by_class[y].push(i);
    }
    let mut train = Vec::with_capacity(sizes.train_per_class * num_classes);
    for (c, nodes) in by_class.iter_mut().enumerate() {
        if nodes.len() < sizes.train_per_class {
            return input_err(format!(
                "class {c} has {} nodes, need {} for training",
                nodes.len(),
                sizes.train_per_class
            ));
        }
        nodes.shuffle(&mut rng);
        train.extend_from_slice(&nodes[..sizes.train_per_class]);
    }
    let chosen: BTreeSet<usize> = train.iter().copied().collect();
    let mut rest: Vec<usize> = (0..labels.len()).filter(|i| !chosen.contains(i)).collect();
    if rest.len() < sizes.val + sizes.test {
        return input_err(format!(
            "{} nodes remain after training selection, need {} for validation and test",
            rest.len(),
            sizes.val + sizes.test
        ));
    }
    rest.shuffle(&mut rng);
    let mut val = rest[..sizes.val].to_vec();
    let mut test = rest[sizes.val..sizes.val + sizes.test].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, val, test })
}

/// On-disk form of a split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFile {
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitFile {
    pub fn new(seed: u64, split: &Split) -> Self {
        SplitFile {
            seed,
            train: split.train.clone(),
            val: split.val.clone(),
            test: split.test.clone(),
        }
    }

    pub fn into_split(self) -> Split {
        Split {
            train: self.train,
            val: self.val,
            test: self.test,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?).map_err(io_err(path))
    }
}

/// Parameters of [`synthetic_powerlaw`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n: usize,
    /// Edges added per arriving node.
    pub m_attach: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Probability that an attachment target is drawn from the arriving
    /// node's own community.
    pub homophily: f64,
    /// Standard deviation of the Gaussian noise added to every feature.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n: 2000,
            m_attach: 2,
            num_classes: 5,
            feature_dim: 32,
            homophily: 0.8,
            noise_std: 1.0,
            seed: 0,
        }
    }
}

/// Preferential-attachment graph with planted communities.
///
/// The first `m_attach + 1` nodes form a clique; every later node attaches to
/// `m_attach` distinct earlier nodes chosen with probability proportional to
/// degree, restricted to its own community with probability `homophily`.
/// Features are the one-hot community code padded to `feature_dim` columns
/// plus `N(0, noise_std²)` noise. Labels are the communities.
pub fn synthetic_powerlaw(cfg: &SyntheticConfig) -> Result<GraphDataset> {
    let SyntheticConfig {
        n,
        m_attach,
        num_classes,
        feature_dim,
        homophily,
        noise_std,
        seed,
    } = *cfg;
    if m_attach == 0 || n <= m_attach + 1 {
        return input_err(format!(
            "need n > m_attach + 1 and m_attach >= 1 (n={n}, m_attach={m_attach})"
        ));
    }
    if num_classes == 0 || feature_dim < num_classes {
        return input_err(format!(
            "need 1 <= num_classes <= feature_dim (got {num_classes} and {feature_dim})"
        ));
    }
    if !(0.0..=1.0).contains(&homophily) || noise_std.is_nan() || noise_std < 0.0 {
        return input_err("homophily must lie in [0, 1] and noise_std must be non-negative");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..num_classes)).collect();

    // Each edge endpoint appears once per incident edge, so a uniform draw is
    // degree-proportional.
    let mut endpoints: Vec<usize> = Vec::with_capacity(2 * n * m_attach);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    let mut edges = Vec::with_capacity(n * m_attach);
    fn record(
        u: usize,
        v: usize,
        labels: &[usize],
        endpoints: &mut Vec<usize>,
        by_class: &mut [Vec<usize>],
        edges: &mut Vec<(usize, usize)>,
    ) {
        edges.push((u, v));
        for w in [u, v] {
            endpoints.push(w);
            by_class[labels[w]].push(w);
        }
    }
    let core = m_attach + 1;
    for u in 0..core {
        for v in u + 1..core {
            record(u, v, &labels, &mut endpoints, &mut by_class, &mut edges);
        }
    }
    let mut targets = Vec::with_capacity(m_attach);
    for v in core..n {
        targets.clear();
        let mut attempts = 0;
        while targets.len() < m_attach {
            attempts += 1;
            let own = &by_class[labels[v]];
            let pool =
                if !own.is_empty() && attempts < 50 * m_attach && rng.random::<f64>() < homophily {
                    own
                } else {
                    &endpoints
                };
            let t = pool[rng.random_range(0..pool.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            record(v, t, &labels, &mut endpoints, &mut by_class, &mut edges);
        }
    }
    let adjacency = SparseMatrix::from_edge_list(&edges, n, true)?;

    let features = DenseMatrix::from_fn(n, feature_dim, |i, k| {
        let signal = if k == labels[i] { 1.0 } else { 0.0 };
        let z: f64 = StandardNormal.sample(&mut rng);
        signal + noise_std * z
    });

    Ok(GraphDataset {
        adjacency,
        features,
        labels,
        num_classes,
        split: Split::default(),
        dropped_self_loops: 0,
    })
}

/// True iff every node is reachable from node 0.
pub fn is_connected(a: &SparseMatrix) -> bool {
    let n = a.n_rows();
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for (v, _) in a.row(u) {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_fixture(dir: &Path, edges: &str, features: &str, labels: &str) {
        fs::write(dir.join("edges.tsv"), edges).unwrap();
        fs::write(dir.join("features.csv"), features).unwrap();
        fs::write(dir.join("labels.csv"), labels).unwrap();
    }

    #[test]
    fn loads_three_node_fixture() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(
            dir.path(),
            "# tiny\n0\t1\n1\t2\n2\t2\n",
            "1.0,0.5\n-2,0\n0.25,3e-1\n",
            "0\n1\n1\n",
        );
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.num_nodes(), 3);
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.labels, vec![0, 1, 1]);
        assert_eq!(ds.features.as_slice(), &[1.0, 0.5, -2.0, 0.0, 0.25, 0.3]);
        assert_eq!(ds.dropped_self_loops, 1);
        assert!(ds.adjacency.is_symmetric(0.0));
        assert_eq!(ds.adjacency.get(2, 2), 0.0);
        assert_eq!(ds.adjacency.get(1, 0), 1.0);
        assert_eq!(ds.adjacency.nnz(), 4);
    }

    #[test]
    fn missing_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("features.csv"), "1\n").unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("labels.csv"), "{err}");
    }

    #[test]
    fn row_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), "0\t1\n", "1\n2\n", "0\n");
        assert!(matches!(load_dataset(dir.path()), Err(Error::Input(_))));
        write_fixture(dir.path(), "0\t5\n", "1\n2\n", "0\n1\n");
        assert!(matches!(load_dataset(dir.path()), Err(Error::Input(_))));
    }

    #[test]
    fn bad_label_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), "0\t1\n", "1\n2\n", "0\n-1\n");
        assert!(matches!(
            load_dataset(dir.path()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn wide_features_load_untruncated() {
        let dir = tempfile::tempdir().unwrap();
        let row: Vec<String> = (0..2879).map(|k| format!("{}", k % 3)).collect();
        let row = row.join(",");
        write_fixture(dir.path(), "0\t1\n", &format!("{row}\n{row}\n"), "0\n1\n");
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.features.n_cols(), 2879);
        assert_eq!(ds.features[(1, 2878)], (2878 % 3) as f64);
    }

    #[test]
    fn split_protocol() {
        let labels: Vec<usize> = (0..2000).map(|i| i % 7).collect();
        let s = make_split(&labels, 7, SplitSizes::default(), 3).unwrap();
        assert_eq!(s.train.len(), 140);
        assert_eq!(s.val.len(), 500);
        assert_eq!(s.test.len(), 1000);
        assert!(s.is_disjoint());
        for c in 0..7 {
            assert_eq!(s.train.iter().filter(|&&i| labels[i] == c).count(), 20);
        }
        assert_eq!(s, make_split(&labels, 7, SplitSizes::default(), 3).unwrap());
        assert_ne!(s, make_split(&labels, 7, SplitSizes::default(), 4).unwrap());
    }

    #[test]
    fn split_errors_report_counts() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 2).collect();
        let err = make_split(&labels, 2, SplitSizes::default(), 0).unwrap_err();
        assert!(err.to_string().contains("960"), "{err}");
        let labels = vec![0; 2000];
        assert!(make_split(&labels, 2, SplitSizes::default(), 0).is_err());
    }

    #[test]
    fn split_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.json");
        let split = Split {
            train: vec![0, 4],
            val: vec![1],
            test: vec![2, 3],
        };
        SplitFile::new(9, &split).write(&path).unwrap();
        let back = SplitFile::read(&path).unwrap();
        assert_eq!(back.seed, 9);
        assert_eq!(back.into_split(), split);
    }

    #[test]
    fn synthetic_is_heavy_tailed_connected_and_deterministic() {
        let cfg = SyntheticConfig::default();
        let ds = synthetic_powerlaw(&cfg).unwrap();
        assert!(is_connected(&ds.adjacency));
        assert!(ds.adjacency.is_symmetric(0.0));
        let mut deg = crate::graph::node_degrees(&ds.adjacency);
        deg.sort_unstable();
        let median = deg[deg.len() / 2];
        assert!(
            deg[deg.len() - 1] > 10 * median,
            "max {} median {median}",
            deg[deg.len() - 1]
        );
        let again = synthetic_powerlaw(&cfg).unwrap();
        assert_eq!(ds.adjacency, again.adjacency);
        assert_eq!(ds.features, again.features);
    }

    #[test]
    fn noiseless_features_reveal_labels() {
        let cfg = SyntheticConfig {
            n: 300,
            homophily: 1.0,
            noise_std: 0.0,
            ..SyntheticConfig::default()
        };
        let ds = synthetic_powerlaw(&cfg).unwrap();
        // linear classifier with identity weights on the first C columns
        let hits = (0..ds.num_nodes())
            .filter(|&i| crate::nn::argmax(&ds.features.row(i)[..ds.num_classes]) == ds.labels[i])
            .count();
        assert_eq!(hits, ds.num_nodes());
    }

    #[test]
    fn synthetic_parameter_checks() {
        let bad = SyntheticConfig {
            n: 3,
            m_attach: 2,
            ..SyntheticConfig::default()
        };
        assert!(synthetic_powerlaw(&bad).is_err());
        let bad = SyntheticConfig {
            feature_dim: 2,
            ..SyntheticConfig::default()
        };
        assert!(synthetic_powerlaw(&bad).is_err());
    }
}
