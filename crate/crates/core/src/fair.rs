//! Vanilla and degree-fair GCN training, the degree-group bias metric, and
//! evaluation reports.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::balance::{sinkhorn_knopp, BalanceConfig};
use crate::data::GraphDataset;
use crate::error::{input_err, Error, Result};
use crate::graph::{node_degrees, normalize, renormalized_laplacian, Normalization, SparseMatrix};
use crate::nn::{
    argmax, backward, forward, per_node_cross_entropy, softmax_cross_entropy, AdamState,
    DenseMatrix, GcnModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Propagate and differentiate with the same normalized matrix.
    Vanilla,
    /// Propagate with the balanced matrix; fairness comes from the input.
    RawlsGraph,
    /// Propagate with the renormalized matrix, assemble weight gradients
    /// with the balanced one.
    RawlsGrad,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Vanilla, Mode::RawlsGraph, Mode::RawlsGrad];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Vanilla => "vanilla",
            Mode::RawlsGraph => "rawls_graph",
            Mode::RawlsGrad => "rawls_grad",
        }
    }

    /// Symmetric for vanilla, doubly stochastic for the fair modes.
    pub fn default_normalization(self) -> Normalization {
        match self {
            Mode::Vanilla => Normalization::Symmetric,
            Mode::RawlsGraph | Mode::RawlsGrad => Normalization::DoublyStochastic,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" | "gcn" => Ok(Mode::Vanilla),
            "rawls_graph" | "graph" => Ok(Mode::RawlsGraph),
            "rawls_grad" | "grad" => Ok(Mode::RawlsGrad),
            other => input_err(format!("unknown mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub normalization: Normalization,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub hidden_dim: usize,
    pub seed: u64,
    pub balance: BalanceConfig,
}

impl TrainConfig {
    /// Two-layer, 64 hidden units, 100 epochs, lr 0.01, weight decay 5e-4.
    pub fn new(mode: Mode) -> Self {
        TrainConfig {
            mode,
            normalization: mode.default_normalization(),
            epochs: 100,
            lr: 0.01,
            weight_decay: 5e-4,
            hidden_dim: 64,
            seed: 0,
            balance: BalanceConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return input_err("epochs must be at least 1");
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return input_err(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return input_err("weight decay must be non-negative");
        }
        if self.hidden_dim == 0 {
            return input_err("hidden_dim must be at least 1");
        }
        self.balance.validate()
    }
}

/// The matrices one training mode uses.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub forward: SparseMatrix,
    /// `None` means weight gradients use `forward`.
    pub gradient: Option<SparseMatrix>,
}

impl Propagation {
    pub fn gradient_matrix(&self) -> &SparseMatrix {
        self.gradient.as_ref().unwrap_or(&self.forward)
    }
}

/// Builds the propagation and gradient matrices for `mode`.
///
/// Row, column and symmetric variants normalize `A + I`; the doubly
/// stochastic variant balances the renormalized matrix.
pub fn propagation_matrices(
    adjacency: &SparseMatrix,
    mode: Mode,
    normalization: Normalization,
    balance: &BalanceConfig,
) -> Result<Propagation> {
    let with_loops = adjacency.add_identity()?;
    let normalized = match normalization {
        Normalization::DoublyStochastic => {
            sinkhorn_knopp(&renormalized_laplacian(adjacency)?, balance)?.matrix
        }
        variant => normalize(&with_loops, variant, balance)?,
    };
    Ok(match mode {
        Mode::Vanilla | Mode::RawlsGraph => Propagation {
            forward: normalized,
            gradient: None,
        },
        Mode::RawlsGrad => Propagation {
            forward: renormalized_laplacian(adjacency)?,
            gradient: Some(normalized),
        },
    })
}

/// Statistics of the evaluated nodes that share one degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeGroup {
    pub degree: usize,
    pub size: usize,
    pub avg_loss: f64,
    pub avg_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub normalization: Normalization,
    pub seed: u64,
    /// Test accuracy.
    pub overall_accuracy: f64,
    pub val_accuracy: Option<f64>,
    /// Population variance of the per-degree average test losses.
    pub bias: f64,
    pub per_degree: Vec<DegreeGroup>,
    /// Mean training loss before each update.
    pub loss_curve: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GcnModel,
    pub report: EvalReport,
    /// Wall time of matrix preparation plus the training epochs.
    pub seconds: f64,
}

/// Trains a two-layer GCN on `dataset.split.train` and evaluates on the test
/// split.
pub fn train(dataset: &GraphDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let start = Instant::now();
    let prop = propagation_matrices(
        &dataset.adjacency,
        config.mode,
        config.normalization,
        &config.balance,
    )?;
    let (model, loss_curve) = fit(dataset, config, &prop)?;
    let seconds = start.elapsed().as_secs_f64();
    let report = evaluate(dataset, config, &prop, &model, loss_curve)?;
    Ok(TrainOutcome {
        model,
        report,
        seconds,
    })
}

/// Runs `config.epochs` Adam steps with precomputed matrices and returns the
/// model with its per-epoch training loss.
pub fn fit(
    dataset: &GraphDataset,
    config: &TrainConfig,
    prop: &Propagation,
) -> Result<(GcnModel, Vec<f64>)> {
    config.validate()?;
    let train_mask = &dataset.split.train;
    if train_mask.is_empty() {
        return input_err("training split is empty");
    }
    let dims = [
        dataset.features.n_cols(),
        config.hidden_dim,
        dataset.num_classes,
    ];
    let mut model = GcnModel::glorot(&dims, config.seed)?;
    let mut adam = AdamState::for_model(&model, config.lr, config.weight_decay);
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let grad_matrix = prop.gradient_matrix();
    for _ in 0..config.epochs {
        let tape = forward(&model, &prop.forward, &dataset.features)?;
        let (loss, d_logits) = softmax_cross_entropy(tape.logits(), &dataset.labels, train_mask)?;
        let grads = backward(&model, &tape, &prop.forward, grad_matrix, &d_logits)?;
        adam.step(&mut model, &grads)?;
        loss_curve.push(loss);
    }
    Ok((model, loss_curve))
}

pub(crate) fn evaluate(
    dataset: &GraphDataset,
    config: &TrainConfig,
    prop: &Propagation,
    model: &GcnModel,
    loss_curve: Vec<f64>,
) -> Result<EvalReport> {
    let test = &dataset.split.test;
    let logits = forward(model, &prop.forward, &dataset.features)?
        .logits()
        .clone();
    let losses = per_node_cross_entropy(&logits, &dataset.labels)?;
    let degrees = node_degrees(&dataset.adjacency);
    let overall_accuracy = accuracy(&logits, &dataset.labels, test)?;
    let val_accuracy = if dataset.split.val.is_empty() {
        None
    } else {
        Some(accuracy(&logits, &dataset.labels, &dataset.split.val)?)
    };
    let (bias, loss_groups) = bias_metric(&losses, &degrees, test)?;
    let acc_groups = per_degree_accuracy(&logits, &dataset.labels, &degrees, test)?;
    let per_degree = loss_groups
        .into_iter()
        .zip(acc_groups)
        .map(|(l, a)| {
            debug_assert_eq!(l.degree, a.degree);
            DegreeGroup {
                degree: l.degree,
                size: l.size,
                avg_loss: l.mean,
                avg_accuracy: a.mean,
            }
        })
        .collect();
    Ok(EvalReport {
        mode: config.mode,
        normalization: config.normalization,
        seed: config.seed,
        overall_accuracy,
        val_accuracy,
        bias,
        per_degree,
        loss_curve,
    })
}

/// Mean of some per-node quantity over the nodes of one degree.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMean {
    pub degree: usize,
    pub size: usize,
    pub mean: f64,
}

fn group_means(values: &[f64], degrees: &[usize], mask: &[usize]) -> Result<Vec<GroupMean>> {
    if mask.is_empty() {
        return input_err("evaluation mask is empty");
    }
    if values.len() != degrees.len() {
        return Err(Error::Dimension(format!(
            "{} values for {} degrees",
            values.len(),
            degrees.len()
        )));
    }
    let mut groups: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for &i in mask {
        if i >= values.len() {
            return input_err(format!("mask index {i} out of range"));
        }
        let g = groups.entry(degrees[i]).or_insert((0, 0.0));
        g.0 += 1;
        g.1 += values[i];
    }
    Ok(groups
        .into_iter()
        .map(|(degree, (size, sum))| GroupMean {
            degree,
            size,
            mean: sum / size as f64,
        })
        .collect())
}

/// Population variance of the per-degree average loss over `eval_mask`,
/// together with the groups in increasing degree order.
pub fn bias_metric(
    losses: &[f64],
    degrees: &[usize],
    eval_mask: &[usize],
) -> Result<(f64, Vec<GroupMean>)> {
    let groups = group_means(losses, degrees, eval_mask)?;
    let k = groups.len() as f64;
    let mean = groups.iter().map(|g| g.mean).sum::<f64>() / k;
    let var = groups.iter().map(|g| (g.mean - mean).powi(2)).sum::<f64>() / k;
    Ok((var, groups))
}

fn hits(logits: &DenseMatrix, labels: &[usize], mask: &[usize]) -> Result<Vec<f64>> {
    if mask.is_empty() {
        return input_err("accuracy mask is empty");
    }
    if labels.len() != logits.n_rows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} rows of logits",
            labels.len(),
            logits.n_rows()
        )));
    }
    let mut out = vec![0.0; labels.len()];
    for &i in mask {
        if i >= labels.len() {
            return input_err(format!("mask index {i} out of range"));
        }
        out[i] = if argmax(logits.row(i)) == labels[i] {
            1.0
        } else {
            0.0
        };
    }
    Ok(out)
}

/// Fraction of masked rows whose argmax (lowest index on ties) is the label.
pub fn accuracy(logits: &DenseMatrix, labels: &[usize], mask: &[usize]) -> Result<f64> {
    let h = hits(logits, labels, mask)?;
    Ok(mask.iter().map(|&i| h[i]).sum::<f64>() / mask.len() as f64)
}

pub fn per_degree_accuracy(
    logits: &DenseMatrix,
    labels: &[usize],
    degrees: &[usize],
    mask: &[usize],
) -> Result<Vec<GroupMean>> {
    group_means(&hits(logits, labels, mask)?, degrees, mask)
}
