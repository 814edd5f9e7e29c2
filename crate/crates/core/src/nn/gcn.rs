//! GCN layers `H⁽ˡ⁾ = σ(M H⁽ˡ⁻¹⁾ W⁽ˡ⁾)` with a hand-written backward pass.
//!
//! The weight gradient of layer `l` is `H⁽ˡ⁻¹⁾ᵀ Gᵀ ∂J/∂E⁽ˡ⁾`, where `G` is the
//! *gradient matrix*. Passing the propagation matrix as `G` gives the true
//! gradient. Passing its doubly stochastic form gives the degree-fair
//! gradient. The signal sent to earlier layers always uses the propagation
//! matrix, so only the weight-gradient assembly changes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::graph::{spmm, spmm_transpose, SparseMatrix};
use crate::nn::init::glorot_from_rng;
use crate::nn::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// No activation; used on the logit layer.
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative at `x`; ReLU uses σ′(0) = 0.
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: DenseMatrix,
    pub activation: Activation,
}

/// Ordered GCN layers without bias terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnModel {
    layers: Vec<Layer>,
}

impl GcnModel {
    /// Checks that dimensions chain and the last layer has no activation.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return input_err("a model needs at least one layer");
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].weight.n_cols() != pair[1].weight.n_rows() {
                return Err(Error::Dimension(format!(
                    "layer {l} outputs {} features but layer {} expects {}",
                    pair[0].weight.n_cols(),
                    l + 1,
                    pair[1].weight.n_rows()
                )));
            }
        }
        if layers.last().unwrap().activation != Activation::Identity {
            return input_err("the final layer must not have an activation");
        }
        Ok(GcnModel { layers })
    }

    /// Glorot-initialized model with ReLU between layers. `dims` lists the
    /// input width, every hidden width, and the number of classes.
    pub fn glorot(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return input_err("need at least input and output dimensions");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, d)| Layer {
                weight: glorot_from_rng(&mut rng, d[0], d[1]),
                activation: if l == last {
                    Activation::Identity
                } else {
                    Activation::Relu
                },
            })
            .collect();
        GcnModel::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Weights may be changed in place; shapes must not change.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.n_rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.n_cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TapeLayer {
    /// `H⁽ˡ⁻¹⁾`
    pub input: DenseMatrix,
    /// `E⁽ˡ⁾ = M H⁽ˡ⁻¹⁾ W⁽ˡ⁾`
    pub pre_activation: DenseMatrix,
    /// `H⁽ˡ⁾ = σ(E⁽ˡ⁾)`
    pub output: DenseMatrix,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTape {
    pub layers: Vec<TapeLayer>,
}

impl ForwardTape {
    pub fn logits(&self) -> &DenseMatrix {
        &self.layers.last().unwrap().output
    }
}

/// One weight gradient per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet(pub Vec<DenseMatrix>);

impl GradientSet {
    pub fn iter(&self) -> std::slice::Iter<'_, DenseMatrix> {
        self.0.iter()
    }

    pub fn layer(&self, l: usize) -> &DenseMatrix {
        &self.0[l]
    }
}

pub fn forward(
    model: &GcnModel,
    propagation: &SparseMatrix,
    x: &DenseMatrix,
) -> Result<ForwardTape> {
    if propagation.n_rows() != x.n_rows() || propagation.n_cols() != x.n_rows() {
        return Err(Error::Dimension(format!(
            "propagation matrix is {}x{} but features have {} rows",
            propagation.n_rows(),
            propagation.n_cols(),
            x.n_rows()
        )));
    }
    if x.n_cols() != model.input_dim() {
        return Err(Error::Dimension(format!(
            "features have {} columns, model expects {}",
            x.n_cols(),
            model.input_dim()
        )));
    }
    let mut layers: Vec<TapeLayer> = Vec::with_capacity(model.num_layers());
    for layer in model.layers() {
        let input = layers
            .last()
            .map_or_else(|| x.clone(), |t| t.output.clone());
        let pre_activation = spmm(propagation, &input.matmul(&layer.weight)?)?;
        let output = match layer.activation {
            Activation::Identity => pre_activation.clone(),
            act => pre_activation.map(|v| act.apply(v)),
        };
        debug_assert!(output.is_finite(), "non-finite activations");
        layers.push(TapeLayer {
            input,
            pre_activation,
            output,
        });
    }
    Ok(ForwardTape { layers })
}

/// Weight gradients plus the per-layer error signals `∂J/∂E⁽ˡ⁾`.
#[derive(Debug, Clone)]
pub struct BackwardPass {
    pub grads: GradientSet,
    pub d_pre_activation: Vec<DenseMatrix>,
}

fn check_tape(model: &GcnModel, tape: &ForwardTape) -> Result<()> {
    if tape.layers.len() != model.num_layers() {
        return input_err(format!(
            "tape has {} layers, model has {}",
            tape.layers.len(),
            model.num_layers()
        ));
    }
    for (l, (t, layer)) in tape.layers.iter().zip(model.layers()).enumerate() {
        if t.input.n_cols() != layer.weight.n_rows()
            || t.pre_activation.n_cols() != layer.weight.n_cols()
        {
            return input_err(format!("tape layer {l} does not match the model"));
        }
    }
    Ok(())
}

/// Weight gradients given `∂J/∂logits`. See the module docs for the roles
/// of `propagation` and `gradient_matrix`.
pub fn backward(
    model: &GcnModel,
    tape: &ForwardTape,
    propagation: &SparseMatrix,
    gradient_matrix: &SparseMatrix,
    d_logits: &DenseMatrix,
) -> Result<GradientSet> {
    Ok(backward_detailed(model, tape, propagation, gradient_matrix, d_logits)?.grads)
}

pub fn backward_detailed(
    model: &GcnModel,
    tape: &ForwardTape,
    propagation: &SparseMatrix,
    gradient_matrix: &SparseMatrix,
    d_logits: &DenseMatrix,
) -> Result<BackwardPass> {
    check_tape(model, tape)?;
    let n = tape.layers[0].input.n_rows();
    if gradient_matrix.n_rows() != n || gradient_matrix.n_cols() != n {
        return Err(Error::Dimension(format!(
            "gradient matrix is {}x{}, expected {n}x{n}",
            gradient_matrix.n_rows(),
            gradient_matrix.n_cols()
        )));
    }
    if d_logits.shape() != tape.logits().shape() {
        return Err(Error::Dimension(format!(
            "d_logits {:?} vs logits {:?}",
            d_logits.shape(),
            tape.logits().shape()
        )));
    }
    let shared = std::ptr::eq(propagation, gradient_matrix);

    let num_layers = model.num_layers();
    let mut grads = vec![DenseMatrix::zeros(0, 0); num_layers];
    let mut signals = vec![DenseMatrix::zeros(0, 0); num_layers];
    let mut d_output = d_logits.clone();
    for l in (0..num_layers).rev() {
        let layer = &model.layers()[l];
        let t = &tape.layers[l];
        let d_pre = match layer.activation {
            Activation::Identity => d_output,
            act => {
                let mut d = d_output;
                for (g, &e) in d.as_mut_slice().iter_mut().zip(t.pre_activation.as_slice()) {
                    *g *= act.derivative(e);
                }
                d
            }
        };
        let aggregated = spmm_transpose(gradient_matrix, &d_pre)?;
        grads[l] = t.input.t_matmul(&aggregated)?;
        if l > 0 {
            let back = if shared {
                aggregated
            } else {
                spmm_transpose(propagation, &d_pre)?
            };
            d_output = back.matmul_t(&layer.weight)?;
        } else {
            d_output = DenseMatrix::zeros(0, 0);
        }
        signals[l] = d_pre;
    }
    Ok(BackwardPass {
        grads: GradientSet(grads),
        d_pre_activation: signals,
    })
}

/// Which side of the node pair carries the neighborhood expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfluenceForm {
    /// `Σ_j deg(j) · H[j]ᵀ E_{i~p(j)}[∂J/∂E[i]]`
    Row,
    /// `Σ_i deg(i) · E_{j~p(i)}[H[j]]ᵀ ∂J/∂E[i]`
    Column,
}

/// How each node's influence matrix is weighted in the sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfluenceWeights {
    /// By the node's degree in the matrix; reproduces the weight gradient.
    Degree,
    /// Every node counts once.
    Unit,
}

/// Largest asymmetry accepted by [`influence_decomposition`].
pub const SYMMETRY_TOL: f64 = 1e-6;

/// Rebuilds the weight gradient of one layer node by node as a weighted sum
/// of influence matrices, given the layer input `h` and `d_pre = ∂J/∂E`.
///
/// Neighborhood distributions are proportional to the stored entries of `m`
/// and the degree of a node is its mass in `m`. The row form reads column `j`
/// of `m` and the column form reads row `i`, which for a symmetric matrix is
/// the same neighborhood.
pub fn influence_decomposition(
    m: &SparseMatrix,
    h: &DenseMatrix,
    d_pre: &DenseMatrix,
    form: InfluenceForm,
    weights: InfluenceWeights,
) -> Result<DenseMatrix> {
    let n = h.n_rows();
    if m.n_rows() != n || m.n_cols() != n || d_pre.n_rows() != n {
        return Err(Error::Dimension(format!(
            "matrix {}x{}, layer input {} rows, signal {} rows",
            m.n_rows(),
            m.n_cols(),
            n,
            d_pre.n_rows()
        )));
    }
    let asym = m.max_asymmetry();
    if asym > SYMMETRY_TOL {
        return input_err(format!(
            "influence decomposition needs a symmetric matrix (asymmetry {asym:e})"
        ));
    }
    let (d_in, d_out) = (h.n_cols(), d_pre.n_cols());
    let mut total = DenseMatrix::zeros(d_in, d_out);
    let mut add_outer = |weight: f64, left: &[f64], right: &[f64]| {
        for (p, &a) in left.iter().enumerate() {
            for (o, &b) in total.row_mut(p).iter_mut().zip(right) {
                *o += weight * a * b;
            }
        }
    };
    match form {
        InfluenceForm::Column => {
            for i in 0..n {
                let deg: f64 = m.row(i).map(|(_, v)| v).sum();
                if deg == 0.0 {
                    continue;
                }
                let mut mean_h = vec![0.0; d_in];
                for (j, v) in m.row(i) {
                    let p = v / deg;
                    for (acc, &x) in mean_h.iter_mut().zip(h.row(j)) {
                        *acc += p * x;
                    }
                }
                let w = match weights {
                    InfluenceWeights::Degree => deg,
                    InfluenceWeights::Unit => 1.0,
                };
                add_outer(w, &mean_h, d_pre.row(i));
            }
        }
        InfluenceForm::Row => {
            // Column j of m: accumulate its mass and the mass-weighted signals.
            let mut deg = vec![0.0; n];
            let mut weighted = DenseMatrix::zeros(n, d_out);
            for i in 0..n {
                for (j, v) in m.row(i) {
                    deg[j] += v;
                    for (acc, &g) in weighted.row_mut(j).iter_mut().zip(d_pre.row(i)) {
                        *acc += v * g;
                    }
                }
            }
            for (j, &dj) in deg.iter().enumerate() {
                if dj == 0.0 {
                    continue;
                }
                let mean_signal: Vec<f64> = weighted.row(j).iter().map(|s| s / dj).collect();
                let w = match weights {
                    InfluenceWeights::Degree => dj,
                    InfluenceWeights::Unit => 1.0,
                };
                add_outer(w, h.row(j), &mean_signal);
            }
        }
    }
    Ok(total)
}
