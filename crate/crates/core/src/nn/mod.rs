//! Dense matrices, the GCN model with its manual backward pass, softmax
//! cross entropy, Glorot initialization and Adam.

mod adam;
mod dense;
mod gcn;
mod init;
mod loss;

pub use adam::AdamState;
pub use dense::DenseMatrix;
pub use gcn::{
    backward, backward_detailed, forward, influence_decomposition, Activation, BackwardPass,
    ForwardTape, GcnModel, GradientSet, InfluenceForm, InfluenceWeights, Layer, TapeLayer,
    SYMMETRY_TOL,
};
pub use init::glorot_init;
pub use loss::{argmax, per_node_cross_entropy, softmax_cross_entropy};
