//! Degree-fair training of graph convolutional networks.
//!
//! A vanilla GCN weights each node's contribution to the weight gradient by
//! its degree in the renormalized propagation matrix, which favors
//! high-degree nodes. Balancing that matrix into doubly stochastic form with
//! Sinkhorn-Knopp gives every node unit weight. The balanced matrix can be
//! used as the propagation matrix itself ([`fair::Mode::RawlsGraph`]) or only
//! when assembling weight gradients ([`fair::Mode::RawlsGrad`]).

pub mod balance;
pub mod data;
pub mod error;
pub mod experiment;
pub mod fair;
pub mod graph;
pub mod nn;
pub mod par;

pub use error::{Error, Result};
