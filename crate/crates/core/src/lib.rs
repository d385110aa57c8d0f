//! Channel tracking for massive-MIMO uplinks with a graph neural network.
//!
//! The crate simulates time-varying multipath channels, forms pilot-based LS
//! estimates, turns sliding windows of estimates into correlation-weighted
//! graphs and trains an encoder–core–decoder graph network to predict the
//! true channel. An FNN and the raw LS estimate serve as baselines.

// `!(x > 0.0)` is how validation rejects NaN; index loops read better in the kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod channel_sim;
pub mod cli;
pub mod error;
pub mod gnn;
pub mod graph_build;
pub mod harness;
pub mod matrix;
pub mod nn;
pub mod rng;
pub mod tracker;

pub use error::{Error, Result};
pub use gnn::{GnnConfig, GnnModel};
pub use tracker::{ChannelTracker, GraphPair};
