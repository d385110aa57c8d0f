//! Common interface over the learned trackers so the harness can train and
//! evaluate them interchangeably.

use num_complex::Complex64;

use crate::error::Result;
use crate::graph_build::ChannelGraph;
use crate::nn::{Checkpoint, LossOutput};

/// The current graph `G(n)` and the lagged graph `G(n−K)`.
#[derive(Debug, Clone, Copy)]
pub struct GraphPair<'a> {
    pub now: &'a ChannelGraph,
    pub past: &'a ChannelGraph,
}

pub trait ChannelTracker {
    fn kind(&self) -> &'static str;

    /// Inference-mode predictions, `Nr` values per pair, concatenated.
    fn predict_batch(&self, pairs: &[GraphPair]) -> Result<Vec<Complex64>>;

    /// Training-mode forward and backward pass on one minibatch. Returns the
    /// loss terms and the gradient in `params_flat` order. Batch-norm running
    /// statistics are updated as a side effect.
    fn train_step_grads(
        &mut self,
        pairs: &[GraphPair],
        targets: &[Complex64],
        kappa: f64,
    ) -> Result<(LossOutput, Vec<f64>)>;

    fn params_flat(&self) -> Vec<f64>;

    fn set_params_flat(&mut self, flat: &[f64]) -> Result<()>;

    /// `true` for dense-layer weights, the entries under the L2 penalty.
    fn weight_mask(&self) -> Vec<bool>;

    fn to_checkpoint(&self, manifest: serde_json::Value) -> Checkpoint;

    fn n_params(&self) -> usize {
        self.params_flat().len()
    }

    fn weights_flat(&self) -> Vec<f64> {
        self.params_flat()
            .into_iter()
            .zip(self.weight_mask())
            .filter_map(|(p, m)| m.then_some(p))
            .collect()
    }
}
