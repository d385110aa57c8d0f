use num_complex::Complex64;

use super::config::{ExperimentConfig, Method};
use crate::baselines::FnnModel;
use crate::error::{Error, Result};
use crate::gnn::GnnModel;
use crate::nn::{Checkpoint, LossOutput};
use crate::rng::{stream_rng, Stream};
use crate::tracker::{ChannelTracker, GraphPair};

/// Either learned tracker, so CLI and sweeps can treat them uniformly.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum AnyModel {
    Gnn(GnnModel),
    Fnn(FnnModel),
}

impl AnyModel {
    /// Fresh model initialised from the config's training seed.
    pub fn build(cfg: &ExperimentConfig, method: Method) -> Result<Self> {
        let mut rng = stream_rng(cfg.training.seed, Stream::Init, 0);
        match method {
            Method::Gnn => Ok(AnyModel::Gnn(GnnModel::new(
                cfg.model.gnn.clone(),
                &mut rng,
            )?)),
            Method::Fnn => Ok(AnyModel::Fnn(FnnModel::new(
                cfg.model.fnn.clone(),
                cfg.system.n_antennas,
                &mut rng,
            )?)),
            Method::Ls => Err(Error::invalid("the LS baseline has no trainable model")),
        }
    }

    pub fn method(&self) -> Method {
        match self {
            AnyModel::Gnn(_) => Method::Gnn,
            AnyModel::Fnn(_) => Method::Fnn,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        match ck.manifest.get("model").and_then(|v| v.as_str()) {
            Some("gnn") => Ok(AnyModel::Gnn(GnnModel::from_checkpoint(ck)?)),
            Some("fnn") => Ok(AnyModel::Fnn(FnnModel::from_checkpoint(ck)?)),
            other => Err(Error::Format(format!(
                "checkpoint has unknown model kind {other:?}"
            ))),
        }
    }

    fn inner(&self) -> &dyn ChannelTracker {
        match self {
            AnyModel::Gnn(m) => m,
            AnyModel::Fnn(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn ChannelTracker {
        match self {
            AnyModel::Gnn(m) => m,
            AnyModel::Fnn(m) => m,
        }
    }
}

impl ChannelTracker for AnyModel {
    fn kind(&self) -> &'static str {
        self.inner().kind()
    }

    fn predict_batch(&self, pairs: &[GraphPair]) -> Result<Vec<Complex64>> {
        self.inner().predict_batch(pairs)
    }

    fn train_step_grads(
        &mut self,
        pairs: &[GraphPair],
        targets: &[Complex64],
        kappa: f64,
    ) -> Result<(LossOutput, Vec<f64>)> {
        self.inner_mut().train_step_grads(pairs, targets, kappa)
    }

    fn params_flat(&self) -> Vec<f64> {
        self.inner().params_flat()
    }

    fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        self.inner_mut().set_params_flat(flat)
    }

    fn weight_mask(&self) -> Vec<bool> {
        self.inner().weight_mask()
    }

    fn to_checkpoint(&self, manifest: serde_json::Value) -> Checkpoint {
        self.inner().to_checkpoint(manifest)
    }
}
