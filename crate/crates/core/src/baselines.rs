//! Reference estimators: the held LS estimate and a fully connected tracker.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel_sim::LsSeries;
use crate::error::{Error, Result};
use crate::gnn::add_weight_penalty_grad;
use crate::graph_build::{concat_graphs, ChannelGraph};
use crate::matrix::Matrix;
use crate::nn::{loss_mse_l2, Checkpoint, LossOutput, Mlp, MlpSpec, Mode};
use crate::tracker::{ChannelTracker, GraphPair};

/// The hold-extended LS estimate at index `n`.
pub fn ls_baseline_predict(series: &LsSeries, n: usize) -> Result<Vec<Complex64>> {
    series
        .estimates
        .get(n)
        .cloned()
        .ok_or_else(|| Error::invalid(format!("index {n} outside LS series of {}", series.len())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FnnConfig {
    pub hidden: Vec<usize>,
    /// Batch-normalise the output layer.
    pub output_batchnorm: bool,
}

impl Default for FnnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 256, 128, 64],
            output_batchnorm: false,
        }
    }
}

impl FnnConfig {
    pub fn spec(&self, n_antennas: usize) -> MlpSpec {
        let s = MlpSpec::new(4 * n_antennas, &self.hidden, 2 * n_antennas);
        if self.output_batchnorm {
            s.with_output_batchnorm()
        } else {
            s
        }
    }
}

/// Maps the four stacked vertex features of every antenna to the channel.
/// Input is the row-major vertex matrix of the concatenated graph; output is
/// `[Re_1 … Re_Nr, Im_1 … Im_Nr]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FnnModel {
    pub config: FnnConfig,
    pub n_antennas: usize,
    pub mlp: Mlp,
}

impl FnnModel {
    pub fn new<R: Rng + ?Sized>(config: FnnConfig, n_antennas: usize, rng: &mut R) -> Result<Self> {
        if n_antennas == 0 {
            return Err(Error::invalid("FNN needs at least one antenna"));
        }
        let mlp = Mlp::new(config.spec(n_antennas), rng)?;
        Ok(Self {
            config,
            n_antennas,
            mlp,
        })
    }

    fn input_row(&self, now: &ChannelGraph, past: &ChannelGraph) -> Result<Vec<f64>> {
        if now.n_vertices() != self.n_antennas {
            return Err(Error::invalid(format!(
                "FNN built for {} antennas, graph has {}",
                self.n_antennas,
                now.n_vertices()
            )));
        }
        Ok(concat_graphs(now, past)?.vertices.into_vec())
    }

    fn input_matrix(&self, pairs: &[GraphPair]) -> Result<Matrix> {
        let mut data = Vec::with_capacity(pairs.len() * 4 * self.n_antennas);
        for p in pairs {
            data.extend(self.input_row(p.now, p.past)?);
        }
        Matrix::from_vec(pairs.len(), 4 * self.n_antennas, data)
    }

    fn unpack(&self, out: &Matrix) -> Vec<Complex64> {
        let nr = self.n_antennas;
        let mut v = Vec::with_capacity(out.rows() * nr);
        for i in 0..out.rows() {
            let row = out.row(i);
            v.extend((0..nr).map(|k| Complex64::new(row[k], row[nr + k])));
        }
        v
    }

    pub fn predict(&self, now: &ChannelGraph, past: &ChannelGraph) -> Result<Vec<Complex64>> {
        self.predict_batch(&[GraphPair { now, past }])
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let get = |key: &str| {
            ck.manifest
                .get(key)
                .cloned()
                .ok_or_else(|| Error::Format(format!("checkpoint manifest lacks {key}")))
        };
        let config: FnnConfig = serde_json::from_value(get("fnn_config")?)?;
        let n_antennas: usize = serde_json::from_value(get("n_antennas")?)?;
        let mlp = ck.read_mlp("fnn", &config.spec(n_antennas), None)?;
        Ok(Self {
            config,
            n_antennas,
            mlp,
        })
    }
}

impl ChannelTracker for FnnModel {
    fn kind(&self) -> &'static str {
        "fnn"
    }

    fn predict_batch(&self, pairs: &[GraphPair]) -> Result<Vec<Complex64>> {
        let x = self.input_matrix(pairs)?;
        Ok(self.unpack(&self.mlp.infer(&x)?))
    }

    fn train_step_grads(
        &mut self,
        pairs: &[GraphPair],
        targets: &[Complex64],
        kappa: f64,
    ) -> Result<(LossOutput, Vec<f64>)> {
        let x = self.input_matrix(pairs)?;
        let (out, mut tape) = self.mlp.forward(&x, Mode::Train)?;
        let pred = self.unpack(&out);
        let loss = loss_mse_l2(&pred, targets, self.n_antennas, &self.weights_flat(), kappa)?;
        let nr = self.n_antennas;
        let mut d_out = Matrix::zeros(out.rows(), 2 * nr);
        for (idx, g) in loss.grad_pred.iter().enumerate() {
            let (i, k) = (idx / nr, idx % nr);
            d_out.set(i, k, g.re);
            d_out.set(i, nr + k, g.im);
        }
        let (grads, _) = self.mlp.backward(&mut tape, &d_out)?;
        let mut flat = Vec::with_capacity(grads.len());
        grads.flatten_into(&mut flat);
        add_weight_penalty_grad(&mut flat, &self.weight_mask(), &loss.grad_weights);
        Ok((loss, flat))
    }

    fn params_flat(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        self.mlp.params.flatten_into(&mut flat);
        flat
    }

    fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        let used = self.mlp.params.unflatten_from(flat)?;
        if used != flat.len() {
            return Err(Error::invalid("flat parameter length mismatch"));
        }
        Ok(())
    }

    fn weight_mask(&self) -> Vec<bool> {
        let mut mask = Vec::new();
        self.mlp.params.weight_mask_into(&mut mask);
        mask
    }

    fn to_checkpoint(&self, manifest: serde_json::Value) -> Checkpoint {
        let mut manifest = manifest;
        if let serde_json::Value::Object(map) = &mut manifest {
            map.insert("model".into(), "fnn".into());
            map.insert(
                "fnn_config".into(),
                serde_json::to_value(&self.config).expect("config serialises"),
            );
            map.insert("n_antennas".into(), self.n_antennas.into());
        }
        let mut ck = Checkpoint::new(manifest);
        ck.push_mlp("fnn", &self.mlp);
        ck
    }
}

/// Convenience used by tests: a zero-initialised FNN.
pub fn zeroed_fnn(config: FnnConfig, n_antennas: usize) -> Result<FnnModel> {
    Ok(FnnModel {
        mlp: Mlp::zeroed(config.spec(n_antennas))?,
        config,
        n_antennas,
    })
}
