use std::path::Path;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use super::dataset::DatasetSample;
use super::evaluate::evaluate;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState};
use crate::rng::{stream_rng, Stream};
use crate::tracker::{ChannelTracker, GraphPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub kappa: f64,
    pub n_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl TrainOptions {
    pub fn from_config(cfg: &ExperimentConfig, method: Method) -> Self {
        let t = &cfg.training;
        Self {
            batch_size: t.batch_size,
            learning_rate: t.learning_rate_for(method),
            kappa: t.kappa,
            n_epochs: t.n_epochs_for(method),
            patience: t.patience,
            seed: t.seed,
        }
    }
}

/// One line of the loss history. Training terms are sample-weighted means
/// over the epoch's minibatches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub mse: f64,
    pub penalty: f64,
    pub val_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (1-based; 0 when no epoch ran).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Minibatch index ranges. A trailing batch of one sample is folded into the
/// previous batch since batch norm needs at least two rows.
fn batch_bounds(n: usize, batch_size: usize) -> Vec<(usize, usize)> {
    let mut bounds: Vec<(usize, usize)> = (0..n)
        .step_by(batch_size)
        .map(|s| (s, (s + batch_size).min(n)))
        .collect();
    if bounds.len() > 1 && bounds.last().is_some_and(|&(s, e)| e - s < 2) {
        let (_, e) = bounds.pop().expect("non-empty");
        bounds.last_mut().expect("non-empty").1 = e;
    }
    bounds
}

/// Minibatch ADAM on the regularised MSE. Each epoch is one pass over a
/// fresh shuffle. With a validation set, the parameters of the best
/// validation epoch are restored at the end and training stops after
/// `patience` epochs without improvement.
pub fn train<T>(
    model: &mut T,
    train_set: &[DatasetSample],
    val_set: &[DatasetSample],
    opts: &TrainOptions,
) -> Result<TrainReport>
where
    T: ChannelTracker + Clone,
{
    if train_set.len() < 2 {
        return Err(Error::invalid("training needs at least two samples"));
    }
    if opts.batch_size < 2 {
        return Err(Error::invalid("batch size must be at least 2"));
    }
    let mut adam = AdamState::new(
        model.n_params(),
        AdamConfig {
            learning_rate: opts.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let bounds = batch_bounds(train_set.len(), opts.batch_size);
    let mut history = Vec::with_capacity(opts.n_epochs);
    let mut best: Option<(f64, usize, T)> = None;
    let mut stopped_early = false;
    let mut params = model.params_flat();

    for epoch in 1..=opts.n_epochs {
        order.sort_unstable();
        order.shuffle(&mut stream_rng(opts.seed, Stream::Shuffle, epoch as u64));
        let (mut loss_sum, mut mse_sum, mut pen_sum) = (0.0, 0.0, 0.0);
        for &(s, e) in &bounds {
            let batch: Vec<&DatasetSample> = order[s..e].iter().map(|&i| &train_set[i]).collect();
            let pairs: Vec<GraphPair> = batch.iter().map(|d| d.pair()).collect();
            let targets: Vec<Complex64> = batch
                .iter()
                .flat_map(|d| d.target.iter().copied())
                .collect();
            let (out, grads) = model.train_step_grads(&pairs, &targets, opts.kappa)?;
            if !out.loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged { epoch });
            }
            let w = (e - s) as f64;
            loss_sum += w * out.loss;
            mse_sum += w * out.mse;
            pen_sum += w * out.penalty;
            adam.step(&mut params, &grads)?;
            model.set_params_flat(&params)?;
        }
        let n = train_set.len() as f64;
        let val_mse = if val_set.is_empty() {
            None
        } else {
            Some(evaluate(model, val_set)?)
        };
        history.push(EpochRecord {
            epoch,
            loss: loss_sum / n,
            mse: mse_sum / n,
            penalty: pen_sum / n,
            val_mse,
        });
        if let Some(v) = val_mse {
            if !v.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, epoch, model.clone()));
            } else if opts.patience > 0 && epoch - best.as_ref().expect("set").1 >= opts.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let best_epoch = match best {
        Some((_, epoch, m)) => {
            *model = m;
            epoch
        }
        None => history.len(),
    };
    Ok(TrainReport {
        history,
        best_epoch,
        stopped_early,
    })
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "loss", "mse", "penalty", "val_mse"])?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            r.loss.to_string(),
            r.mse.to_string(),
            r.penalty.to_string(),
            r.val_mse.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_cover_everything_without_singletons() {
        assert_eq!(batch_bounds(10, 4), vec![(0, 4), (4, 8), (8, 10)]);
        assert_eq!(batch_bounds(9, 4), vec![(0, 4), (4, 9)]);
        assert_eq!(batch_bounds(3, 20), vec![(0, 3)]);
        for n in 2..50 {
            for b in 2..8 {
                let bs = batch_bounds(n, b);
                assert_eq!(bs[0].0, 0);
                assert_eq!(bs.last().unwrap().1, n);
                assert!(bs.windows(2).all(|w| w[0].1 == w[1].0));
                assert!(bs.iter().all(|&(s, e)| e - s >= 2));
            }
        }
    }
}
