use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::dataset::DatasetSample;
use crate::error::{Error, Result};
use crate::matrix::pairwise_sum;
use crate::tracker::{ChannelTracker, GraphPair};

/// Samples per inference call. Inference is row-independent, so the value
/// only affects memory use, not results.
pub const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub sweep_axis: String,
    pub sweep_value: f64,
    pub method: String,
    pub mse: f64,
    pub n_samples: usize,
    pub wall_time_s: f64,
    pub seed: u64,
}

/// `‖h − ĥ‖² / Nr` for one sample.
pub fn sample_error(pred: &[Complex64], target: &[Complex64]) -> f64 {
    let s: Vec<f64> = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (t - p).norm_sqr())
        .collect();
    pairwise_sum(&s) / target.len() as f64
}

/// Mean of per-sample errors, accumulated in sorted order so the result does
/// not depend on the order of the samples.
pub fn mean_error(mut errors: Vec<f64>) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    errors.sort_by(f64::total_cmp);
    Ok(pairwise_sum(&errors) / errors.len() as f64)
}

/// MSE per complex element of an arbitrary predictor.
pub fn evaluate_with<F>(data: &[DatasetSample], mut predict: F) -> Result<f64>
where
    F: FnMut(&[DatasetSample]) -> Result<Vec<Complex64>>,
{
    let mut errors = Vec::with_capacity(data.len());
    for chunk in data.chunks(EVAL_CHUNK) {
        let pred = predict(chunk)?;
        let nr = chunk[0].target.len();
        if pred.len() != nr * chunk.len() {
            return Err(Error::invalid(
                "predictor returned the wrong number of values",
            ));
        }
        for (s, p) in chunk.iter().zip(pred.chunks(nr)) {
            errors.push(sample_error(p, &s.target));
        }
    }
    mean_error(errors)
}

/// Inference-mode MSE of a learned tracker, without the regulariser.
pub fn evaluate<T: ChannelTracker + ?Sized>(model: &T, data: &[DatasetSample]) -> Result<f64> {
    evaluate_with(data, |chunk| {
        let pairs: Vec<GraphPair> = chunk.iter().map(DatasetSample::pair).collect();
        model.predict_batch(&pairs)
    })
}

/// MSE of the held LS estimate.
pub fn evaluate_ls(data: &[DatasetSample]) -> Result<f64> {
    evaluate_with(data, |chunk| {
        Ok(chunk.iter().flat_map(|s| s.ls.iter().copied()).collect())
    })
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record([
            "sweep_axis",
            "sweep_value",
            "method",
            "mse",
            "n_samples",
            "wall_time_s",
            "seed",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}
