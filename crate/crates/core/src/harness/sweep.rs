use std::time::Instant;

use super::config::{ExperimentConfig, Method};
use super::dataset::{generate_dataset, DatasetSample, Split};
use super::evaluate::{evaluate, evaluate_ls, MetricsRow};
use super::model::AnyModel;
use super::train::{train, TrainOptions, TrainReport};
use crate::error::Result;

/// Train, validation and evaluation sets for one config. Every method at a
/// point sees exactly these samples.
#[derive(Debug, Clone)]
pub struct PointData {
    pub train: Vec<DatasetSample>,
    pub validation: Vec<DatasetSample>,
    pub eval: Vec<DatasetSample>,
}

impl PointData {
    pub fn generate(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            train: generate_dataset(cfg, Split::Train, cfg.training.n_train_samples)?,
            validation: generate_dataset(
                cfg,
                Split::Validation,
                cfg.training.n_validation_samples,
            )?,
            eval: generate_dataset(cfg, Split::Eval, cfg.evaluation.n_eval_samples)?,
        })
    }
}

pub struct TrainedModel {
    pub model: AnyModel,
    pub report: TrainReport,
    pub train_time_s: f64,
}

pub fn train_method(
    cfg: &ExperimentConfig,
    method: Method,
    data: &PointData,
) -> Result<TrainedModel> {
    let start = Instant::now();
    let mut model = AnyModel::build(cfg, method)?;
    let report = train(
        &mut model,
        &data.train,
        &data.validation,
        &TrainOptions::from_config(cfg, method),
    )?;
    Ok(TrainedModel {
        model,
        report,
        train_time_s: start.elapsed().as_secs_f64(),
    })
}

/// `(method, mse, wall time)` for every method at one fully resolved config.
pub fn run_point(cfg: &ExperimentConfig, methods: &[Method]) -> Result<Vec<(Method, f64, f64)>> {
    let data = PointData::generate(cfg)?;
    methods
        .iter()
        .map(|&m| {
            if m.is_learned() {
                let t = train_method(cfg, m, &data)?;
                let start = Instant::now();
                let mse = evaluate(&t.model, &data.eval)?;
                Ok((m, mse, t.train_time_s + start.elapsed().as_secs_f64()))
            } else {
                let start = Instant::now();
                Ok((m, evaluate_ls(&data.eval)?, start.elapsed().as_secs_f64()))
            }
        })
        .collect()
}

/// Runs every `(value, seed, method)` combination of the config's sweep.
/// `on_row` is called as each row completes.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    mut on_row: impl FnMut(&MetricsRow),
) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    let sweep = &cfg.sweep;
    let axis = sweep.axis;
    let mut rows = Vec::new();
    let mut push = |rows: &mut Vec<MetricsRow>,
                    value: f64,
                    seed: u64,
                    m: Method,
                    mse: f64,
                    n: usize,
                    t: f64| {
        let row = MetricsRow {
            sweep_axis: axis.name().into(),
            sweep_value: value,
            method: m.name().into(),
            mse,
            n_samples: n,
            wall_time_s: t,
            seed,
        };
        on_row(&row);
        rows.push(row);
    };

    if sweep.train_matched || !axis.is_condition() {
        for &value in &sweep.values {
            for &seed in &sweep.seeds {
                let point = cfg.with_axis_value(axis, value)?.with_seed(seed);
                point.validate()?;
                for (m, mse, t) in run_point(&point, &sweep.methods)? {
                    push(
                        &mut rows,
                        value,
                        seed,
                        m,
                        mse,
                        point.evaluation.n_eval_samples,
                        t,
                    );
                }
            }
        }
        return Ok(rows);
    }

    // Mismatched mode: one model per seed and method, trained at the base
    // point, evaluated on each value's own evaluation set.
    for &seed in &sweep.seeds {
        let base = cfg.with_seed(seed);
        let data = PointData::generate(&base)?;
        let trained: Vec<(Method, Option<TrainedModel>)> = sweep
            .methods
            .iter()
            .map(|&m| {
                Ok((
                    m,
                    if m.is_learned() {
                        Some(train_method(&base, m, &data)?)
                    } else {
                        None
                    },
                ))
            })
            .collect::<Result<_>>()?;
        for &value in &sweep.values {
            let point = base.with_axis_value(axis, value)?;
            let eval = generate_dataset(&point, Split::Eval, point.evaluation.n_eval_samples)?;
            for (m, t) in &trained {
                let start = Instant::now();
                let mse = match t {
                    Some(t) => evaluate(&t.model, &eval)?,
                    None => evaluate_ls(&eval)?,
                };
                let wall =
                    start.elapsed().as_secs_f64() + t.as_ref().map_or(0.0, |t| t.train_time_s);
                push(&mut rows, value, seed, *m, mse, eval.len(), wall);
            }
        }
    }
    Ok(rows)
}

/// Median over seeds for each `(value, method)`, in sweep order.
pub fn median_by_point(rows: &[MetricsRow]) -> Vec<(f64, String, f64)> {
    let mut keys: Vec<(f64, String)> = Vec::new();
    for r in rows {
        if !keys
            .iter()
            .any(|(v, m)| *v == r.sweep_value && *m == r.method)
        {
            keys.push((r.sweep_value, r.method.clone()));
        }
    }
    keys.into_iter()
        .map(|(v, m)| {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.sweep_value == v && r.method == m)
                .map(|r| r.mse)
                .collect();
            (v, m, median(&vals))
        })
        .collect()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
