use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::FnnConfig;
use crate::channel_sim::{FrameLayout, SystemConfig};
use crate::error::{Error, Result};
use crate::gnn::GnnConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gnn,
    Fnn,
    Ls,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gnn => "gnn",
            Method::Fnn => "fnn",
            Method::Ls => "ls",
        }
    }

    pub fn is_learned(self) -> bool {
        self != Method::Ls
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gnn" => Ok(Method::Gnn),
            "fnn" => Ok(Method::Fnn),
            "ls" => Ok(Method::Ls),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// Number of LS columns in each correlation window.
    pub window_len: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { window_len: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Model trained by `train`.
    pub kind: Method,
    pub gnn: GnnConfig,
    pub fnn: FnnConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: Method::Gnn,
            gnn: GnnConfig::default(),
            fnn: FnnConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate for the FNN when it differs from `learning_rate`;
    /// zero means "same".
    pub fnn_learning_rate: f64,
    pub kappa: f64,
    pub n_train_samples: usize,
    pub n_validation_samples: usize,
    pub n_epochs: usize,
    /// Epoch cap for the FNN when it differs from `n_epochs`; zero means
    /// "same".
    pub fnn_n_epochs: usize,
    /// Stop after this many epochs without a validation improvement; zero
    /// disables early stopping.
    pub patience: usize,
    /// Data positions drawn from each simulated frame.
    pub samples_per_frame: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 20,
            learning_rate: 1e-3,
            fnn_learning_rate: 0.0,
            kappa: 0.1,
            n_train_samples: 10_000,
            n_validation_samples: 500,
            n_epochs: 50,
            fnn_n_epochs: 0,
            patience: 10,
            samples_per_frame: 1,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn learning_rate_for(&self, method: Method) -> f64 {
        if method == Method::Fnn && self.fnn_learning_rate > 0.0 {
            self.fnn_learning_rate
        } else {
            self.learning_rate
        }
    }

    pub fn n_epochs_for(&self, method: Method) -> usize {
        if method == Method::Fnn && self.fnn_n_epochs > 0 {
            self.fnn_n_epochs
        } else {
            self.n_epochs
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub n_eval_samples: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            n_eval_samples: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    WindowLen,
    K,
    LearningRate,
    SnrDb,
    UserSpeed,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::WindowLen => "window_len",
            SweepAxis::K => "k",
            SweepAxis::LearningRate => "learning_rate",
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::UserSpeed => "user_speed",
        }
    }

    /// Whether the axis only changes the channel conditions, so a model
    /// trained at the base point can be evaluated at every value.
    pub fn is_condition(self) -> bool {
        matches!(self, SweepAxis::SnrDb | SweepAxis::UserSpeed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Retrain at every sweep value. When false on an SNR or speed sweep, one
    /// model per seed is trained at the base config and evaluated everywhere.
    pub train_matched: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: SweepAxis::SnrDb,
            values: vec![0.0, 10.0, 20.0],
            methods: vec![Method::Gnn, Method::Fnn, Method::Ls],
            seeds: vec![0],
            train_matched: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub layout: FrameLayout,
    pub graph: GraphConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub evaluation: EvaluationConfig,
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    /// Pilot spacing, which is also the lag between the two graphs.
    pub fn lag(&self) -> usize {
        self.layout.group_len
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        self.system.validate().map_err(cfg_err)?;
        self.layout.validate().map_err(cfg_err)?;
        self.model.gnn.validate().map_err(cfg_err)?;
        let t = &self.training;
        if t.batch_size < 2 {
            return Err(Error::Config(
                "training.batch_size must be at least 2".into(),
            ));
        }
        if !(t.learning_rate >= 0.0) || !(t.fnn_learning_rate >= 0.0) {
            return Err(Error::Config("learning rates must be non-negative".into()));
        }
        if !(t.kappa >= 0.0) {
            return Err(Error::Config("training.kappa must be non-negative".into()));
        }
        if t.samples_per_frame == 0 {
            return Err(Error::Config(
                "training.samples_per_frame must be positive".into(),
            ));
        }
        if self.graph.window_len < 2 {
            return Err(Error::Config("graph.window_len must be at least 2".into()));
        }
        if self.model.fnn.hidden.contains(&0) {
            return Err(Error::Config("fnn hidden widths must be positive".into()));
        }
        let first = self.first_sample_index();
        if !(first..self.layout.len()).any(|n| !self.layout.is_pilot(n)) {
            return Err(Error::Config(format!(
                "no data position at or after {first} in a frame of {} symbols",
                self.layout.len()
            )));
        }
        if self.sweep.values.is_empty()
            || self.sweep.methods.is_empty()
            || self.sweep.seeds.is_empty()
        {
            return Err(Error::Config(
                "sweep values, methods and seeds must be non-empty".into(),
            ));
        }
        Ok(())
    }

    /// Samples are drawn at data positions `n ≥ max(L, K)`.
    pub fn first_sample_index(&self) -> usize {
        self.graph.window_len.max(self.lag())
    }

    /// Applies one sweep value to a copy of this config.
    pub fn with_axis_value(&self, axis: SweepAxis, value: f64) -> Result<Self> {
        let mut c = self.clone();
        let as_count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!(
                    "{} needs a positive integer, got {v}",
                    axis.name()
                )))
            }
        };
        match axis {
            SweepAxis::WindowLen => c.graph.window_len = as_count(value)?,
            SweepAxis::K => c.layout.group_len = as_count(value)?,
            SweepAxis::LearningRate => {
                c.training.learning_rate = value;
                c.training.fnn_learning_rate = 0.0;
            }
            SweepAxis::SnrDb => c.system.snr_db = value,
            SweepAxis::UserSpeed => c.system.user_speed = value,
        }
        Ok(c)
    }

    /// Uses `seed` for both the channel data and the training randomness.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.system.seed = seed;
        c.training.seed = seed;
        c
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies `section.key=value` overrides. Values are parsed as TOML
    /// literals, falling back to a plain string. Every key must already
    /// exist in the resolved config.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
            let path: Vec<&str> = key.trim().split('.').collect();
            let (leaf, parents) = path.split_last().expect("split yields one part");
            let mut table = &mut root;
            for p in parents {
                table = table
                    .get_mut(*p)
                    .and_then(|v| v.as_table_mut())
                    .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
            }
            if !table.contains_key(*leaf) {
                return Err(Error::Config(format!("unknown config key {key:?}")));
            }
            table.insert(leaf.to_string(), parse_literal(raw.trim()));
        }
        let cfg: Self = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(cfg)
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = ExperimentConfig::default();
        let text = c.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn overrides_apply_typed_values() {
        let c = ExperimentConfig::default()
            .with_overrides(&[
                "training.learning_rate=1e-4".into(),
                "system.n_antennas=16".into(),
                "model.kind=fnn".into(),
                "sweep.values=[2, 5, 10]".into(),
                "sweep.axis=k".into(),
            ])
            .unwrap();
        assert_eq!(c.training.learning_rate, 1e-4);
        assert_eq!(c.system.n_antennas, 16);
        assert_eq!(c.model.kind, Method::Fnn);
        assert_eq!(c.sweep.values, vec![2.0, 5.0, 10.0]);
        assert_eq!(c.sweep.axis, SweepAxis::K);
    }

    #[test]
    fn unknown_override_key_is_rejected() {
        let c = ExperimentConfig::default();
        assert!(c.with_overrides(&["training.lr=1".into()]).is_err());
        assert!(c.with_overrides(&["nothing.here=1".into()]).is_err());
        assert!(c.with_overrides(&["no_equals_sign".into()]).is_err());
    }

    #[test]
    fn unknown_file_key_is_rejected() {
        assert!(ExperimentConfig::from_toml_str("[training]\nbogus = 1\n").is_err());
    }

    #[test]
    #[allow(clippy::field_reassign_with_default)]
    fn validation_catches_small_batches_and_short_frames() {
        let mut c = ExperimentConfig::default();
        c.training.batch_size = 1;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.layout = FrameLayout {
            n_blocks: 1,
            groups_per_block: 1,
            group_len: 4,
        };
        c.graph.window_len = 10;
        assert!(c.validate().is_err());
    }

    #[test]
    fn axis_values_land_in_the_right_field() {
        let c = ExperimentConfig::default();
        assert_eq!(c.with_axis_value(SweepAxis::K, 5.0).unwrap().lag(), 5);
        assert_eq!(
            c.with_axis_value(SweepAxis::WindowLen, 20.0)
                .unwrap()
                .graph
                .window_len,
            20
        );
        assert_eq!(
            c.with_axis_value(SweepAxis::UserSpeed, 10.0)
                .unwrap()
                .system
                .user_speed,
            10.0
        );
        assert!(c.with_axis_value(SweepAxis::K, 2.5).is_err());
    }
}
