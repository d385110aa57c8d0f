//! Dataset generation, training, evaluation and parameter sweeps.

pub mod config;
pub mod dataset;
pub mod evaluate;
pub mod model;
pub mod presets;
pub mod sweep;
pub mod train;

use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, Method, SweepAxis};
pub use dataset::{
    generate_dataset, read_dataset, write_dataset, DatasetSample, SampleMeta, Split,
};
pub use evaluate::{evaluate, evaluate_ls, read_metrics_csv, write_metrics_csv, MetricsRow};
pub use model::AnyModel;
pub use presets::{preset_config, Preset};
pub use sweep::{run_point, run_sweep, PointData};
pub use train::{train, write_history_csv, EpochRecord, TrainOptions, TrainReport};

/// Crate version plus the `git describe` of the build when available.
pub fn version_string() -> &'static str {
    static VERSION: std::sync::OnceLock<String> = std::sync::OnceLock::new();
    VERSION.get_or_init(|| match option_env!("CHANTRACK_GIT_DESCRIBE") {
        Some(g) if !g.is_empty() => format!("{} ({g})", env!("CARGO_PKG_VERSION")),
        _ => env!("CARGO_PKG_VERSION").to_string(),
    })
}

/// Written as `run.json` next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub overrides: Vec<String>,
    pub config: ExperimentConfig,
    /// Command-specific extras such as input paths.
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig, overrides: &[String]) -> Self {
        Self {
            command: command.to_string(),
            version: version_string().to_string(),
            seed: config.training.seed,
            overrides: overrides.to_vec(),
            config: config.clone(),
            extra: serde_json::Value::Null,
        }
    }

    pub fn write(&self, path: &std::path::Path) -> crate::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
