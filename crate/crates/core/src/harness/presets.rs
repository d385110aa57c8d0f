use std::str::FromStr;

use super::config::{ExperimentConfig, Method, SweepAxis};
use crate::error::{Error, Result};

/// Named experiments reproduced by `chantrack reproduce`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// MSE versus window length.
    Table2,
    /// MSE versus pilot spacing, GNN against a slower-learning FNN.
    Table3,
    /// MSE versus SNR.
    Fig5,
    /// MSE versus user speed.
    Fig6,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Table2, Preset::Table3, Preset::Fig5, Preset::Fig6];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Table2 => "table2",
            Preset::Table3 => "table3",
            Preset::Fig5 => "fig5",
            Preset::Fig6 => "fig6",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown preset {s:?}; expected table2, table3, fig5 or fig6"
                ))
            })
    }
}

/// Desk-scale base: 16 antennas, 2000 training samples, 20 dB, 50 m/s,
/// three seeds.
pub fn desk_base() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.system.n_antennas = 16;
    c.training.n_train_samples = 2000;
    c.training.n_validation_samples = 500;
    c.training.n_epochs = 25;
    c.training.fnn_n_epochs = 150;
    c.training.patience = 15;
    c.training.kappa = 1e-4;
    c.evaluation.n_eval_samples = 2000;
    c.sweep.seeds = vec![0, 1, 2];
    c
}

/// Full-scale base: 32 antennas and 10 000 training samples.
pub fn full_base() -> ExperimentConfig {
    let mut c = desk_base();
    c.system.n_antennas = 32;
    c.training.n_train_samples = 10_000;
    c.training.n_validation_samples = 1000;
    c.training.n_epochs = 50;
    c.training.fnn_n_epochs = 200;
    c
}

pub fn preset_config(preset: Preset, full: bool) -> ExperimentConfig {
    let mut c = if full { full_base() } else { desk_base() };
    let s = &mut c.sweep;
    match preset {
        Preset::Table2 => {
            s.axis = SweepAxis::WindowLen;
            s.values = vec![5.0, 10.0, 20.0];
            s.methods = vec![Method::Gnn];
            c.layout.group_len = 5;
        }
        Preset::Table3 => {
            s.axis = SweepAxis::K;
            s.values = vec![2.0, 5.0, 10.0];
            s.methods = vec![Method::Gnn, Method::Fnn, Method::Ls];
            c.training.learning_rate = 1e-3;
            c.training.fnn_learning_rate = 1e-4;
        }
        Preset::Fig5 => {
            s.axis = SweepAxis::SnrDb;
            s.values = vec![0.0, 10.0, 20.0];
            s.methods = vec![Method::Gnn, Method::Fnn, Method::Ls];
        }
        Preset::Fig6 => {
            s.axis = SweepAxis::UserSpeed;
            s.values = vec![10.0, 30.0, 50.0];
            s.methods = vec![Method::Gnn, Method::Fnn, Method::Ls];
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_parse() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
            preset_config(p, false).validate().unwrap();
            preset_config(p, true).validate().unwrap();
        }
        assert!("fig7".parse::<Preset>().is_err());
    }
}
