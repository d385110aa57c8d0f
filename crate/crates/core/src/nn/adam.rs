//! ADAM with bias correction over a flat parameter vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step_count: 0,
        }
    }

    /// One update: `m ← β1·m + (1−β1)·g`, `v ← β2·v + (1−β2)·g²`,
    /// `θ ← θ − lr·m̂/(√v̂ + ε)`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::invalid(format!(
                "adam: {} params, {} grads, state sized for {}",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = AdamState::new(3, AdamConfig::default());
        let mut p = vec![0.5, -1.0, 2.0];
        s.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut s = AdamState::new(1, cfg);
        let mut p = vec![0.0];
        s.step(&mut p, &[1.0]).unwrap();
        // m̂ = 1, v̂ = 1  =>  Δ = −0.1 / (1 + 1e−8)
        assert!((p[0] - (-0.1 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut s = AdamState::new(2, AdamConfig::default());
            let mut p = vec![1.0, -1.0];
            for k in 0..50 {
                let g = [p[0] * 0.3 + k as f64 * 1e-3, (p[1] - 0.2).sin()];
                s.step(&mut p, &g).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn scale_invariance_under_constant_gradients() {
        let cfg = AdamConfig::default();
        let mut a = AdamState::new(3, cfg);
        let mut b = AdamState::new(3, cfg);
        let g = [0.3, -2.0, 1e-3];
        let gb: Vec<f64> = g.iter().map(|x| x * 17.0).collect();
        let (mut pa, mut pb) = (vec![0.0; 3], vec![0.0; 3]);
        for _ in 0..100 {
            let (qa, qb) = (pa.clone(), pb.clone());
            a.step(&mut pa, &g).unwrap();
            b.step(&mut pb, &gb).unwrap();
            for i in 0..3 {
                let (da, db) = (pa[i] - qa[i], pb[i] - qb[i]);
                assert_eq!(da.signum(), db.signum());
            }
        }
        for i in 0..3 {
            assert!((pa[i] / pb[i] - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let mut s = AdamState::new(2, AdamConfig::default());
        assert!(s.step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }
}
