//! Checkpoint container: a JSON document holding a free-form manifest and a
//! list of named, row-major `f64` tensors.
//!
//! ```json
//! {
//!   "format": "chantrack-checkpoint",
//!   "version": 1,
//!   "manifest": { ... },
//!   "tensors": [ { "name": "encoder_edge.dense0.weight", "shape": [4, 16], "values": [ ... ] }, ... ]
//! }
//! ```
//!
//! Per MLP with prefix `p`: `p.dense{l}.weight` (`[n_in, n_out]`),
//! `p.dense{l}.bias` (`[n_out]`), and when batch norm is present `p.bn.scale`,
//! `p.bn.shift`, `p.bn.running_mean`, `p.bn.running_var` (`[channels]`).
//! Optimizer state is stored as `optimizer.first_moment`,
//! `optimizer.second_moment` and `optimizer.step_count` (`[1]`).
//! Floats are written in shortest round-trip form, so save → load is
//! bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::mlp::{Mlp, MlpParams, MlpSpec};
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "chantrack-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub manifest: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(manifest: serde_json::Value) -> Self {
        Self {
            format: FORMAT_TAG.to_string(),
            version: FORMAT_VERSION,
            manifest,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            shape,
            values,
        });
    }

    pub fn get(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("checkpoint has no tensor `{name}`")))
    }

    fn get_values(&self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let t = self.get(name)?;
        if t.shape != shape {
            return Err(Error::Format(format!(
                "tensor `{name}` has shape {:?}, expected {shape:?}",
                t.shape
            )));
        }
        Ok(t.values.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        if let Some(t) = self
            .tensors
            .iter()
            .find(|t| t.values.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Format(format!(
                "tensor `{}` has non-finite values",
                t.name
            )));
        }
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != FORMAT_TAG {
            return Err(Error::Format(format!(
                "unknown checkpoint format `{}`",
                ck.format
            )));
        }
        if ck.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {}",
                ck.version
            )));
        }
        for t in &ck.tensors {
            if t.shape.iter().product::<usize>() != t.values.len() {
                return Err(Error::Format(format!(
                    "tensor `{}` shape/value mismatch",
                    t.name
                )));
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn push_mlp(&mut self, prefix: &str, mlp: &Mlp) {
        for (l, d) in mlp.params.dense.iter().enumerate() {
            self.push(
                format!("{prefix}.dense{l}.weight"),
                vec![d.n_in, d.n_out],
                d.weight.clone(),
            );
            self.push(
                format!("{prefix}.dense{l}.bias"),
                vec![d.n_out],
                d.bias.clone(),
            );
        }
        if let Some(bn) = &mlp.bn {
            let c = bn.running_mean.len();
            self.push(
                format!("{prefix}.bn.scale"),
                vec![c],
                mlp.params.bn_scale.clone(),
            );
            self.push(
                format!("{prefix}.bn.shift"),
                vec![c],
                mlp.params.bn_shift.clone(),
            );
            self.push(
                format!("{prefix}.bn.running_mean"),
                vec![c],
                bn.running_mean.clone(),
            );
            self.push(
                format!("{prefix}.bn.running_var"),
                vec![c],
                bn.running_var.clone(),
            );
        }
    }

    /// Rebuilds an MLP of the given spec. Batch-norm hyperparameters are taken
    /// from `template` when given.
    pub fn read_mlp(&self, prefix: &str, spec: &MlpSpec, template: Option<&Mlp>) -> Result<Mlp> {
        let mut mlp = Mlp::zeroed(spec.clone())?;
        if let (Some(t), Some(bn)) = (template.and_then(|t| t.bn.as_ref()), mlp.bn.as_mut()) {
            bn.momentum = t.momentum;
            bn.epsilon = t.epsilon;
        }
        let mut params = MlpParams::zeros(spec);
        for (l, d) in params.dense.iter_mut().enumerate() {
            d.weight = self.get_values(&format!("{prefix}.dense{l}.weight"), &[d.n_in, d.n_out])?;
            d.bias = self.get_values(&format!("{prefix}.dense{l}.bias"), &[d.n_out])?;
        }
        if let Some(bn) = mlp.bn.as_mut() {
            let c = [spec.output_dim];
            params.bn_scale = self.get_values(&format!("{prefix}.bn.scale"), &c)?;
            params.bn_shift = self.get_values(&format!("{prefix}.bn.shift"), &c)?;
            bn.running_mean = self.get_values(&format!("{prefix}.bn.running_mean"), &c)?;
            bn.running_var = self.get_values(&format!("{prefix}.bn.running_var"), &c)?;
        }
        mlp.params = params;
        Ok(mlp)
    }

    pub fn push_optimizer(&mut self, state: &AdamState) {
        let n = state.first_moment.len();
        self.push(
            "optimizer.first_moment",
            vec![n],
            state.first_moment.clone(),
        );
        self.push(
            "optimizer.second_moment",
            vec![n],
            state.second_moment.clone(),
        );
        self.push(
            "optimizer.step_count",
            vec![1],
            vec![state.step_count as f64],
        );
    }

    pub fn read_optimizer(&self, config: AdamConfig) -> Result<Option<AdamState>> {
        if self.get("optimizer.first_moment").is_err() {
            return Ok(None);
        }
        let n = self.get("optimizer.first_moment")?.values.len();
        Ok(Some(AdamState {
            config,
            first_moment: self.get_values("optimizer.first_moment", &[n])?,
            second_moment: self.get_values("optimizer.second_moment", &[n])?,
            step_count: self.get_values("optimizer.step_count", &[1])?[0] as u64,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::nn::mlp::Mode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_round_trip_is_bit_exact() {
        let spec = MlpSpec::new(3, &[5, 4], 2)
            .with_output_batchnorm()
            .with_final_linear(2);
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let mut mlp = Mlp::new(spec.clone(), &mut r).unwrap();
        let x = Matrix::from_vec(4, 3, (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        mlp.forward(&x, Mode::Train).unwrap();

        let mut ck = Checkpoint::new(serde_json::json!({"kind": "test"}));
        ck.push_mlp("m", &mlp);
        let mut opt = AdamState::new(3, AdamConfig::default());
        opt.step(&mut [0.1, 0.2, 0.3], &[1.0 / 3.0, -2.5e-7, 9.0])
            .unwrap();
        ck.push_optimizer(&opt);

        let text = ck.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ck);
        let restored = back.read_mlp("m", &spec, Some(&mlp)).unwrap();
        assert_eq!(restored, mlp);
        assert_eq!(
            back.read_optimizer(AdamConfig::default()).unwrap().unwrap(),
            opt
        );
    }

    #[test]
    fn rejects_wrong_format_and_shapes() {
        let mut ck = Checkpoint::new(serde_json::Value::Null);
        ck.format = "other".into();
        assert!(Checkpoint::from_json(&serde_json::to_string(&ck).unwrap()).is_err());

        let mut ck = Checkpoint::new(serde_json::Value::Null);
        ck.push("x", vec![2, 2], vec![1.0; 3]);
        assert!(Checkpoint::from_json(&serde_json::to_string(&ck).unwrap()).is_err());

        let mut ck = Checkpoint::new(serde_json::Value::Null);
        ck.push("x", vec![1], vec![f64::NAN]);
        assert!(ck.to_json().is_err());
    }
}
