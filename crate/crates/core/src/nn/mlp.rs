//! Multilayer perceptron with an optional batch-normalised output layer and
//! an optional trailing linear projection, plus its reverse-mode gradient.
//!
//! Layer stack for a spec with hidden widths `h_1..h_m`, output width `o` and
//! trailing width `t`:
//!
//! ```text
//! x -> [dense(h_1) -> relu] ... [dense(h_m) -> relu] -> dense(o) -> (relu)? -> (bn)? -> (dense(t))?
//! ```

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub final_extra_linear: Option<usize>,
    pub use_output_batchnorm: bool,
    /// Apply ReLU to the output layer before batch norm.
    #[serde(default)]
    pub relu_before_bn: bool,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: &[usize], output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            output_dim,
            final_extra_linear: None,
            use_output_batchnorm: false,
            relu_before_bn: false,
        }
    }

    pub fn with_output_batchnorm(mut self) -> Self {
        self.use_output_batchnorm = true;
        self
    }

    pub fn with_final_linear(mut self, width: usize) -> Self {
        self.final_extra_linear = Some(width);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let dims_ok = self.input_dim >= 1
            && self.output_dim >= 1
            && self.hidden_dims.iter().all(|&d| d >= 1)
            && self.final_extra_linear.is_none_or(|d| d >= 1);
        if dims_ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "MLP dimensions must be positive: {self:?}"
            )))
        }
    }

    /// Width of the network's final output.
    pub fn final_dim(&self) -> usize {
        self.final_extra_linear.unwrap_or(self.output_dim)
    }

    /// `(in, out)` for every dense layer, in order.
    pub fn dense_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            shapes.push((prev, h));
            prev = h;
        }
        shapes.push((prev, self.output_dim));
        if let Some(t) = self.final_extra_linear {
            shapes.push((self.output_dim, t));
        }
        shapes
    }

    fn n_relu_layers(&self) -> usize {
        self.hidden_dims.len()
    }
}

/// Fully connected layer; `weight` is `n_in × n_out` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weight: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    fn he_normal<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (2.0 / n_in as f64).sqrt()).expect("finite std");
        Self {
            n_in,
            n_out,
            weight: (0..n_in * n_out).map(|_| normal.sample(rng)).collect(),
            bias: vec![0.0; n_out],
        }
    }

    fn glorot_uniform<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let uniform = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        Self {
            n_in,
            n_out,
            weight: (0..n_in * n_out).map(|_| uniform.sample(rng)).collect(),
            bias: vec![0.0; n_out],
        }
    }

    fn forward(&self, x: &Matrix) -> Matrix {
        x.affine(&self.weight, &self.bias, self.n_out)
    }
}

/// Learnable parameters of one MLP. Also used to hold gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub dense: Vec<Dense>,
    /// Batch-norm `γ`; empty when the spec has no batch norm.
    pub bn_scale: Vec<f64>,
    /// Batch-norm `β`; empty when the spec has no batch norm.
    pub bn_shift: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let bn_len = if spec.use_output_batchnorm {
            spec.output_dim
        } else {
            0
        };
        Self {
            dense: spec
                .dense_shapes()
                .into_iter()
                .map(|(i, o)| Dense::zeros(i, o))
                .collect(),
            bn_scale: vec![0.0; bn_len],
            bn_shift: vec![0.0; bn_len],
        }
    }

    pub fn len(&self) -> usize {
        self.dense
            .iter()
            .map(|d| d.weight.len() + d.bias.len())
            .sum::<usize>()
            + self.bn_scale.len()
            + self.bn_shift.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends all values: per layer weight then bias, then `γ`, then `β`.
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for d in &self.dense {
            out.extend_from_slice(&d.weight);
            out.extend_from_slice(&d.bias);
        }
        out.extend_from_slice(&self.bn_scale);
        out.extend_from_slice(&self.bn_shift);
    }

    /// Appends `true` for dense weights, `false` for everything else, in
    /// [`flatten_into`](Self::flatten_into) order.
    pub fn weight_mask_into(&self, out: &mut Vec<bool>) {
        for d in &self.dense {
            out.extend(std::iter::repeat_n(true, d.weight.len()));
            out.extend(std::iter::repeat_n(false, d.bias.len()));
        }
        out.extend(std::iter::repeat_n(
            false,
            self.bn_scale.len() + self.bn_shift.len(),
        ));
    }

    /// Reads values back in flatten order; returns how many were consumed.
    pub fn unflatten_from(&mut self, flat: &[f64]) -> Result<usize> {
        if flat.len() < self.len() {
            return Err(Error::invalid("flat parameter vector too short"));
        }
        let mut off = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat[off..off + dst.len()]);
            off += dst.len();
        };
        for d in &mut self.dense {
            take(&mut d.weight);
            take(&mut d.bias);
        }
        take(&mut self.bn_scale);
        take(&mut self.bn_shift);
        Ok(off)
    }

    fn add_assign(&mut self, other: &MlpParams) {
        for (a, b) in self.dense.iter_mut().zip(&other.dense) {
            a.weight
                .iter_mut()
                .zip(&b.weight)
                .for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
        self.bn_scale
            .iter_mut()
            .zip(&other.bn_scale)
            .for_each(|(x, y)| *x += y);
        self.bn_shift
            .iter_mut()
            .zip(&other.bn_shift)
            .for_each(|(x, y)| *x += y);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    /// Weight kept on the old running value at each update.
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNormState {
    pub const DEFAULT_MOMENTUM: f64 = 0.99;
    pub const DEFAULT_EPSILON: f64 = 1e-5;

    pub fn new(channels: usize, momentum: f64, epsilon: f64) -> Self {
        Self {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum,
            epsilon,
        }
    }
}

#[derive(Debug, Clone)]
struct BnRecord {
    mode: Mode,
    xhat: Matrix,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
struct TapeData {
    /// Input to each dense layer.
    inputs: Vec<Matrix>,
    /// Post-ReLU output layer values (only with `relu_before_bn`).
    output_relu: Option<Matrix>,
    bn: Option<BnRecord>,
}

/// Activations recorded by one forward pass; consumed by one backward pass.
#[derive(Debug, Clone)]
pub struct MlpTape {
    data: Option<TapeData>,
}

impl MlpTape {
    /// A tape with nothing to replay, for skipped forward passes.
    pub fn empty() -> Self {
        Self { data: None }
    }

    pub fn is_consumed(&self) -> bool {
        self.data.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: MlpParams,
    pub bn: Option<BatchNormState>,
}

fn relu_in_place(m: &mut Matrix) {
    for v in m.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes `g` wherever `activation` is not strictly positive.
fn relu_backward(g: &mut Matrix, activation: &Matrix) {
    for (gv, &a) in g.as_mut_slice().iter_mut().zip(activation.as_slice()) {
        if a <= 0.0 {
            *gv = 0.0;
        }
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

impl Mlp {
    /// He-normal init for ReLU layers, Glorot-uniform for linear layers,
    /// zero biases, `γ = 1`, `β = 0`.
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let n_relu = spec.n_relu_layers();
        let dense = spec
            .dense_shapes()
            .into_iter()
            .enumerate()
            .map(|(l, (i, o))| {
                let relu_follows = l < n_relu || (l == n_relu && spec.relu_before_bn);
                if relu_follows {
                    Dense::he_normal(i, o, rng)
                } else {
                    Dense::glorot_uniform(i, o, rng)
                }
            })
            .collect();
        let (bn_scale, bn_shift, bn) = if spec.use_output_batchnorm {
            (
                vec![1.0; spec.output_dim],
                vec![0.0; spec.output_dim],
                Some(BatchNormState::new(
                    spec.output_dim,
                    BatchNormState::DEFAULT_MOMENTUM,
                    BatchNormState::DEFAULT_EPSILON,
                )),
            )
        } else {
            (Vec::new(), Vec::new(), None)
        };
        Ok(Self {
            spec,
            params: MlpParams {
                dense,
                bn_scale,
                bn_shift,
            },
            bn,
        })
    }

    /// All parameters zero, `γ = 1`, running stats `(0, 1)`.
    pub fn zeroed(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut params = MlpParams::zeros(&spec);
        params.bn_scale.iter_mut().for_each(|g| *g = 1.0);
        let bn = spec.use_output_batchnorm.then(|| {
            BatchNormState::new(
                spec.output_dim,
                BatchNormState::DEFAULT_MOMENTUM,
                BatchNormState::DEFAULT_EPSILON,
            )
        });
        Ok(Self { spec, params, bn })
    }

    pub fn set_batchnorm_hyper(&mut self, momentum: f64, epsilon: f64) {
        if let Some(bn) = &mut self.bn {
            bn.momentum = momentum;
            bn.epsilon = epsilon;
        }
    }

    fn check_input(&self, x: &Matrix, mode: Mode) -> Result<()> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::invalid(format!(
                "MLP expects {} input columns, got {}",
                self.spec.input_dim,
                x.cols()
            )));
        }
        if x.rows() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if mode == Mode::Train && self.spec.use_output_batchnorm && x.rows() < 2 {
            return Err(Error::invalid(
                "batch norm in training mode needs a batch of at least 2",
            ));
        }
        Ok(())
    }

    /// Forward pass recording a tape. In training mode batch-norm uses batch
    /// statistics and folds them into the running statistics.
    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<(Matrix, MlpTape)> {
        self.check_input(x, mode)?;
        let (y, data, batch_stats) = self.run(x, mode, true);
        if let (Some((mean, var)), Some(bn)) = (batch_stats, self.bn.as_mut()) {
            let b = x.rows() as f64;
            let m = bn.momentum;
            for c in 0..mean.len() {
                bn.running_mean[c] = m * bn.running_mean[c] + (1.0 - m) * mean[c];
                bn.running_var[c] = m * bn.running_var[c] + (1.0 - m) * var[c] * b / (b - 1.0);
            }
        }
        Ok((y, MlpTape { data }))
    }

    /// Inference-mode forward pass without a tape.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x, Mode::Infer)?;
        Ok(self.run(x, Mode::Infer, false).0)
    }

    #[allow(clippy::type_complexity)]
    fn run(
        &self,
        x: &Matrix,
        mode: Mode,
        record: bool,
    ) -> (Matrix, Option<TapeData>, Option<(Vec<f64>, Vec<f64>)>) {
        let n_relu = self.spec.n_relu_layers();
        let dense = &self.params.dense;
        let mut inputs = Vec::with_capacity(dense.len());

        let mut h = dense[0].forward(x);
        if record {
            inputs.push(x.clone());
        }
        for layer in &dense[1..=n_relu] {
            relu_in_place(&mut h);
            let z = layer.forward(&h);
            if record {
                inputs.push(h);
            }
            h = z;
        }

        let mut output_relu = None;
        if self.spec.relu_before_bn {
            relu_in_place(&mut h);
            if record {
                output_relu = Some(h.clone());
            }
        }

        let mut bn_record = None;
        let mut batch_stats = None;
        if let Some(bn) = &self.bn {
            let (rows, cols) = (h.rows(), h.cols());
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean: Vec<f64> = h.column_sums().iter().map(|s| s / rows as f64).collect();
                    let mut var = vec![0.0; cols];
                    for i in 0..rows {
                        for (c, v) in h.row(i).iter().enumerate() {
                            var[c] += (v - mean[c]).powi(2);
                        }
                    }
                    var.iter_mut().for_each(|v| *v /= rows as f64);
                    (mean, var)
                }
                Mode::Infer => (bn.running_mean.clone(), bn.running_var.clone()),
            };
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + bn.epsilon).sqrt()).collect();
            let mut xhat = h;
            for i in 0..rows {
                for (c, v) in xhat.row_mut(i).iter_mut().enumerate() {
                    *v = (*v - mean[c]) * inv_std[c];
                }
            }
            let mut y = xhat.clone();
            for i in 0..rows {
                for (c, v) in y.row_mut(i).iter_mut().enumerate() {
                    *v = self.params.bn_scale[c] * *v + self.params.bn_shift[c];
                }
            }
            if mode == Mode::Train {
                batch_stats = Some((mean, var));
            }
            if record {
                bn_record = Some(BnRecord {
                    mode,
                    xhat,
                    inv_std,
                });
            }
            h = y;
        }

        if self.spec.final_extra_linear.is_some() {
            let z = dense[n_relu + 1].forward(&h);
            if record {
                inputs.push(h);
            }
            h = z;
        }

        let data = record.then_some(TapeData {
            inputs,
            output_relu,
            bn: bn_record,
        });
        (h, data, batch_stats)
    }

    /// Reverse-mode gradient of `⟨upstream, forward(x)⟩` with respect to the
    /// parameters and the input. Consumes the tape.
    pub fn backward(&self, tape: &mut MlpTape, upstream: &Matrix) -> Result<(MlpParams, Matrix)> {
        let data = tape.data.take().ok_or(Error::TapeConsumed)?;
        let rows = data.inputs[0].rows();
        if upstream.rows() != rows || upstream.cols() != self.spec.final_dim() {
            return Err(Error::invalid(format!(
                "upstream gradient shape {}x{} does not match output {}x{}",
                upstream.rows(),
                upstream.cols(),
                rows,
                self.spec.final_dim()
            )));
        }
        let n_relu = self.spec.n_relu_layers();
        let dense = &self.params.dense;
        let mut grads = MlpParams::zeros(&self.spec);
        let mut g = upstream.clone();

        if self.spec.final_extra_linear.is_some() {
            let l = n_relu + 1;
            data.inputs[l].accumulate_transpose_product(&g, &mut grads.dense[l].weight);
            grads.dense[l].bias = g.column_sums();
            g = g.product_transposed(&dense[l].weight, dense[l].n_in);
        }

        if let Some(rec) = &data.bn {
            let cols = g.cols();
            let gamma = &self.params.bn_scale;
            let mut dgamma = vec![0.0; cols];
            for i in 0..rows {
                for (c, (gv, xv)) in g.row(i).iter().zip(rec.xhat.row(i)).enumerate() {
                    dgamma[c] += gv * xv;
                }
            }
            grads.bn_shift = g.column_sums();
            match rec.mode {
                Mode::Infer => {
                    for i in 0..rows {
                        for (c, v) in g.row_mut(i).iter_mut().enumerate() {
                            *v *= gamma[c] * rec.inv_std[c];
                        }
                    }
                }
                Mode::Train => {
                    let b = rows as f64;
                    // dx = inv_std/B * (B·dxhat − Σdxhat − xhat·Σ(dxhat·xhat)), dxhat = γ·g
                    let sum_dxhat: Vec<f64> = grads
                        .bn_shift
                        .iter()
                        .zip(gamma)
                        .map(|(s, g)| s * g)
                        .collect();
                    let sum_dxhat_xhat: Vec<f64> =
                        dgamma.iter().zip(gamma).map(|(s, g)| s * g).collect();
                    for i in 0..rows {
                        let xr = rec.xhat.row(i);
                        for (c, v) in g.row_mut(i).iter_mut().enumerate() {
                            let dxhat = *v * gamma[c];
                            *v = rec.inv_std[c] / b
                                * (b * dxhat - sum_dxhat[c] - xr[c] * sum_dxhat_xhat[c]);
                        }
                    }
                }
            }
            grads.bn_scale = dgamma;
        }

        if let Some(act) = &data.output_relu {
            relu_backward(&mut g, act);
        }

        for l in (0..=n_relu).rev() {
            if l < n_relu {
                relu_backward(&mut g, &data.inputs[l + 1]);
            }
            data.inputs[l].accumulate_transpose_product(&g, &mut grads.dense[l].weight);
            grads.dense[l].bias = g.column_sums();
            g = g.product_transposed(&dense[l].weight, dense[l].n_in);
        }
        Ok((grads, g))
    }
}

/// Accumulates `src` into `dst` (both shaped by the same spec).
pub fn accumulate_grads(dst: &mut MlpParams, src: &MlpParams) {
    dst.add_assign(src);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols)
            .map(|_| r.random_range(-1.0..1.0))
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    /// Independent straight-line forward using nested loops.
    fn reference_forward(mlp: &Mlp, x: &Matrix, mode: Mode) -> Vec<Vec<f64>> {
        let spec = &mlp.spec;
        let n_relu = spec.hidden_dims.len();
        let mut rows: Vec<Vec<f64>> = (0..x.rows()).map(|i| x.row(i).to_vec()).collect();
        for (l, d) in mlp.params.dense.iter().enumerate().take(n_relu + 1) {
            rows = rows
                .iter()
                .map(|r| {
                    (0..d.n_out)
                        .map(|o| {
                            let mut s = d.bias[o];
                            for i in 0..d.n_in {
                                s += r[i] * d.weight[i * d.n_out + o];
                            }
                            if l < n_relu || spec.relu_before_bn {
                                s.max(0.0)
                            } else {
                                s
                            }
                        })
                        .collect()
                })
                .collect();
        }
        if let Some(bn) = &mlp.bn {
            let c = spec.output_dim;
            let b = rows.len() as f64;
            for ch in 0..c {
                let (mean, var) = match mode {
                    Mode::Train => {
                        let m = rows.iter().map(|r| r[ch]).sum::<f64>() / b;
                        let v = rows.iter().map(|r| (r[ch] - m) * (r[ch] - m)).sum::<f64>() / b;
                        (m, v)
                    }
                    Mode::Infer => (bn.running_mean[ch], bn.running_var[ch]),
                };
                for r in rows.iter_mut() {
                    r[ch] = mlp.params.bn_scale[ch] * (r[ch] - mean) / (var + bn.epsilon).sqrt()
                        + mlp.params.bn_shift[ch];
                }
            }
        }
        if let Some(t) = spec.final_extra_linear {
            let d = mlp.params.dense.last().unwrap();
            rows = rows
                .iter()
                .map(|r| {
                    (0..t)
                        .map(|o| {
                            d.bias[o] + (0..d.n_in).map(|i| r[i] * d.weight[i * t + o]).sum::<f64>()
                        })
                        .collect()
                })
                .collect();
        }
        rows
    }

    #[test]
    fn zero_net_inference_outputs_zero() {
        let spec = MlpSpec::new(3, &[4, 4], 2).with_output_batchnorm();
        let mlp = Mlp::zeroed(spec).unwrap();
        let x = random_matrix(&mut rng(0), 5, 3);
        let y = mlp.infer(&x).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_single_layer_passes_input() {
        let spec = MlpSpec::new(3, &[], 3);
        let mut mlp = Mlp::zeroed(spec).unwrap();
        for i in 0..3 {
            mlp.params.dense[0].weight[i * 3 + i] = 1.0;
        }
        let x = random_matrix(&mut rng(1), 4, 3);
        assert_eq!(mlp.infer(&x).unwrap(), x);
    }

    #[test]
    fn forward_matches_straight_line_reference() {
        let spec = MlpSpec::new(4, &[6, 5], 3)
            .with_output_batchnorm()
            .with_final_linear(2);
        let mut r = rng(2);
        let mut mlp = Mlp::new(spec, &mut r).unwrap();
        mlp.params.bn_scale = vec![1.3, 0.7, -0.4];
        mlp.params.bn_shift = vec![0.1, -0.2, 0.3];
        let x = random_matrix(&mut r, 7, 4);
        let expect = reference_forward(&mlp, &x, Mode::Train);
        let (y, _) = mlp.clone().forward(&x, Mode::Train).unwrap();
        for i in 0..7 {
            for j in 0..2 {
                assert!((y.get(i, j) - expect[i][j]).abs() < 1e-10);
            }
        }
        mlp.bn.as_mut().unwrap().running_mean = vec![0.2, -0.1, 0.05];
        mlp.bn.as_mut().unwrap().running_var = vec![0.5, 2.0, 1.1];
        let expect = reference_forward(&mlp, &x, Mode::Infer);
        let y = mlp.infer(&x).unwrap();
        for i in 0..7 {
            for j in 0..2 {
                assert!((y.get(i, j) - expect[i][j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn shape_and_batch_errors() {
        let spec = MlpSpec::new(3, &[4], 2).with_output_batchnorm();
        let mut mlp = Mlp::new(spec, &mut rng(3)).unwrap();
        assert!(mlp.forward(&Matrix::zeros(4, 2), Mode::Train).is_err());
        assert!(mlp.forward(&Matrix::zeros(1, 3), Mode::Train).is_err());
        assert!(mlp.forward(&Matrix::zeros(1, 3), Mode::Infer).is_ok());
        assert!(MlpSpec::new(0, &[4], 2).validate().is_err());
    }

    #[test]
    fn tape_cannot_be_reused() {
        let spec = MlpSpec::new(3, &[4], 2);
        let mut mlp = Mlp::new(spec, &mut rng(4)).unwrap();
        let x = random_matrix(&mut rng(5), 3, 3);
        let (y, mut tape) = mlp.forward(&x, Mode::Train).unwrap();
        let up = Matrix::zeros(y.rows(), y.cols());
        assert!(mlp.backward(&mut tape, &up).is_ok());
        assert!(tape.is_consumed());
        assert!(matches!(
            mlp.backward(&mut tape, &up),
            Err(Error::TapeConsumed)
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let spec = MlpSpec::new(3, &[4, 4], 2)
            .with_output_batchnorm()
            .with_final_linear(2);
        let mut mlp = Mlp::new(spec, &mut rng(6)).unwrap();
        let x = random_matrix(&mut rng(7), 5, 3);
        let (_, mut tape) = mlp.forward(&x, Mode::Train).unwrap();
        let (g, dx) = mlp.backward(&mut tape, &Matrix::zeros(5, 2)).unwrap();
        let mut flat = Vec::new();
        g.flatten_into(&mut flat);
        assert!(flat.iter().all(|&v| v == 0.0));
        assert!(dx.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_weight_gradient_closed_form() {
        let spec = MlpSpec::new(3, &[], 2);
        let mut r = rng(8);
        let mut mlp = Mlp::new(spec, &mut r).unwrap();
        let x = random_matrix(&mut r, 4, 3);
        let up = random_matrix(&mut r, 4, 2);
        let (_, mut tape) = mlp.forward(&x, Mode::Train).unwrap();
        let (g, _) = mlp.backward(&mut tape, &up).unwrap();
        for i in 0..3 {
            for o in 0..2 {
                let expect: f64 = (0..4).map(|b| x.get(b, i) * up.get(b, o)).sum();
                assert!((g.dense[0].weight[i * 2 + o] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn batchnorm_train_output_is_standardised() {
        let spec = MlpSpec::new(3, &[5], 4).with_output_batchnorm();
        let mut r = rng(9);
        let mut mlp = Mlp::new(spec, &mut r).unwrap();
        mlp.set_batchnorm_hyper(0.99, 1e-14);
        let x = random_matrix(&mut r, 9, 3);
        let (y, _) = mlp.forward(&x, Mode::Train).unwrap();
        for c in 0..4 {
            let col: Vec<f64> = (0..9).map(|i| y.get(i, c)).collect();
            let m = col.iter().sum::<f64>() / 9.0;
            let v = col.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 9.0;
            assert!(m.abs() < 1e-8);
            assert!((v - 1.0).abs() < 1e-8, "channel {c}: {v}");
        }
    }

    #[test]
    fn inference_does_not_touch_running_stats() {
        let spec = MlpSpec::new(2, &[3], 2).with_output_batchnorm();
        let mut mlp = Mlp::new(spec, &mut rng(10)).unwrap();
        let x = random_matrix(&mut rng(11), 4, 2);
        mlp.forward(&x, Mode::Train).unwrap();
        let before = mlp.bn.clone();
        let a = mlp.infer(&x).unwrap();
        let (b, _) = mlp.forward(&x, Mode::Infer).unwrap();
        assert_eq!(a, b);
        assert_eq!(before, mlp.bn);
    }

    #[test]
    fn flatten_round_trip_and_mask() {
        let spec = MlpSpec::new(2, &[3], 2)
            .with_output_batchnorm()
            .with_final_linear(1);
        let mlp = Mlp::new(spec, &mut rng(12)).unwrap();
        let mut flat = Vec::new();
        mlp.params.flatten_into(&mut flat);
        let mut mask = Vec::new();
        mlp.params.weight_mask_into(&mut mask);
        assert_eq!(flat.len(), mlp.params.len());
        assert_eq!(mask.len(), flat.len());
        assert_eq!(mask.iter().filter(|&&m| m).count(), 2 * 3 + 3 * 2 + 2);
        let mut other = MlpParams::zeros(&mlp.spec);
        assert_eq!(other.unflatten_from(&flat).unwrap(), flat.len());
        assert_eq!(other, mlp.params);
    }

    #[test]
    fn relu_is_idempotent() {
        for x in [-2.0, -0.0, 0.0, 1e-300, 3.5] {
            assert_eq!(relu(relu(x)), relu(x));
        }
    }
}
