//! Channel-prediction MSE with an L2 weight penalty.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    /// `mse + penalty`.
    pub loss: f64,
    pub mse: f64,
    pub penalty: f64,
    /// `∂loss/∂Re ĥ + j·∂loss/∂Im ĥ` per predicted element.
    pub grad_pred: Vec<Complex64>,
    /// `∂loss/∂ξ` for the penalised weights.
    pub grad_weights: Vec<f64>,
}

/// `(1/(Nr·M))·Σ_μ ‖h^(μ) − ĥ^(μ)‖² + κ·ξᵀξ` for `M` stacked rows of
/// `n_antennas` predictions.
pub fn loss_mse_l2(
    pred: &[Complex64],
    target: &[Complex64],
    n_antennas: usize,
    weights: &[f64],
    kappa: f64,
) -> Result<LossOutput> {
    if pred.len() != target.len() {
        return Err(Error::invalid("prediction and target sizes differ"));
    }
    if n_antennas == 0 || !pred.len().is_multiple_of(n_antennas) || pred.is_empty() {
        return Err(Error::invalid(
            "prediction is not a whole number of channel vectors",
        ));
    }
    if !(kappa >= 0.0) {
        return Err(Error::invalid("kappa must be non-negative"));
    }
    let scale = 1.0 / pred.len() as f64;
    let mut sq = 0.0;
    let mut grad_pred = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(target) {
        let d = p - t;
        sq += d.norm_sqr();
        grad_pred.push(d * (2.0 * scale));
    }
    let mse = sq * scale;
    let penalty = kappa * weights.iter().map(|w| w * w).sum::<f64>();
    let grad_weights = weights.iter().map(|w| 2.0 * kappa * w).collect();
    Ok(LossOutput {
        loss: mse + penalty,
        mse,
        penalty,
        grad_pred,
        grad_weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let h = vec![c(1.0, 2.0), c(-0.5, 0.1), c(0.0, 3.0), c(4.0, 4.0)];
        let out = loss_mse_l2(&h, &h, 2, &[1.0, 2.0], 0.0).unwrap();
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn regulariser_only() {
        let h = vec![c(1.0, 2.0); 4];
        // ‖ξ‖² = 4
        let out = loss_mse_l2(&h, &h, 2, &[1.0, -1.0, 1.0, 1.0], 0.1).unwrap();
        assert!((out.loss - 0.4).abs() < 1e-15);
        assert_eq!(out.mse, 0.0);
    }

    #[test]
    fn matches_scalar_loop() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let (m, nr) = (5, 4);
        let mut gen = || c(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let pred: Vec<_> = (0..m * nr).map(|_| gen()).collect();
        let target: Vec<_> = (0..m * nr).map(|_| gen()).collect();
        let w = [0.3, -0.2, 0.9];
        let out = loss_mse_l2(&pred, &target, nr, &w, 0.05).unwrap();
        let mut acc = 0.0;
        for mu in 0..m {
            for k in 0..nr {
                let i = mu * nr + k;
                let dr = target[i].re - pred[i].re;
                let di = target[i].im - pred[i].im;
                acc += dr * dr + di * di;
            }
        }
        let expect = acc / (nr * m) as f64 + 0.05 * (0.09 + 0.04 + 0.81);
        assert!((out.loss - expect).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pred = vec![c(0.3, -0.7), c(1.1, 0.2)];
        let target = vec![c(0.0, 0.5), c(1.0, -1.0)];
        let w = vec![0.4, -1.3];
        let kappa = 0.2;
        let out = loss_mse_l2(&pred, &target, 2, &w, kappa).unwrap();
        let f = |p: &[Complex64], w: &[f64]| loss_mse_l2(p, &target, 2, w, kappa).unwrap().loss;
        let h = 1e-5;
        for i in 0..2 {
            for part in 0..2 {
                let bump = if part == 0 { c(h, 0.0) } else { c(0.0, h) };
                let mut pp = pred.clone();
                pp[i] += bump;
                let mut pm = pred.clone();
                pm[i] -= bump;
                let fd = (f(&pp, &w) - f(&pm, &w)) / (2.0 * h);
                let an = if part == 0 {
                    out.grad_pred[i].re
                } else {
                    out.grad_pred[i].im
                };
                assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-8));
            }
        }
        for i in 0..2 {
            let mut wp = w.clone();
            wp[i] += h;
            let mut wm = w.clone();
            wm[i] -= h;
            let fd = (f(&pred, &wp) - f(&pred, &wm)) / (2.0 * h);
            assert!((fd - out.grad_weights[i]).abs() <= 1e-4 * fd.abs());
        }
    }

    #[test]
    fn shape_errors() {
        let a = vec![c(0.0, 0.0); 3];
        assert!(loss_mse_l2(&a, &a[..2], 1, &[], 0.0).is_err());
        assert!(loss_mse_l2(&a, &a, 2, &[], 0.0).is_err());
        assert!(loss_mse_l2(&a, &a, 3, &[], -1.0).is_err());
    }
}
