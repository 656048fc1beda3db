use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with optional per-parameter L2 decay folded into the
/// gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Tensor>,
    pub second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[&Tensor]) -> Self {
        AdamState {
            config,
            step: 0,
            first: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            second: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    /// One update. `decay[i]` is the L2 coefficient for parameter `i`.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor], decay: &[f64]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() || decay.len() != params.len() {
            return Err(Error::Contract(format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.first.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first[i].shape() {
                return Err(Error::dim("adam_step", p.shape(), g.shape()));
            }
            if !g.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient for parameter {i}")));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let g = grads[i].data();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (k, w) in p.data_mut().iter_mut().enumerate() {
                let gk = g[k] + decay[i] * *w;
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn run(state: &mut AdamState, p: &mut Tensor, g: f64) {
        let grad = Tensor::full(p.shape(), g);
        state.step(&mut [p], &[&grad], &[0.0]).unwrap();
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = Tensor::vector(vec![0.3, -1.2, 4.0]);
        let before = p.clone();
        let mut s = AdamState::new(AdamConfig::default(), &[&p]);
        for _ in 0..5 {
            run(&mut s, &mut p, 0.0);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Tensor::scalar(1.0);
        let mut s = AdamState::new(AdamConfig::default(), &[&p]);
        run(&mut s, &mut p, 1.0);
        // m_hat = 1, v_hat = 1 => update lr / (1 + eps)
        assert_relative_eq!(1.0 - p.item(), 0.005 / (1.0 + 1e-8), max_relative = 1e-12);
    }

    #[test]
    fn second_moment_follows_recurrence() {
        let mut p = Tensor::scalar(0.0);
        let mut s = AdamState::new(AdamConfig::default(), &[&p]);
        run(&mut s, &mut p, 2.0);
        run(&mut s, &mut p, 2.0);
        assert_eq!(s.step, 2);
        // v1 = 0.001 * 4, v2 = 0.999 * v1 + 0.001 * 4
        let v1 = 0.001 * 4.0;
        let v2 = 0.999 * v1 + 0.001 * 4.0;
        assert_relative_eq!(s.second[0].item(), v2, max_relative = 1e-12);
        let m2 = 0.9 * (0.1 * 2.0) + 0.1 * 2.0;
        assert_relative_eq!(s.first[0].item(), m2, max_relative = 1e-12);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = Tensor::scalar(0.0);
        let mut s = AdamState::new(AdamConfig::default(), &[&p]);
        let bad = Tensor::from_parts(vec![], vec![f64::INFINITY]);
        let err = s.step(&mut [&mut p], &[&bad], &[0.0]).unwrap_err();
        assert!(err.is_numeric());
        assert_eq!(s.step, 0);
    }
}
