//! Adam optimizer with bias correction.
//!
//! One instance owns the moment tensors for a fixed, ordered parameter list;
//! the caller passes parameters and gradients in that same order every step.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Optimizer state: first/second moments per parameter plus the step count.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Tensor<f32>]) -> Self {
        let m = params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        let v = params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        Adam { config, step: 0, m, v }
    }

    /// Applies one update in place. `grads[i]` must match `params[i]`.
    pub fn step(&mut self, params: &mut [Tensor<f32>], grads: &[Tensor<f32>]) -> Result<()> {
        assert_eq!(params.len(), self.m.len(), "adam: parameter count changed");
        assert_eq!(params.len(), grads.len(), "adam: gradient count mismatch");
        self.step += 1;
        let t = self.step as f64;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powf(t);
        let bc2 = 1.0 - c.beta2.powf(t);

        for ((p, g), (m, v)) in
            params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.shape(), g.shape(), "adam: moment/parameter shape mismatch");
            if let Some(i) = g.data().iter().position(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient {:?} at flat index {i}",
                    g.data()[i]
                )));
            }
            let mut new_m = vec![0f32; p.numel()];
            let mut new_v = vec![0f32; p.numel()];
            let mut new_p = vec![0f32; p.numel()];
            for i in 0..p.numel() {
                let gi = g.data()[i] as f64;
                let mi = c.beta1 * m.data()[i] as f64 + (1.0 - c.beta1) * gi;
                let vi = c.beta2 * v.data()[i] as f64 + (1.0 - c.beta2) * gi * gi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                new_m[i] = mi as f32;
                new_v[i] = vi as f32;
                new_p[i] =
                    (p.data()[i] as f64 - c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon)) as f32;
            }
            m.set_data(new_m);
            v.set_data(new_v);
            p.set_data(new_p);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        // Bias correction cancels at step 1: update = lr * 1 / (1 + eps).
        let mut p = Tensor::scalar(1.0f32);
        let cfg = AdamConfig { learning_rate: 0.01, ..AdamConfig::default() };
        let mut adam = Adam::new(cfg, &[p.clone()]);
        let mut ps = [p.clone()];
        adam.step(&mut ps, &[Tensor::scalar(1.0)]).unwrap();
        p = ps[0].clone();
        let delta = 1.0 - p.item();
        assert!((delta - 0.01).abs() < 1e-6, "delta {delta}");
    }

    #[test]
    fn zero_gradient_with_zero_moments_is_a_noop() {
        let mut p = Tensor::new(vec![3], vec![1.0f32, -2.0, 0.5]);
        let before = p.data().to_vec();
        let mut adam = Adam::new(AdamConfig::default(), &[p.clone()]);
        let mut ps = [p.clone()];
        adam.step(&mut ps, &[Tensor::zeros(vec![3])]).unwrap();
        p = ps[0].clone();
        assert_eq!(p.data(), &before[..]);
    }

    #[test]
    fn constant_gradient_keeps_unit_ratio() {
        // With g = 1 every step, m_hat = v_hat = 1, so each update is ~lr.
        let p = Tensor::scalar(0.0f32);
        let cfg = AdamConfig { learning_rate: 0.1, ..AdamConfig::default() };
        let mut adam = Adam::new(cfg, &[p.clone()]);
        let mut ps = [p.clone()];
        adam.step(&mut ps, &[Tensor::scalar(1.0)]).unwrap();
        let after_one = ps[0].item();
        adam.step(&mut ps, &[Tensor::scalar(1.0)]).unwrap();
        let after_two = ps[0].item();
        assert!((-after_one - 0.1).abs() < 1e-5, "first step {after_one}");
        assert!((-(after_two - after_one) - 0.1).abs() < 1e-5, "second step {}", after_two - after_one);
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let p = Tensor::scalar(0.0f32);
        let mut adam = Adam::new(AdamConfig::default(), &[p.clone()]);
        let mut ps = [p.clone()];
        let err = adam.step(&mut ps, &[Tensor::scalar(f32::NAN)]).unwrap_err();
        assert!(err.to_string().contains("non-finite gradient"));
    }
}
