use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Global gradient-norm clip; non-positive disables clipping.
    pub clip_norm: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            clip_norm: 5.0,
        }
    }
}

/// Learning rate at `step` of `total` under cosine decay to zero.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    0.5 * base * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos())
}

/// Heavy-ball SGD over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Sgd {
    config: SgdConfig,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(config: SgdConfig, num_params: usize) -> Self {
        Self {
            config,
            velocity: vec![0.0; num_params],
        }
    }

    /// Clips `grad` in place and returns its pre-clip norm.
    pub fn clip(&self, grad: &mut [f64]) -> f64 {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if self.config.clip_norm > 0.0 && norm > self.config.clip_norm {
            let scale = self.config.clip_norm / norm;
            grad.iter_mut().for_each(|g| *g *= scale);
        }
        norm
    }

    /// `v ← μv + g; θ ← θ − lr·v`. Returns the pre-clip gradient norm.
    pub fn step<T: Scalar>(&mut self, params: &mut [T], grad: &[T], lr: f64) -> f64 {
        assert_eq!(params.len(), self.velocity.len());
        assert_eq!(grad.len(), self.velocity.len());
        let mut g: Vec<f64> = grad.iter().map(|v| v.as_f64()).collect();
        let norm = self.clip(&mut g);
        for ((p, v), g) in params.iter_mut().zip(self.velocity.iter_mut()).zip(g) {
            *v = self.config.momentum * *v + g;
            if lr != 0.0 {
                *p = T::lit(p.as_f64() - lr * *v);
            }
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        assert_eq!(cosine_lr(0.1, 0, 10), 0.1);
        assert!(cosine_lr(0.1, 10, 10).abs() < 1e-18);
        assert!((cosine_lr(0.1, 5, 10) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn clipping_caps_norm() {
        let opt = Sgd::new(SgdConfig { clip_norm: 1.0, ..Default::default() }, 2);
        let mut g = vec![3.0, 4.0];
        assert_eq!(opt.clip(&mut g), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn momentum_accumulates() {
        let mut opt = Sgd::new(SgdConfig { learning_rate: 1.0, momentum: 0.5, clip_norm: 0.0 }, 1);
        let mut p = [0.0f64];
        opt.step(&mut p, &[1.0], 1.0);
        opt.step(&mut p, &[1.0], 1.0);
        assert_eq!(p[0], -2.5);
    }

    #[test]
    fn zero_lr_is_a_no_op() {
        let mut opt = Sgd::new(SgdConfig::default(), 2);
        let mut p = [0.25f32, -1.5];
        opt.step(&mut p, &[10.0, 3.0], 0.0);
        assert_eq!(p, [0.25, -1.5]);
    }
}
