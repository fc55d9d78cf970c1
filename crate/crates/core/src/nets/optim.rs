//! Adam and gradient-norm clipping over flat tensor lists.

use serde::{Deserialize, Serialize};

use super::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-5 }
    }
}

/// Adam state for one network; moment tensors mirror the parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<R> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<R>>,
    pub v: Vec<Vec<R>>,
}

impl<R: Real> Adam<R> {
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            m: shapes.iter().map(|&n| vec![R::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![R::zero(); n]).collect(),
        }
    }

    /// One bias-corrected update. Panics if tensor counts or lengths differ
    /// from construction.
    pub fn update(&mut self, params: &mut [&mut [R]], grads: &[&[R]]) {
        assert_eq!(params.len(), self.m.len(), "parameter tensor count");
        assert_eq!(grads.len(), self.m.len(), "gradient tensor count");
        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let bc1 = 1.0 - c.beta1.powf(t);
        let bc2 = 1.0 - c.beta2.powf(t);
        let step_size = R::lit(c.lr * bc2.sqrt() / bc1);
        let eps_hat = R::lit(c.eps * bc2.sqrt());
        let (b1, b2) = (R::lit(c.beta1), R::lit(c.beta2));
        let (one_b1, one_b2) = (R::lit(1.0 - c.beta1), R::lit(1.0 - c.beta2));
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            assert_eq!(p.len(), g.len(), "gradient shape");
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                p[i] -= step_size * m[i] / (v[i].sqrt() + eps_hat);
            }
        }
    }
}

pub fn global_norm<R: Real>(grads: &[&[R]]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|x| {
            let x = x.to_f64().unwrap();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// Scales gradients so their joint L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm<R: Real>(grads: &mut [&mut [R]], max_norm: f64) -> f64 {
    let norm = global_norm(&grads.iter().map(|g| &**g).collect::<Vec<_>>());
    if norm > max_norm && norm.is_finite() {
        let scale = R::lit(max_norm / (norm + 1e-6));
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|x| *x *= scale);
        }
    }
    norm
}
