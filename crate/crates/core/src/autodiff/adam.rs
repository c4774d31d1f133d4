use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled: applied as `p *= 1 - lr * weight_decay` before the moment update.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// First/second moment accumulators for every parameter of one store.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState { config, first: zeros(), second: zeros(), step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// One bias-corrected Adam update. Gradients are validated before any
    /// parameter is touched, so a rejected step leaves the store unchanged.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::shape("adam_step", format!("{} grads for {} params", grads.len(), params.len())));
        }
        for ((_, name, p), g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::shape("adam_step", format!("{name}: {:?} vs {:?}", p.shape(), g.shape())));
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(name.to_string()));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps, weight_decay } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let decay = 1.0 - lr * weight_decay;
        for (i, g) in grads.iter().enumerate() {
            let p = params.get_mut(super::params::ParamId(i)).data_mut();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for k in 0..p.len() {
                let gk = g.data()[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                p[k] = p[k] * decay - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::row_vector(values));
        s
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = store(&[1.0, -2.0, 0.5]);
        let before = p.clone();
        let mut st = AdamState::new(&p, AdamConfig::default());
        for _ in 0..5 {
            st.step(&mut p, &[Tensor::zeros(&[1, 3])]).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let g = [0.3, -4.0, 1e-3];
        let mut p = store(&[0.0; 3]);
        let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
        let mut st = AdamState::new(&p, cfg.clone());
        st.step(&mut p, &[Tensor::row_vector(&g)]).unwrap();
        for (k, &gk) in g.iter().enumerate() {
            // mhat = g, vhat = g², delta = -lr g / (|g| + eps)
            let expect = -cfg.lr * gk / (gk.abs() + cfg.eps);
            let got = p.tensors()[0].data()[k];
            assert!((got - expect).abs() < 1e-15, "{got} vs {expect}");
        }
    }

    #[test]
    fn constant_gradient_steps_approach_lr() {
        let mut p = store(&[0.0]);
        let cfg = AdamConfig { lr: 1e-3, ..AdamConfig::default() };
        let mut st = AdamState::new(&p, cfg);
        let mut last = 0.0;
        for _ in 0..2000 {
            let before = p.tensors()[0].data()[0];
            st.step(&mut p, &[Tensor::row_vector(&[2.5])]).unwrap();
            last = p.tensors()[0].data()[0] - before;
        }
        assert!((last + 1e-3).abs() < 1e-9, "{last}");
    }

    #[test]
    fn decoupled_weight_decay_shrinks_before_update() {
        let mut p = store(&[2.0]);
        let cfg = AdamConfig { lr: 0.1, weight_decay: 0.5, ..AdamConfig::default() };
        let mut st = AdamState::new(&p, cfg);
        st.step(&mut p, &[Tensor::row_vector(&[0.0])]).unwrap();
        assert!((p.tensors()[0].data()[0] - 2.0 * 0.95).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let mut p = store(&[1.0]);
        let mut st = AdamState::new(&p, AdamConfig::default());
        let err = st.step(&mut p, &[Tensor::row_vector(&[f64::NAN])]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient(ref n) if n == "w"));
        assert_eq!(st.step_count(), 0);
        assert_eq!(p.tensors()[0].data()[0], 1.0);
    }
}
