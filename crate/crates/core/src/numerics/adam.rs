//! Adam with decoupled weight decay.

use super::params::ModelParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings: {self:?}")))
        }
    }
}

/// Epoch count, minibatch size and optimizer settings of one training run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl Schedule {
    pub fn new(epochs: usize, batch_size: usize) -> Self {
        Schedule {
            epochs,
            batch_size,
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        self.adam.validate()
    }
}

/// First/second moment estimates and step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: ModelParams,
    v: ModelParams,
}

impl AdamState {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// `θ ← θ(1 − lr·wd) − lr·m̂/(√v̂ + eps)` with bias-corrected moments.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        params.check_conforms(grads)?;
        params.check_conforms(&self.m)?;
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let decay = 1.0 - c.lr * c.weight_decay;
        let moments = self.m.iter_mut().zip(self.v.iter_mut());
        for (((_, p), (_, g)), ((_, m), (_, v))) in params.iter_mut().zip(grads.iter()).zip(moments) {
            let it = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
            for ((p, &g), (m, v)) in it {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p = *p * decay - c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use proptest::prelude::*;

    fn single(v: Vec<f64>) -> ModelParams {
        let mut p = ModelParams::new();
        p.insert("w", Tensor::vector(v));
        p
    }

    #[test]
    fn zero_gradient_without_decay_is_noop() {
        let mut p = single(vec![1.0, -2.0, 3.5]);
        let g = single(vec![0.0; 3]);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(&p, cfg);
        st.step(&mut p, &g).unwrap();
        assert_eq!(p, single(vec![1.0, -2.0, 3.5]));
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn decay_only_scales_weights() {
        let mut p = single(vec![1.0, -2.0]);
        let g = single(vec![0.0; 2]);
        let mut st = AdamState::new(&p, AdamConfig::default());
        st.step(&mut p, &g).unwrap();
        let f = 1.0 - 1e-6;
        assert_eq!(p.get("w").unwrap().data(), &[f, -2.0 * f]);
    }

    #[test]
    fn first_step_reference_value() {
        let mut p = single(vec![0.0]);
        let g = single(vec![1.0]);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        AdamState::new(&p, cfg).step(&mut p, &g).unwrap();
        // m̂ = 1, v̂ = 1 after bias correction
        let want = -1e-4 * (1.0 / (1.0 + 1e-8));
        assert!((p.get("w").unwrap().data()[0] - want).abs() < 1e-20);
    }

    #[test]
    fn step_counter_increments() {
        let mut p = single(vec![0.3]);
        let g = single(vec![0.1]);
        let mut st = AdamState::new(&p, AdamConfig::default());
        for k in 1..=5 {
            st.step(&mut p, &g).unwrap();
            assert_eq!(st.step_count(), k);
        }
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let mut p = single(vec![0.3]);
        let g = single(vec![0.1, 0.2]);
        let mut st = AdamState::new(&p, AdamConfig::default());
        assert!(st.step(&mut p, &g).is_err());
    }

    proptest! {
        #[test]
        fn first_update_bounded_by_lr(g in prop::collection::vec(-1e6f64..1e6, 1..20), lr in 1e-6f64..1e-1) {
            let n = g.len();
            let mut p = single(vec![0.0; n]);
            let cfg = AdamConfig { lr, weight_decay: 0.0, ..AdamConfig::default() };
            AdamState::new(&p, cfg).step(&mut p, &single(g)).unwrap();
            for v in p.get("w").unwrap().data() {
                prop_assert!(v.abs() <= lr * (1.0 + 1e-6));
            }
        }
    }
}
