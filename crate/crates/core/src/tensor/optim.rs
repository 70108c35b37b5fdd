//! Adam with decoupled weight decay, plus a step learning-rate schedule.

use super::params::{GradBuffer, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    config: AdamWConfig,
    lr: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|(_, t)| vec![0.0; t.len()]).collect::<Vec<_>>();
        Self {
            config,
            lr: config.lr,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub(crate) fn restore(config: AdamWConfig, step: u64, moments: Vec<(Vec<f64>, Vec<f64>)>) -> Self {
        let (m, v) = moments.into_iter().unzip();
        Self {
            config,
            lr: config.lr,
            step,
            m,
            v,
        }
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.config
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.m.iter().map(Vec::as_slice).zip(self.v.iter().map(Vec::as_slice))
    }

    /// One update. Refuses to touch the parameters if any gradient is not finite.
    pub fn step(&mut self, store: &mut ParamStore, grads: &GradBuffer) -> Result<()> {
        for id in store.ids() {
            if let Some((index, value)) = grads
                .get(id)
                .iter()
                .enumerate()
                .find(|(_, g)| !g.is_finite())
            {
                return Err(Error::NonFiniteGradient {
                    name: store.name(id).to_string(),
                    index,
                    value: *value,
                });
            }
        }
        self.step += 1;
        let AdamWConfig {
            weight_decay,
            beta1,
            beta2,
            eps,
            ..
        } = self.config;
        let lr = self.lr;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for id in store.ids() {
            let g = grads.get(id);
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            let p = &mut store.get_mut(id).data;
            for k in 0..p.len() {
                p[k] *= 1.0 - lr * weight_decay;
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p[k] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Multiplies the base learning rate by `factor` every `every` epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecay {
    pub base_lr: f64,
    pub every: usize,
    pub factor: f64,
}

impl StepDecay {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.every == 0 {
            return self.base_lr;
        }
        self.base_lr * self.factor.powi((epoch / self.every) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::params::{ParamId, Tensor};

    fn one_param(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("p", Tensor::new(vec![1], vec![v]).unwrap()).unwrap();
        s
    }

    #[test]
    fn zero_grad_zero_decay_is_noop() {
        let mut s = one_param(0.7);
        let mut opt = AdamW::new(
            AdamWConfig {
                weight_decay: 0.0,
                ..AdamWConfig::default()
            },
            &s,
        );
        let g = GradBuffer::new(&s);
        opt.step(&mut s, &g).unwrap();
        assert_eq!(s.get(ParamId(0)).data[0], 0.7);
    }

    #[test]
    fn single_step_closed_form() {
        let cfg = AdamWConfig {
            lr: 0.01,
            weight_decay: 0.1,
            ..AdamWConfig::default()
        };
        let mut s = one_param(1.0);
        let mut g = GradBuffer::new(&s);
        g.add(ParamId(0), &[1.0]);
        let mut opt = AdamW::new(cfg, &s);
        opt.step(&mut s, &g).unwrap();
        // m̂ = v̂ = 1 after bias correction.
        let want = 1.0 * (1.0 - 0.01 * 0.1) - 0.01 * 1.0 / (1.0 + 1e-8);
        assert!((s.get(ParamId(0)).data[0] - want).abs() < 1e-15);
    }

    #[test]
    fn decay_only_shrinks_by_lr_wd_p() {
        let cfg = AdamWConfig {
            lr: 0.05,
            weight_decay: 0.2,
            ..AdamWConfig::default()
        };
        let mut s = one_param(2.0);
        let mut opt = AdamW::new(cfg, &s);
        let g = GradBuffer::new(&s);
        opt.step(&mut s, &g).unwrap();
        assert!((s.get(ParamId(0)).data[0] - (2.0 - 0.05 * 0.2 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_aborts() {
        let mut s = one_param(1.0);
        let mut g = GradBuffer::new(&s);
        g.add(ParamId(0), &[f64::NAN]);
        let mut opt = AdamW::new(AdamWConfig::default(), &s);
        let err = opt.step(&mut s, &g).unwrap_err();
        assert!(err.to_string().contains("`p`"));
        assert_eq!(s.get(ParamId(0)).data[0], 1.0);
    }

    #[test]
    fn step_schedule() {
        let s = StepDecay {
            base_lr: 1e-5,
            every: 5,
            factor: 0.9,
        };
        assert_eq!(s.lr_at(0), 1e-5);
        assert_eq!(s.lr_at(4), 1e-5);
        assert!((s.lr_at(5) - 0.9e-5).abs() < 1e-20);
        assert!((s.lr_at(12) - 0.81e-5).abs() < 1e-20);
    }
}
