//! Small layer building blocks on top of the tape.

use rand::Rng;

use super::params::{ParamId, ParamStore, Tensor};
use super::tape::{Tape, Var};
use crate::error::Result;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `y = x W + b` with `W: [in, out]`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Weights and bias uniform in `±1/sqrt(fan_in)`.
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Result<Self> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = store.add(format!("{name}.weight"), Tensor::uniform(vec![fan_in, fan_out], bound, rng))?;
        let b = store.add(format!("{name}.bias"), Tensor::uniform(vec![fan_out], bound, rng))?;
        Ok(Self { w, b, fan_in, fan_out })
    }

    /// Looks up an existing layer by name, e.g. after loading a checkpoint.
    pub fn bind(store: &ParamStore, name: &str) -> Option<Self> {
        let w = store.id(&format!("{name}.weight"))?;
        let b = store.id(&format!("{name}.bias"))?;
        let (fan_in, fan_out) = store.get(w).matrix_dims();
        Some(Self { w, b, fan_in, fan_out })
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: &Var<'t>) -> Result<Var<'t>> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        x.matmul(&w)?.add_row(&b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        let gamma = store.add(format!("{name}.gamma"), Tensor::filled(vec![dim], 1.0))?;
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(vec![dim]))?;
        Ok(Self { gamma, beta })
    }

    pub fn bind(store: &ParamStore, name: &str) -> Option<Self> {
        Some(Self {
            gamma: store.id(&format!("{name}.gamma"))?,
            beta: store.id(&format!("{name}.beta"))?,
        })
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: &Var<'t>) -> Result<Var<'t>> {
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        x.layer_norm(&g, &b, LAYER_NORM_EPS)
    }
}

/// Linear layers with ReLU between them (none after the last).
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, dims: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn bind(store: &ParamStore, name: &str, depth: usize) -> Option<Self> {
        let layers = (0..depth)
            .map(|i| Linear::bind(store, &format!("{name}.{i}")))
            .collect::<Option<_>>()?;
        Some(Self { layers })
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: &Var<'t>) -> Result<Var<'t>> {
        let mut h = *x;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(tape, store, &h)?;
            if i + 1 < self.layers.len() {
                h = h.relu();
            }
        }
        Ok(h)
    }
}
