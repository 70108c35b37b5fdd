//! Pose estimation guided by the manual: positional encodings, a transformer
//! decoder over part and diagram tokens, and the pose head.

mod model;

pub use model::{
    train_pose_model, PoseExample, PoseForward, PoseModel, PoseModelConfig, PosePrediction, PoseTrainStats,
};

use rand::Rng;

use crate::assignment::PermutationMatrix;
use crate::error::{Error, Result};
use crate::tensor::{concat_cols, LayerNorm, Linear, Mlp, ParamStore, Tape, Tensor, Var};

/// Added before normalization; rows at or below it are flagged.
pub const QUAT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeConfig {
    pub dim: usize,
    pub tau_p: f64,
}

impl Default for PeConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            tau_p: 10000.0,
        }
    }
}

impl PeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim % 2 != 0 {
            return Err(Error::Domain(format!("encoding dimension must be even, got {}", self.dim)));
        }
        if !(self.tau_p > 0.0) {
            return Err(Error::Domain(format!("tau_p must be positive, got {}", self.tau_p)));
        }
        Ok(())
    }
}

/// Encoding of one position: channel `2i` is `sin(x / tau_p^(2i/D))` and
/// channel `2i+1` the matching cosine.
pub fn sinusoidal_pe_row(x: f64, cfg: &PeConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let d = cfg.dim;
    let mut row = vec![0.0; d];
    for i in 0..d / 2 {
        let a = x / cfg.tau_p.powf(2.0 * i as f64 / d as f64);
        row[2 * i] = a.sin();
        row[2 * i + 1] = a.cos();
    }
    Ok(row)
}

/// `n x D` encodings of the step positions `1..=n`.
pub fn sinusoidal_pe(n: usize, cfg: &PeConfig) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n * cfg.dim);
    for x in 1..=n {
        out.extend(sinusoidal_pe_row(x as f64, cfg)?);
    }
    Ok(out)
}

/// Part encodings from step encodings: part `i` receives the row of the step
/// it is assigned to. `p` is a dense parts x steps 0/1 matrix.
pub fn permute_pe(phi: &[f64], dim: usize, p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let perm = PermutationMatrix::from_dense(p)?;
    permute_pe_with(phi, dim, &perm)
}

pub fn permute_pe_with(phi: &[f64], dim: usize, p: &PermutationMatrix) -> Result<Vec<f64>> {
    let n = p.len();
    if phi.len() != n * dim {
        return Err(Error::Shape {
            op: "permute_pe",
            lhs: vec![n, n],
            rhs: vec![phi.len() / dim.max(1), dim],
        });
    }
    Ok(p.row_to_col()
        .iter()
        .flat_map(|&step| phi[step * dim..(step + 1) * dim].iter().copied())
        .collect())
}

/// Repeats each step's row for all `k` patches of its diagram.
pub fn broadcast_to_patches(phi: &[f64], dim: usize, k: usize) -> Vec<f64> {
    phi.chunks(dim)
        .flat_map(|row| std::iter::repeat_n(row, k).flatten().copied())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub ffn: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            layers: 6,
            heads: 4,
            dim: 64,
            ffn: 128,
        }
    }
}

impl DecoderConfig {
    /// `layers = 0` is accepted and makes the decoder the identity.
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.dim == 0 || self.dim % self.heads != 0 || self.ffn == 0 {
            return Err(Error::Domain(format!("invalid decoder config {self:?}")));
        }
        Ok(())
    }
}

/// Multi-head scaled dot-product attention.
#[derive(Debug, Clone)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl Attention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            q: Linear::new(store, &format!("{name}.q"), dim, dim, rng)?,
            k: Linear::new(store, &format!("{name}.k"), dim, dim, rng)?,
            v: Linear::new(store, &format!("{name}.v"), dim, dim, rng)?,
            o: Linear::new(store, &format!("{name}.o"), dim, dim, rng)?,
            heads,
        })
    }

    pub fn bind(store: &ParamStore, name: &str, heads: usize) -> Option<Self> {
        Some(Self {
            q: Linear::bind(store, &format!("{name}.q"))?,
            k: Linear::bind(store, &format!("{name}.k"))?,
            v: Linear::bind(store, &format!("{name}.v"))?,
            o: Linear::bind(store, &format!("{name}.o"))?,
            heads,
        })
    }

    /// Attends from the rows of `x` to the rows of `mem`. Also returns the
    /// attention weights averaged over heads, `rows(x) x rows(mem)`.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        x: &Var<'t>,
        mem: &Var<'t>,
    ) -> Result<(Var<'t>, Vec<f64>)> {
        let q = self.q.forward(tape, store, x)?;
        let k = self.k.forward(tape, store, mem)?;
        let v = self.v.forward(tape, store, mem)?;
        let d = q.cols();
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        let mut mean = vec![0.0; x.rows() * mem.rows()];
        for h in 0..self.heads {
            let (a, b) = (h * dh, (h + 1) * dh);
            let w = q
                .slice_cols(a, b)?
                .matmul_t(&k.slice_cols(a, b)?)?
                .scale(scale)
                .softmax_rows();
            for (m, wv) in mean.iter_mut().zip(w.value().iter()) {
                *m += wv / self.heads as f64;
            }
            outs.push(w.matmul(&v.slice_cols(a, b)?)?);
        }
        let merged = if outs.len() == 1 { outs[0] } else { concat_cols(&outs)? };
        Ok((self.o.forward(tape, store, &merged)?, mean))
    }
}

/// Pre-norm block: self-attention over parts, cross-attention to diagram
/// tokens, feed-forward; each wrapped in a residual connection.
#[derive(Debug, Clone)]
pub struct DecoderLayer {
    pub norm_self: LayerNorm,
    pub self_attn: Attention,
    pub norm_cross: LayerNorm,
    pub cross_attn: Attention,
    pub norm_ffn: LayerNorm,
    pub ffn: Mlp,
}

impl DecoderLayer {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &DecoderConfig, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            norm_self: LayerNorm::new(store, &format!("{name}.norm_self"), cfg.dim)?,
            self_attn: Attention::new(store, &format!("{name}.self_attn"), cfg.dim, cfg.heads, rng)?,
            norm_cross: LayerNorm::new(store, &format!("{name}.norm_cross"), cfg.dim)?,
            cross_attn: Attention::new(store, &format!("{name}.cross_attn"), cfg.dim, cfg.heads, rng)?,
            norm_ffn: LayerNorm::new(store, &format!("{name}.norm_ffn"), cfg.dim)?,
            ffn: Mlp::new(store, &format!("{name}.ffn"), &[cfg.dim, cfg.ffn, cfg.dim], rng)?,
        })
    }

    pub fn bind(store: &ParamStore, name: &str, heads: usize) -> Option<Self> {
        Some(Self {
            norm_self: LayerNorm::bind(store, &format!("{name}.norm_self"))?,
            self_attn: Attention::bind(store, &format!("{name}.self_attn"), heads)?,
            norm_cross: LayerNorm::bind(store, &format!("{name}.norm_cross"))?,
            cross_attn: Attention::bind(store, &format!("{name}.cross_attn"), heads)?,
            norm_ffn: LayerNorm::bind(store, &format!("{name}.norm_ffn"))?,
            ffn: Mlp::bind(store, &format!("{name}.ffn"), 2)?,
        })
    }

    /// Returns the new states and the head-averaged cross-attention weights.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        x: &Var<'t>,
        mem: &Var<'t>,
    ) -> Result<(Var<'t>, Vec<f64>)> {
        let h = self.norm_self.forward(tape, store, x)?;
        let (sa, _) = self.self_attn.forward(tape, store, &h, &h)?;
        let x = x.add(&sa)?;
        let h = self.norm_cross.forward(tape, store, &x)?;
        let (ca, weights) = self.cross_attn.forward(tape, store, &h, mem)?;
        let x = x.add(&ca)?;
        let h = self.norm_ffn.forward(tape, store, &x)?;
        let x = x.add(&self.ffn.forward(tape, store, &h)?)?;
        Ok((x, weights))
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub config: DecoderConfig,
    pub layers: Vec<DecoderLayer>,
    /// Applied once to the diagram tokens, and to the output, when `layers > 0`.
    pub memory_norm: Option<LayerNorm>,
    pub final_norm: Option<LayerNorm>,
}

impl Decoder {
    pub fn new(store: &mut ParamStore, name: &str, cfg: DecoderConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let layers = (0..cfg.layers)
            .map(|i| DecoderLayer::new(store, &format!("{name}.layer{i}"), &cfg, rng))
            .collect::<Result<Vec<_>>>()?;
        let (memory_norm, final_norm) = if cfg.layers > 0 {
            (
                Some(LayerNorm::new(store, &format!("{name}.memory_norm"), cfg.dim)?),
                Some(LayerNorm::new(store, &format!("{name}.final_norm"), cfg.dim)?),
            )
        } else {
            (None, None)
        };
        Ok(Self {
            config: cfg,
            layers,
            memory_norm,
            final_norm,
        })
    }

    pub fn bind(store: &ParamStore, name: &str, cfg: DecoderConfig) -> Option<Self> {
        let layers = (0..cfg.layers)
            .map(|i| DecoderLayer::bind(store, &format!("{name}.layer{i}"), cfg.heads))
            .collect::<Option<Vec<_>>>()?;
        let (memory_norm, final_norm) = if cfg.layers > 0 {
            (
                Some(LayerNorm::bind(store, &format!("{name}.memory_norm"))?),
                Some(LayerNorm::bind(store, &format!("{name}.final_norm"))?),
            )
        } else {
            (None, None)
        };
        Some(Self {
            config: cfg,
            layers,
            memory_norm,
            final_norm,
        })
    }

    /// `x`: part tokens `N x D`; `mem`: diagram tokens `NK x D`. Returns the
    /// output states and one `N x NK` cross-attention map per layer.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        x: &Var<'t>,
        mem: &Var<'t>,
    ) -> Result<(Var<'t>, Vec<Vec<f64>>)> {
        let d = self.config.dim;
        if x.cols() != d || mem.cols() != d {
            return Err(Error::Shape {
                op: "decoder",
                lhs: vec![x.rows(), x.cols()],
                rhs: vec![mem.rows(), mem.cols()],
            });
        }
        let mem = match &self.memory_norm {
            Some(n) => n.forward(tape, store, mem)?,
            None => *mem,
        };
        let mut h = *x;
        let mut maps = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, w) = layer.forward(tape, store, &h, &mem)?;
            h = next;
            maps.push(w);
        }
        if let Some(n) = &self.final_norm {
            h = n.forward(tape, store, &h)?;
        }
        Ok((h, maps))
    }
}

/// Translation and unit-quaternion heads.
#[derive(Debug, Clone, Copy)]
pub struct PoseHead {
    pub translation: Linear,
    pub rotation: Linear,
}

impl PoseHead {
    /// The rotation head starts with zero weights and identity bias.
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let translation = Linear::new(store, &format!("{name}.translation"), dim, 3, rng)?;
        let rotation = Linear::new(store, &format!("{name}.rotation"), dim, 4, rng)?;
        *store.get_mut(rotation.w) = Tensor::zeros(vec![dim, 4]);
        *store.get_mut(rotation.b) = Tensor::new(vec![4], vec![1.0, 0.0, 0.0, 0.0])?;
        Ok(Self { translation, rotation })
    }

    pub fn bind(store: &ParamStore, name: &str) -> Option<Self> {
        Some(Self {
            translation: Linear::bind(store, &format!("{name}.translation"))?,
            rotation: Linear::bind(store, &format!("{name}.rotation"))?,
        })
    }

    /// Translations `N x 3`, unit quaternions `N x 4`, and a flag per row
    /// whose raw quaternion norm fell to the guard.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        x: &Var<'t>,
    ) -> Result<(Var<'t>, Var<'t>, Vec<bool>)> {
        let t = self.translation.forward(tape, store, x)?;
        let raw = self.rotation.forward(tape, store, x)?;
        let clamped = raw
            .value()
            .chunks(4)
            .map(|q| q.iter().map(|v| v * v).sum::<f64>().sqrt() <= QUAT_EPS)
            .collect();
        Ok((t, raw.l2_normalize_rows(QUAT_EPS), clamped))
    }
}
