//! Point-cloud and difference-image encoders shared by the order and pose models.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{farthest_point_sample, PointCloud};
use crate::synth::{ManualSample, Raster};
use crate::tensor::{Linear, Mlp, ParamStore, Tape, Var};

/// Widths of the shared per-point MLP.
pub const POINT_MLP: [usize; 3] = [3, 32, 64];

/// Model inputs extracted from one manual: canonical part points and the
/// patchified difference images.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleInputs {
    pub n_parts: usize,
    /// Points per part (all parts are resampled to the same count).
    pub points_per_part: usize,
    /// `(n_parts * points_per_part) x 3`, part-major.
    pub points: Vec<f64>,
    /// Patches per diagram.
    pub k: usize,
    pub patch: usize,
    /// `(n_parts * k) x patch²`, diagram-major, patches in row-major grid order.
    pub patches: Vec<f64>,
}

/// Splits a raster into non-overlapping `p x p` patches (row-major grid),
/// each flattened row-major.
pub fn patchify(r: &Raster, p: usize) -> Result<Vec<f64>> {
    let (w, h) = (r.width(), r.height());
    if p == 0 || w % p != 0 || h % p != 0 {
        return Err(Error::Domain(format!("{w}x{h} raster is not divisible into {p}x{p} patches")));
    }
    let mut out = Vec::with_capacity(w * h);
    for py in 0..h / p {
        for px in 0..w / p {
            for y in 0..p {
                for x in 0..p {
                    out.push(r.intensity(px * p + x, py * p + y));
                }
            }
        }
    }
    Ok(out)
}

impl SampleInputs {
    /// `points_per_part = 0` keeps every point; otherwise parts with more
    /// points are thinned by farthest point sampling.
    pub fn new(parts: &[PointCloud], diffs: &[Raster], patch: usize, points_per_part: usize) -> Result<Self> {
        if parts.len() != diffs.len() || parts.is_empty() {
            return Err(Error::Domain(format!(
                "{} parts but {} difference images",
                parts.len(),
                diffs.len()
            )));
        }
        let m = if points_per_part == 0 {
            parts.iter().map(PointCloud::len).min().unwrap_or(0)
        } else {
            points_per_part
        };
        let mut points = Vec::with_capacity(parts.len() * m * 3);
        for c in parts {
            if c.len() < m {
                return Err(Error::Domain(format!("part has {} points, need {m}", c.len())));
            }
            if c.len() == m {
                points.extend(c.to_flat());
            } else {
                points.extend(farthest_point_sample(c, m)?.to_flat());
            }
        }
        let mut patches = Vec::new();
        for d in diffs {
            patches.extend(patchify(d, patch)?);
        }
        let k = (diffs[0].width() / patch) * (diffs[0].height() / patch);
        Ok(Self {
            n_parts: parts.len(),
            points_per_part: m,
            points,
            k,
            patch,
            patches,
        })
    }

    pub fn from_sample(s: &ManualSample, patch: usize, points_per_part: usize) -> Result<Self> {
        Self::new(&s.furniture.parts, &s.diffs, patch, points_per_part)
    }

    /// Canonical points of part `i`.
    pub fn part_points(&self, i: usize) -> &[f64] {
        let m3 = self.points_per_part * 3;
        &self.points[i * m3..(i + 1) * m3]
    }
}

/// Shared per-point MLP (ReLU after every layer), max-pool over points,
/// then a linear map to `dim`.
#[derive(Debug, Clone)]
pub struct PartEncoder {
    pub mlp: Mlp,
    pub proj: Linear,
}

impl PartEncoder {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            mlp: Mlp::new(store, &format!("{name}.mlp"), &POINT_MLP, rng)?,
            proj: Linear::new(store, &format!("{name}.proj"), POINT_MLP[2], dim, rng)?,
        })
    }

    pub fn bind(store: &ParamStore, name: &str) -> Option<Self> {
        Some(Self {
            mlp: Mlp::bind(store, &format!("{name}.mlp"), POINT_MLP.len() - 1)?,
            proj: Linear::bind(store, &format!("{name}.proj"))?,
        })
    }

    /// `N x dim` features for `n` parts of `m` points each.
    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, points: &[f64], n: usize, m: usize) -> Result<Var<'t>> {
        let x = tape.constant(n * m, 3, points.to_vec());
        let h = self.mlp.forward(tape, store, &x)?.relu();
        let pooled = h.max_pool_rows(m)?;
        self.proj.forward(tape, store, &pooled)
    }
}

/// Fixed 2-D sinusoidal encoding of patch positions: the first half of the
/// channels encodes the grid row, the second half the column.
pub fn patch_position_encoding(grid_w: usize, grid_h: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let enc = |pos: usize, out: &mut [f64]| {
        for (c, v) in out.iter_mut().enumerate() {
            let i = c / 2;
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / half as f64);
            let a = pos as f64 * freq;
            *v = if c % 2 == 0 { a.sin() } else { a.cos() };
        }
    };
    let mut out = vec![0.0; grid_w * grid_h * dim];
    for r in 0..grid_h {
        for c in 0..grid_w {
            let row = &mut out[(r * grid_w + c) * dim..(r * grid_w + c + 1) * dim];
            let (a, b) = row.split_at_mut(half);
            enc(r, a);
            enc(c, b);
        }
    }
    out
}

/// Patch embedding (linear, or one hidden ReLU layer when `hidden > 0`)
/// plus a fixed position term.
#[derive(Debug, Clone)]
pub struct DiagramEncoder {
    pub embed: Mlp,
    pub patch: usize,
    pub raster: usize,
    pos: Vec<f64>,
}

impl DiagramEncoder {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        patch: usize,
        raster: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if patch == 0 || raster % patch != 0 {
            return Err(Error::Domain(format!("raster {raster} not divisible by patch {patch}")));
        }
        let dims = if hidden == 0 {
            vec![patch * patch, dim]
        } else {
            vec![patch * patch, hidden, dim]
        };
        let embed = Mlp::new(store, &format!("{name}.embed"), &dims, rng)?;
        Ok(Self::with_embed(embed, dim, patch, raster))
    }

    pub fn bind(store: &ParamStore, name: &str, raster: usize) -> Option<Self> {
        let prefix = format!("{name}.embed");
        let depth = if store.id(&format!("{prefix}.1.weight")).is_some() { 2 } else { 1 };
        let embed = Mlp::bind(store, &prefix, depth)?;
        let fan_in = embed.layers[0].fan_in;
        let dim = embed.layers[depth - 1].fan_out;
        let patch = (fan_in as f64).sqrt().round() as usize;
        if patch == 0 || patch * patch != fan_in || raster % patch != 0 {
            return None;
        }
        Some(Self::with_embed(embed, dim, patch, raster))
    }

    /// Width of the hidden layer, 0 for a purely linear embedding.
    pub fn hidden(&self) -> usize {
        if self.embed.layers.len() > 1 {
            self.embed.layers[0].fan_out
        } else {
            0
        }
    }

    pub fn dim(&self) -> usize {
        self.embed.layers.last().map_or(0, |l| l.fan_out)
    }

    fn with_embed(embed: Mlp, dim: usize, patch: usize, raster: usize) -> Self {
        let g = raster / patch;
        Self {
            embed,
            patch,
            raster,
            pos: patch_position_encoding(g, g, dim),
        }
    }

    pub fn patches_per_diagram(&self) -> usize {
        (self.raster / self.patch).pow(2)
    }

    /// Patch features `(n*K) x dim` and their max-pool over patches `n x dim`.
    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, patches: &[f64], n: usize) -> Result<(Var<'t>, Var<'t>)> {
        let k = self.patches_per_diagram();
        let pp = self.patch * self.patch;
        if patches.len() != n * k * pp {
            return Err(Error::Shape {
                op: "encode_diagram",
                lhs: vec![n * k, pp],
                rhs: vec![patches.len()],
            });
        }
        let x = tape.constant(n * k, pp, patches.to_vec());
        let e = self.embed.forward(tape, store, &x)?;
        let pos: Vec<f64> = (0..n).flat_map(|_| self.pos.iter().copied()).collect();
        let f = e.add(&tape.constant(n * k, self.dim(), pos))?;
        let g = f.max_pool_rows(k)?;
        Ok((f, g))
    }
}
