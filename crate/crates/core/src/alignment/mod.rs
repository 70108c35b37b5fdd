//! Part-to-step alignment: encoders, similarity, assignment and the
//! contrastive order loss.

pub mod encoders;

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use encoders::{patchify, DiagramEncoder, PartEncoder, SampleInputs};

use crate::assignment::{hungarian, Order, PermutationMatrix};
use crate::error::{Error, Result};
use crate::evaluation::kendall_tau;
use crate::geometry::EquivalenceGroups;
use crate::synth::ManualSample;
use crate::tensor::{
    concat_rows, load_checkpoint, save_checkpoint, split_meta, with_meta, AdamW, GradBuffer, ParamStore, Tape, Var,
};
use crate::train::{fit, TrainConfig, TrainLog};

pub const DEFAULT_TAU: f64 = 0.07;

/// `S[i][j] = f_i · g_j`, rows are parts and columns are steps.
pub fn similarity_matrix(f: &[Vec<f64>], g: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if let Some(bad) = f.iter().chain(g).find(|r| r.len() != f[0].len()) {
        return Err(Error::Shape {
            op: "similarity_matrix",
            lhs: vec![f.len(), f[0].len()],
            rhs: vec![g.len(), bad.len()],
        });
    }
    Ok(f.iter()
        .map(|fi| g.iter().map(|gj| fi.iter().zip(gj).map(|(a, b)| a * b).sum()).collect())
        .collect())
}

/// Assignment maximizing total similarity, and the step-to-part order it implies.
pub fn predict_order(s: &[Vec<f64>]) -> Result<(PermutationMatrix, Order)> {
    let neg: Vec<Vec<f64>> = s.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
    let p = hungarian(&neg)?;
    let o = p.to_order();
    Ok((p, o))
}

/// InfoNCE over `B` aligned pairs: row `i` of `parts` pairs with row `i` of
/// `diagrams`, every other row is a negative.
pub fn order_loss<'t>(parts: &Var<'t>, diagrams: &Var<'t>, tau: f64) -> Result<Var<'t>> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("temperature must be positive, got {tau}")));
    }
    let b = parts.rows();
    if b < 2 || diagrams.rows() != b {
        return Err(Error::Domain(format!(
            "order loss needs at least two aligned pairs, got {b} parts and {} diagrams",
            diagrams.rows()
        )));
    }
    let logits = parts.matmul_t(diagrams)?.scale(1.0 / tau);
    let diag: Vec<usize> = (0..b).map(|i| i * b + i).collect();
    Ok(logits.log_softmax_rows().pick(&diag)?.mean().neg())
}

/// One `(part, step)` positive pair per equivalence group, with the member
/// drawn uniformly.
pub fn sample_pairs(groups: &EquivalenceGroups, gt: &Order, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let step_of = gt.step_of();
    groups
        .groups()
        .iter()
        .map(|g| {
            let part = *g.choose(rng).expect("groups are non-empty");
            (part, step_of[part])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderModelConfig {
    pub dim: usize,
    pub patch: usize,
    pub raster: usize,
    pub tau: f64,
    /// Points fed to the part encoder per part (0 = all).
    pub points: usize,
    /// Hidden width of the patch embedding (0 = linear).
    pub hidden: usize,
}

impl Default for OrderModelConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            patch: 8,
            raster: 64,
            tau: DEFAULT_TAU,
            points: 0,
            hidden: 0,
        }
    }
}

/// Part and diagram encoders trained so matching pairs score highest.
#[derive(Debug, Clone)]
pub struct OrderModel {
    pub config: OrderModelConfig,
    pub params: ParamStore,
    part: PartEncoder,
    diagram: DiagramEncoder,
}

impl OrderModel {
    pub fn new(config: OrderModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let part = PartEncoder::new(&mut params, "order.part", config.dim, &mut rng)?;
        let diagram = DiagramEncoder::new(&mut params, "order.diagram", config.dim, config.patch, config.raster, config.hidden, &mut rng)?;
        Ok(Self {
            config,
            params,
            part,
            diagram,
        })
    }

    pub fn inputs(&self, s: &ManualSample) -> Result<SampleInputs> {
        SampleInputs::from_sample(s, self.config.patch, self.config.points)
    }

    /// Part features `N x D` and pooled diagram features `N x D`.
    pub fn features<'t>(&self, tape: &'t Tape, store: &ParamStore, x: &SampleInputs) -> Result<(Var<'t>, Var<'t>)> {
        let f = self.part.forward(tape, store, &x.points, x.n_parts, x.points_per_part)?;
        let (_, g) = self.diagram.forward(tape, store, &x.patches, x.n_parts)?;
        Ok((f, g))
    }

    pub fn similarity(&self, x: &SampleInputs) -> Result<Vec<Vec<f64>>> {
        let tape = Tape::new();
        let (f, g) = self.features(&tape, &self.params, x)?;
        let s = f.matmul_t(&g)?;
        let n = x.n_parts;
        let v = s.to_vec();
        Ok((0..n).map(|i| v[i * n..(i + 1) * n].to_vec()).collect())
    }

    pub fn predict(&self, x: &SampleInputs) -> Result<(PermutationMatrix, Order)> {
        predict_order(&self.similarity(x)?)
    }

    /// Batch-level contrastive loss over the given samples.
    pub fn batch_loss<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        batch: &[(&SampleInputs, &EquivalenceGroups, &Order)],
        rng: &mut impl Rng,
    ) -> Result<Var<'t>> {
        let mut fs = Vec::new();
        let mut gs = Vec::new();
        for (x, groups, gt) in batch {
            let (f, g) = self.features(tape, store, x)?;
            let pairs = sample_pairs(groups, gt, rng);
            let (pi, si): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            fs.push(f.gather_rows(&pi)?);
            gs.push(g.gather_rows(&si)?);
        }
        order_loss(&concat_rows(&fs)?, &concat_rows(&gs)?, self.config.tau)
    }

    fn meta(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("kind", 1.0),
            ("dim", self.config.dim as f64),
            ("patch", self.config.patch as f64),
            ("raster", self.config.raster as f64),
            ("tau", self.config.tau),
            ("points", self.config.points as f64),
            ("hidden", self.config.hidden as f64),
        ]
    }

    pub fn save(&self, path: &Path, opt: Option<&AdamW>) -> Result<()> {
        save_checkpoint(path, &with_meta(&self.params, &self.meta())?, opt)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = load_checkpoint(path)?;
        let (params, meta) = split_meta(ck.params);
        let bad = |what: &str| Error::format(path, format!("not an order checkpoint: {what}"));
        if meta.get("kind") != Some(&1.0) {
            return Err(bad("kind"));
        }
        let get = |k: &str| meta.get(k).copied().ok_or_else(|| bad(k));
        let config = OrderModelConfig {
            dim: get("dim")? as usize,
            patch: get("patch")? as usize,
            raster: get("raster")? as usize,
            tau: get("tau")?,
            points: get("points")? as usize,
            hidden: get("hidden")? as usize,
        };
        let part = PartEncoder::bind(&params, "order.part").ok_or_else(|| bad("part encoder"))?;
        let diagram = DiagramEncoder::bind(&params, "order.diagram", config.raster).ok_or_else(|| bad("diagram encoder"))?;
        Ok(Self {
            config,
            params,
            part,
            diagram,
        })
    }
}

/// Training sample for the order model.
pub struct OrderExample {
    pub inputs: SampleInputs,
    pub groups: EquivalenceGroups,
    pub gt: Order,
}

impl OrderExample {
    pub fn new(model: &OrderModel, s: &ManualSample) -> Result<Self> {
        Ok(Self {
            inputs: model.inputs(s)?,
            groups: s.furniture.groups.clone(),
            gt: s.gt_order.clone(),
        })
    }
}

/// Mean Kendall tau of predicted orders.
pub fn mean_kt(model: &OrderModel, examples: &[OrderExample]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for e in examples {
        let (_, o) = model.predict(&e.inputs)?;
        total += kendall_tau(&o, &e.gt)?;
    }
    Ok(total / examples.len() as f64)
}

/// Trains in place; logs the mean loss and, when `val` is non-empty, the
/// validation Kendall tau after each epoch.
pub fn train_order_model(
    model: &mut OrderModel,
    train: &[OrderExample],
    val: &[OrderExample],
    cfg: &TrainConfig,
) -> Result<(TrainLog, AdamW)> {
    let mut store = std::mem::take(&mut model.params);
    let mut opt = cfg.optimizer(&store);
    let this = model.clone();
    let log = fit(
        train.len(),
        cfg,
        &mut store,
        &mut opt,
        |s, idx, rng| {
            let tape = Tape::new();
            let batch: Vec<_> = idx
                .iter()
                .map(|&i| (&train[i].inputs, &train[i].groups, &train[i].gt))
                .collect();
            let loss = this.batch_loss(&tape, s, &batch, rng)?;
            let v = loss.item();
            let mut g = GradBuffer::new(s);
            tape.backward(loss)?.accumulate(&mut g);
            Ok((v, g))
        },
        |_, s| {
            if val.is_empty() {
                return Ok(vec![]);
            }
            let snapshot = OrderModel {
                params: s.clone(),
                ..this.clone()
            };
            Ok(vec![("val_kt".to_string(), mean_kt(&snapshot, val)?)])
        },
    )?;
    model.params = store;
    Ok((log, opt))
}
