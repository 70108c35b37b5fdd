use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{accurate_parts, kendall_tau, perturb_order_gumbel, scd, success_rate, MetricConfig};
use crate::alignment::OrderModel;
use crate::assembler::{PoseExample, PoseModel, PosePrediction};
use crate::assignment::{Order, PermutationMatrix};
use crate::error::{Error, Result};
use crate::objective::match_within_groups;
use crate::synth::{ManualSample, Raster};

/// Which permutation drives the part positional encodings at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderMode {
    Predicted,
    Gt,
    None,
}

impl fmt::Display for OrderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrderMode::Predicted => "predicted",
            OrderMode::Gt => "gt",
            OrderMode::None => "none",
        })
    }
}

impl FromStr for OrderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "predicted" => Ok(OrderMode::Predicted),
            "gt" => Ok(OrderMode::Gt),
            "none" => Ok(OrderMode::None),
            other => Err(Error::Config(format!("unknown order mode `{other}` (predicted, gt, none)"))),
        }
    }
}

/// A sample prepared for evaluation.
pub struct EvalSample {
    pub id: String,
    pub example: PoseExample,
    /// Part-to-step assignment predicted by the order model, if one was given.
    pub predicted: Option<PermutationMatrix>,
}

impl EvalSample {
    pub fn new(id: impl Into<String>, s: &ManualSample, pose: &PoseModel, order: Option<&OrderModel>) -> Result<Self> {
        let predicted = match order {
            Some(m) => Some(m.predict(&m.inputs(s)?)?.0),
            None => None,
        };
        Ok(Self {
            id: id.into(),
            example: PoseExample::new(pose, s)?,
            predicted,
        })
    }

    pub fn permutation(&self, mode: OrderMode) -> Result<PermutationMatrix> {
        match mode {
            OrderMode::Gt => Ok(self.example.gt_order.to_permutation()),
            OrderMode::None => Ok(PermutationMatrix::identity(self.example.parts.len())),
            OrderMode::Predicted => self
                .predicted
                .clone()
                .ok_or_else(|| Error::Config("predicted order mode needs an order checkpoint".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: String,
    pub n_parts: usize,
    pub scd: f64,
    pub pa: f64,
    pub sr: f64,
    pub accurate_parts: usize,
    /// Kendall tau of the order fed to the pose model against the ground truth.
    pub kt: f64,
}

/// Metrics of one prediction under the within-group matching.
pub fn score_prediction(
    id: &str,
    ex: &PoseExample,
    pred: &PosePrediction,
    order: &Order,
    cfg: &MetricConfig,
) -> Result<SampleMetrics> {
    let m = match_within_groups(&pred.poses, &ex.gt_poses, &ex.parts, &ex.groups)?;
    let flags = accurate_parts(&pred.poses, &ex.gt_poses, &ex.parts, &m, cfg)?;
    let hits = flags.iter().filter(|&&f| f).count();
    let pa = hits as f64 / flags.len() as f64;
    let kt = if order.len() >= 2 { kendall_tau(order, &ex.gt_order)? } else { 1.0 };
    Ok(SampleMetrics {
        id: id.to_string(),
        n_parts: ex.parts.len(),
        scd: scd(&pred.poses, &ex.gt_poses, &ex.parts, &m, cfg)?,
        pa,
        sr: success_rate(pa),
        accurate_parts: hits,
        kt,
    })
}

pub fn evaluate_sample(
    pose: &PoseModel,
    s: &EvalSample,
    p: &PermutationMatrix,
    cfg: &MetricConfig,
) -> Result<(SampleMetrics, PosePrediction)> {
    let pred = pose.predict(&s.example.inputs, p)?;
    let metrics = score_prediction(&s.id, &s.example, &pred, &p.to_order(), cfg)?;
    Ok((metrics, pred))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: OrderMode,
    pub samples: usize,
    pub scd: f64,
    /// Per-shape part accuracy averaged over shapes.
    pub pa: f64,
    /// Accurate parts over all parts of the split.
    pub pa_per_part: f64,
    pub sr: f64,
    pub kt: f64,
    pub metric: MetricConfig,
    pub per_sample: Vec<SampleMetrics>,
}

impl EvalReport {
    pub fn from_samples(mode: OrderMode, metric: MetricConfig, per_sample: Vec<SampleMetrics>) -> Result<Self> {
        if per_sample.is_empty() {
            return Err(Error::Config("nothing to evaluate".into()));
        }
        let n = per_sample.len() as f64;
        let mean = |f: fn(&SampleMetrics) -> f64| per_sample.iter().map(f).sum::<f64>() / n;
        let parts: usize = per_sample.iter().map(|s| s.n_parts).sum();
        let hits: usize = per_sample.iter().map(|s| s.accurate_parts).sum();
        Ok(Self {
            mode,
            samples: per_sample.len(),
            scd: mean(|s| s.scd),
            pa: mean(|s| s.pa),
            pa_per_part: hits as f64 / parts as f64,
            sr: mean(|s| s.sr),
            kt: mean(|s| s.kt),
            metric,
            per_sample,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,n_parts,scd,pa,sr,kt\n");
        for s in &self.per_sample {
            out.push_str(&format!("{},{},{},{},{},{}\n", s.id, s.n_parts, s.scd, s.pa, s.sr, s.kt));
        }
        out
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let json = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Json {
            path: json.clone(),
            source: e,
        })?;
        fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
        let csv = dir.join(format!("{stem}.csv"));
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Runs pose inference under `mode` on every sample. `workers = 0` uses all
/// cores; results do not depend on the worker count.
pub fn evaluate(
    pose: &PoseModel,
    samples: &[EvalSample],
    mode: OrderMode,
    cfg: &MetricConfig,
    workers: usize,
) -> Result<EvalReport> {
    cfg.validate()?;
    let rows = pool(workers)?.install(|| {
        samples
            .par_iter()
            .map(|s| Ok(evaluate_sample(pose, s, &s.permutation(mode)?, cfg)?.0))
            .collect::<Result<Vec<_>>>()
    })?;
    EvalReport::from_samples(mode, *cfg, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub noise_scale: f64,
    pub kt: f64,
    pub pa: f64,
}

/// Gumbel noise on the ground-truth permutation, then pose inference with
/// the perturbed order. `seeds` perturbations are drawn per sample and scale.
pub fn kt_sweep(
    pose: &PoseModel,
    samples: &[EvalSample],
    scales: &[f64],
    seeds: u64,
    base_seed: u64,
    cfg: &MetricConfig,
    workers: usize,
) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let pool = pool(workers)?;
    let mut rows = Vec::with_capacity(scales.len());
    for (si, &scale) in scales.iter().enumerate() {
        let per: Vec<(f64, f64)> = pool.install(|| {
            samples
                .par_iter()
                .enumerate()
                .flat_map_iter(|(k, s)| (0..seeds).map(move |r| (k, s, r)))
                .map(|(k, s, r)| {
                    let seed = base_seed
                        .wrapping_add((si as u64) << 40)
                        .wrapping_add((k as u64) << 20)
                        .wrapping_add(r);
                    let p = perturb_order_gumbel(&s.example.gt_order.to_permutation(), scale, seed)?;
                    let (m, _) = evaluate_sample(pose, s, &p, cfg)?;
                    Ok((m.kt, m.pa))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let n = per.len().max(1) as f64;
        rows.push(SweepRow {
            noise_scale: scale,
            kt: per.iter().map(|r| r.0).sum::<f64>() / n,
            pa: per.iter().map(|r| r.1).sum::<f64>() / n,
        });
    }
    Ok(rows)
}

/// Buckets of mean Kendall tau used to summarize a sweep.
pub const KT_BUCKETS: [(&str, f64, f64); 3] = [("kt<0.2", f64::NEG_INFINITY, 0.2), ("0.2<=kt<=0.6", 0.2, 0.6), ("kt>0.8", 0.8, f64::INFINITY)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub bucket: String,
    pub scales: usize,
    pub pa: f64,
}

/// Mean PA of the sweep rows whose mean KT falls in each bucket; the last
/// bucket is open (`> 0.8`), the others half-open or closed as labelled.
pub fn kt_buckets(rows: &[SweepRow]) -> Vec<BucketRow> {
    KT_BUCKETS
        .iter()
        .map(|&(name, lo, hi)| {
            let inside: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| match name {
                    "kt<0.2" => r.kt < hi,
                    "kt>0.8" => r.kt > lo,
                    _ => r.kt >= lo && r.kt <= hi,
                })
                .collect();
            let pa = if inside.is_empty() {
                f64::NAN
            } else {
                inside.iter().map(|r| r.pa).sum::<f64>() / inside.len() as f64
            };
            BucketRow {
                bucket: name.to_string(),
                scales: inside.len(),
                pa,
            }
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("noise_scale,kt,pa\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.noise_scale, r.kt, r.pa));
    }
    out
}

pub fn buckets_csv(rows: &[BucketRow]) -> String {
    let mut out = String::from("bucket,scales,pa\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.bucket, r.scales, r.pa));
    }
    out
}

/// Layer-averaged attention of part `i`, summed per diagram: `N` masses.
pub fn diagram_mass(pred: &PosePrediction, part: usize, n: usize, k: usize) -> Vec<f64> {
    let layers = pred.attention_maps.len().max(1) as f64;
    let mut mass = vec![0.0; n];
    for map in &pred.attention_maps {
        let row = &map[part * n * k..(part + 1) * n * k];
        for (j, m) in mass.iter_mut().enumerate() {
            *m += row[j * k..(j + 1) * k].iter().sum::<f64>() / layers;
        }
    }
    mass
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionHits {
    pub hits: usize,
    pub parts: usize,
}

impl AttentionHits {
    pub fn rate(&self) -> f64 {
        self.hits as f64 / self.parts.max(1) as f64
    }
}

/// Counts parts whose largest per-diagram attention mass (ground-truth order
/// encodings) lands on the diagram of their own step. Ties go to the lowest
/// step.
pub fn attention_hits(pose: &PoseModel, samples: &[EvalSample], workers: usize) -> Result<AttentionHits> {
    let per = pool(workers)?.install(|| {
        samples
            .par_iter()
            .map(|s| {
                let ex = &s.example;
                let n = ex.parts.len();
                let pred = pose.predict(&ex.inputs, &ex.gt_order.to_permutation())?;
                let steps = ex.gt_order.step_of();
                let hits = (0..n)
                    .filter(|&i| {
                        let mass = diagram_mass(&pred, i, n, ex.inputs.k);
                        let best = (0..n).fold(0, |b, j| if mass[j] > mass[b] { j } else { b });
                        best == steps[i]
                    })
                    .count();
                Ok((hits, n))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(AttentionHits {
        hits: per.iter().map(|p| p.0).sum(),
        parts: per.iter().map(|p| p.1).sum(),
    })
}

/// One raster per part: the `N` diagrams side by side, every patch filled
/// with its layer-averaged attention weight relative to the row maximum.
pub fn attention_rasters(pred: &PosePrediction, n: usize, patch: usize, raster: usize) -> Result<Vec<Raster>> {
    let g = raster / patch;
    let k = g * g;
    if pred.attention_maps.is_empty() {
        return Err(Error::Domain("model has no decoder layers, so no attention to export".into()));
    }
    let layers = pred.attention_maps.len() as f64;
    (0..n)
        .map(|i| {
            let mut row = vec![0.0; n * k];
            for map in &pred.attention_maps {
                for (r, v) in row.iter_mut().zip(&map[i * n * k..(i + 1) * n * k]) {
                    *r += v / layers;
                }
            }
            let max = row.iter().cloned().fold(0.0, f64::max);
            let mut img = vec![0.0; n * raster * raster];
            let width = n * raster;
            for j in 0..n {
                for c in 0..k {
                    let v = if max > 0.0 { row[j * k + c] / max } else { 0.0 };
                    let (py, px) = (c / g, c % g);
                    for y in 0..patch {
                        for x in 0..patch {
                            img[(py * patch + y) * width + j * raster + px * patch + x] = v;
                        }
                    }
                }
            }
            Raster::from_intensities(width, raster, &img)
        })
        .collect()
}
