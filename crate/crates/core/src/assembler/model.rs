use std::cell::RefCell;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    broadcast_to_patches, permute_pe_with, sinusoidal_pe, Decoder, DecoderConfig, PeConfig, PoseHead,
};
use crate::alignment::{DiagramEncoder, PartEncoder, SampleInputs};
use crate::assignment::{Order, PermutationMatrix};
use crate::error::{Error, Result};
use crate::geometry::{EquivalenceGroups, PointCloud, Pose};
use crate::objective::{match_within_groups, pose_loss_tape, LossWeights, PoseLosses, PoseTarget, TapeLosses};
use crate::synth::ManualSample;
use crate::tensor::{load_checkpoint, save_checkpoint, split_meta, with_meta, AdamW, GradBuffer, ParamStore, Tape, Var};
use crate::train::{fit, TrainConfig, TrainLog};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseModelConfig {
    pub dim: usize,
    pub heads: usize,
    pub ffn: usize,
    pub layers: usize,
    pub patch: usize,
    pub raster: usize,
    /// Points per part fed to the encoder and the losses (0 = all).
    pub points: usize,
    /// Hidden width of the patch embedding (0 = linear).
    pub hidden: usize,
    pub tau_p: f64,
}

impl Default for PoseModelConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            heads: 4,
            ffn: 128,
            layers: 6,
            patch: 8,
            raster: 64,
            points: 0,
            hidden: 0,
            tau_p: 10000.0,
        }
    }
}

impl PoseModelConfig {
    pub fn decoder(&self) -> DecoderConfig {
        DecoderConfig {
            layers: self.layers,
            heads: self.heads,
            dim: self.dim,
            ffn: self.ffn,
        }
    }

    pub fn pe(&self) -> PeConfig {
        PeConfig {
            dim: self.dim,
            tau_p: self.tau_p,
        }
    }
}

/// Encoders, decoder and pose head with their own parameters.
#[derive(Debug, Clone)]
pub struct PoseModel {
    pub config: PoseModelConfig,
    pub params: ParamStore,
    part: PartEncoder,
    diagram: DiagramEncoder,
    decoder: Decoder,
    head: PoseHead,
}

/// Tape outputs of one forward pass.
pub struct PoseForward<'t> {
    pub translations: Var<'t>,
    pub quaternions: Var<'t>,
    pub decoder_output: Var<'t>,
    /// Per layer, `N x NK` head-averaged cross-attention weights.
    pub attention: Vec<Vec<f64>>,
    pub clamped: Vec<bool>,
}

impl PoseForward<'_> {
    /// Plain poses; rows whose quaternion hit the norm guard fall back to the
    /// identity rotation.
    pub fn poses(&self) -> Result<Vec<Pose>> {
        let t = self.translations.to_vec();
        let q = self.quaternions.to_vec();
        self.clamped
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let quat = if c {
                    Pose::IDENTITY.q
                } else {
                    [q[i * 4], q[i * 4 + 1], q[i * 4 + 2], q[i * 4 + 3]]
                };
                Pose::new(quat, [t[i * 3], t[i * 3 + 1], t[i * 3 + 2]])
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosePrediction {
    pub poses: Vec<Pose>,
    /// `N x D`, row-major.
    pub decoder_output: Vec<f64>,
    pub attention_maps: Vec<Vec<f64>>,
    pub clamped: Vec<bool>,
}

impl PoseModel {
    pub fn new(config: PoseModelConfig, seed: u64) -> Result<Self> {
        config.pe().validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let part = PartEncoder::new(&mut params, "pose.part", config.dim, &mut rng)?;
        let diagram = DiagramEncoder::new(
            &mut params,
            "pose.diagram",
            config.dim,
            config.patch,
            config.raster,
            config.hidden,
            &mut rng,
        )?;
        let decoder = Decoder::new(&mut params, "pose.decoder", config.decoder(), &mut rng)?;
        let head = PoseHead::new(&mut params, "pose.head", config.dim, &mut rng)?;
        Ok(Self {
            config,
            params,
            part,
            diagram,
            decoder,
            head,
        })
    }

    pub fn inputs(&self, s: &ManualSample) -> Result<SampleInputs> {
        SampleInputs::from_sample(s, self.config.patch, self.config.points)
    }

    /// `p` assigns parts (rows) to steps (columns) and decides which step
    /// encoding each part receives.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        x: &SampleInputs,
        p: &PermutationMatrix,
    ) -> Result<PoseForward<'t>> {
        let (n, d) = (x.n_parts, self.config.dim);
        if p.len() != n {
            return Err(Error::Domain(format!("permutation of size {} for {n} parts", p.len())));
        }
        let f_parts = self.part.forward(tape, store, &x.points, n, x.points_per_part)?;
        let (f_diag, _) = self.diagram.forward(tape, store, &x.patches, n)?;
        let phi = sinusoidal_pe(n, &self.config.pe())?;
        let part_pe = tape.constant(n, d, permute_pe_with(&phi, d, p)?);
        let diag_pe = tape.constant(n * x.k, d, broadcast_to_patches(&phi, d, x.k));
        let queries = f_parts.add(&part_pe)?;
        let memory = f_diag.add(&diag_pe)?;
        let (out, attention) = self.decoder.forward(tape, store, &queries, &memory)?;
        let (translations, quaternions, clamped) = self.head.forward(tape, store, &out)?;
        Ok(PoseForward {
            translations,
            quaternions,
            decoder_output: out,
            attention,
            clamped,
        })
    }

    pub fn predict(&self, x: &SampleInputs, p: &PermutationMatrix) -> Result<PosePrediction> {
        let tape = Tape::new();
        let fwd = self.forward(&tape, &self.params, x, p)?;
        Ok(PosePrediction {
            poses: fwd.poses()?,
            decoder_output: fwd.decoder_output.to_vec(),
            attention_maps: fwd.attention.clone(),
            clamped: fwd.clamped.clone(),
        })
    }

    /// Loss of one sample with the ground-truth order driving the encodings;
    /// the within-group matching is recomputed from the current prediction.
    pub fn sample_loss<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        ex: &PoseExample,
        w: &LossWeights,
    ) -> Result<TapeLosses<'t>> {
        let fwd = self.forward(tape, store, &ex.inputs, &ex.gt_order.to_permutation())?;
        let m = match_within_groups(&fwd.poses()?, &ex.gt_poses, &ex.parts, &ex.groups)?;
        pose_loss_tape(&fwd.translations, &fwd.quaternions, &ex.target, &m, w)
    }

    fn meta(&self) -> Vec<(&'static str, f64)> {
        let c = &self.config;
        vec![
            ("kind", 2.0),
            ("dim", c.dim as f64),
            ("heads", c.heads as f64),
            ("ffn", c.ffn as f64),
            ("layers", c.layers as f64),
            ("patch", c.patch as f64),
            ("raster", c.raster as f64),
            ("points", c.points as f64),
            ("hidden", c.hidden as f64),
            ("tau_p", c.tau_p),
        ]
    }

    pub fn save(&self, path: &Path, opt: Option<&AdamW>) -> Result<()> {
        save_checkpoint(path, &with_meta(&self.params, &self.meta())?, opt)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = load_checkpoint(path)?;
        let (params, meta) = split_meta(ck.params);
        let bad = |what: &str| Error::format(path, format!("not a pose checkpoint: {what}"));
        if meta.get("kind") != Some(&2.0) {
            return Err(bad("kind"));
        }
        let get = |k: &str| meta.get(k).copied().ok_or_else(|| bad(k));
        let config = PoseModelConfig {
            dim: get("dim")? as usize,
            heads: get("heads")? as usize,
            ffn: get("ffn")? as usize,
            layers: get("layers")? as usize,
            patch: get("patch")? as usize,
            raster: get("raster")? as usize,
            points: get("points")? as usize,
            hidden: get("hidden")? as usize,
            tau_p: get("tau_p")?,
        };
        let part = PartEncoder::bind(&params, "pose.part").ok_or_else(|| bad("part encoder"))?;
        let diagram =
            DiagramEncoder::bind(&params, "pose.diagram", config.raster).ok_or_else(|| bad("diagram encoder"))?;
        let decoder = Decoder::bind(&params, "pose.decoder", config.decoder()).ok_or_else(|| bad("decoder"))?;
        let head = PoseHead::bind(&params, "pose.head").ok_or_else(|| bad("pose head"))?;
        Ok(Self {
            config,
            params,
            part,
            diagram,
            decoder,
            head,
        })
    }
}

/// Training or evaluation sample for the pose model. `parts` are the
/// (possibly thinned) canonical clouds the model actually sees.
#[derive(Debug, Clone)]
pub struct PoseExample {
    pub inputs: SampleInputs,
    pub parts: Vec<PointCloud>,
    pub target: PoseTarget,
    pub gt_poses: Vec<Pose>,
    pub groups: EquivalenceGroups,
    pub gt_order: Order,
}

impl PoseExample {
    pub fn new(model: &PoseModel, s: &ManualSample) -> Result<Self> {
        let inputs = model.inputs(s)?;
        let parts = (0..inputs.n_parts)
            .map(|i| {
                let pts = inputs.part_points(i).chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
                PointCloud::new(pts)
            })
            .collect::<Result<Vec<_>>>()?;
        let target = PoseTarget::new(&parts, &s.furniture.gt_poses)?;
        Ok(Self {
            inputs,
            parts,
            target,
            gt_poses: s.furniture.gt_poses.clone(),
            groups: s.furniture.groups.clone(),
            gt_order: s.gt_order.clone(),
        })
    }
}

/// Running sums of the unweighted loss terms within an epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PoseTrainStats {
    pub translation: f64,
    pub chamfer: f64,
    pub point: f64,
    pub shape: f64,
    pub samples: usize,
}

impl PoseTrainStats {
    fn add(&mut self, l: &PoseLosses) {
        self.translation += l.translation;
        self.chamfer += l.chamfer;
        self.point += l.point;
        self.shape += l.shape;
        self.samples += 1;
    }

    fn columns(&self) -> Vec<(String, f64)> {
        let n = self.samples.max(1) as f64;
        vec![
            ("l_t".into(), self.translation / n),
            ("l_c".into(), self.chamfer / n),
            ("l_e".into(), self.point / n),
            ("l_s".into(), self.shape / n),
        ]
    }
}

/// Trains in place with mean-over-batch loss; the log carries the mean of
/// each unweighted loss term per epoch.
pub fn train_pose_model(
    model: &mut PoseModel,
    train: &[PoseExample],
    cfg: &TrainConfig,
    weights: &LossWeights,
) -> Result<(TrainLog, AdamW)> {
    weights.validate()?;
    let mut store = std::mem::take(&mut model.params);
    let mut opt = cfg.optimizer(&store);
    let this = model.clone();
    let stats = RefCell::new(PoseTrainStats::default());
    let log = fit(
        train.len(),
        cfg,
        &mut store,
        &mut opt,
        |s, idx, _| {
            let mut grads = GradBuffer::new(s);
            let mut total = 0.0;
            for &i in idx {
                let tape = Tape::new();
                let l = this.sample_loss(&tape, s, &train[i], weights)?;
                let v = l.values();
                stats.borrow_mut().add(&v);
                total += v.total;
                tape.backward(l.total)?.accumulate(&mut grads);
            }
            let b = idx.len() as f64;
            grads.scale(1.0 / b);
            Ok((total / b, grads))
        },
        |_, _| Ok(std::mem::take(&mut *stats.borrow_mut()).columns()),
    )?;
    model.params = store;
    Ok((log, opt))
}
