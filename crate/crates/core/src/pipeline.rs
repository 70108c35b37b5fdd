//! The command suite as library calls: every function reads a merged
//! [`RunConfig`], writes its artifacts under `out` and echoes the config.

use std::fs;
use std::path::{Path, PathBuf};

use crate::alignment::{mean_kt, train_order_model, OrderExample, OrderModel};
use crate::assembler::{train_pose_model, PoseExample, PoseModel};
use crate::config::{RunConfig, Stage};
use crate::error::{Error, Result};
use crate::evaluation::{
    attention_hits, attention_rasters, buckets_csv, evaluate, evaluate_sample, kendall_tau, kt_buckets, kt_sweep,
    sweep_csv, AttentionHits, BucketRow, EvalReport, EvalSample, OrderMode, SweepRow,
};
use crate::synth::dataset::{build_dataset, Dataset, Manifest, SampleEntry, Split};
use crate::synth::ManualSample;
use crate::train::TrainLog;

pub const ORDER_CHECKPOINT: &str = "order.mpaw";
pub const POSE_CHECKPOINT: &str = "pose.mpaw";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const REPORT_STEM: &str = "report";
pub const SWEEP_FILE: &str = "kt_sweep.csv";
pub const BUCKETS_FILE: &str = "kt_buckets.csv";

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg.require(&cfg.out, "out")?.to_path_buf();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    cfg.echo(&out)?;
    Ok(out)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn open_dataset(cfg: &RunConfig) -> Result<Dataset> {
    Dataset::open(cfg.require(&cfg.dataset, "dataset")?)
}

fn load_split(ds: &Dataset, split: Split, workers: usize) -> Result<Vec<(SampleEntry, ManualSample)>> {
    let entries: Vec<SampleEntry> = ds.entries(split).into_iter().cloned().collect();
    let samples = pool(workers)?.install(|| ds.load_split(split))?;
    Ok(entries.into_iter().zip(samples).collect())
}

/// `gen`: writes a dataset to `out`.
pub fn gen(cfg: &RunConfig) -> Result<Manifest> {
    let out = prepare_out(cfg)?;
    pool(cfg.workers)?.install(|| build_dataset(&cfg.dataset_config(), &out))
}

pub struct OrderRun {
    pub model: OrderModel,
    pub log: TrainLog,
    pub checkpoint: PathBuf,
}

/// `train-order`: fits the order model on the train split, tracking the
/// validation Kendall tau, and exports validation similarities and orders.
pub fn train_order(cfg: &RunConfig) -> Result<OrderRun> {
    let ds = open_dataset(cfg)?;
    let out = prepare_out(cfg)?;
    let mut model = OrderModel::new(cfg.order_model(), cfg.seed)?;
    let examples = |split| -> Result<Vec<(SampleEntry, OrderExample)>> {
        load_split(&ds, split, cfg.workers)?
            .into_iter()
            .map(|(e, s)| Ok((e, OrderExample::new(&model, &s)?)))
            .collect()
    };
    let train: Vec<OrderExample> = examples(Split::Train)?.into_iter().map(|p| p.1).collect();
    let (val_ids, val): (Vec<SampleEntry>, Vec<OrderExample>) = examples(Split::Val)?.into_iter().unzip();
    let (log, opt) = train_order_model(&mut model, &train, &val, &cfg.train(Stage::Order))?;
    let checkpoint = out.join(ORDER_CHECKPOINT);
    model.save(&checkpoint, Some(&opt))?;
    log.write_csv(&out.join(TRAIN_LOG))?;

    let sim_dir = out.join("similarity");
    fs::create_dir_all(&sim_dir).map_err(|e| Error::io(&sim_dir, e))?;
    let mut orders = String::from("id,kt,predicted,ground_truth\n");
    for (e, ex) in val_ids.iter().zip(&val) {
        let s = model.similarity(&ex.inputs)?;
        let text: String = s
            .iter()
            .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",") + "\n")
            .collect();
        write(&sim_dir.join(format!("{}.csv", e.id)), &text)?;
        let (_, o) = crate::alignment::predict_order(&s)?;
        let kt = if o.len() >= 2 { kendall_tau(&o, &ex.gt)? } else { 1.0 };
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        orders.push_str(&format!("{},{kt},{},{}\n", e.id, join(&o.sigma), join(&ex.gt.sigma)));
    }
    write(&out.join("val_orders.csv"), &orders)?;
    if !val.is_empty() {
        log::info!("validation kendall tau {:.4}", mean_kt(&model, &val)?);
    }
    Ok(OrderRun { model, log, checkpoint })
}

pub struct PoseRun {
    pub model: PoseModel,
    pub log: TrainLog,
    pub checkpoint: PathBuf,
}

/// `train-pose`: requires the order stage (an order checkpoint) unless
/// `gt_order` is set. Training always feeds ground-truth order encodings.
pub fn train_pose(cfg: &RunConfig) -> Result<PoseRun> {
    match (&cfg.order_checkpoint, cfg.gt_order) {
        (Some(p), _) => {
            OrderModel::load(p)?;
        }
        (None, true) => {}
        (None, false) => {
            return Err(Error::StageOrder(
                "pose training needs the order checkpoint written by train-order (--order-checkpoint), \
                 or --gt-order to train without one"
                    .into(),
            ))
        }
    }
    let ds = open_dataset(cfg)?;
    let out = prepare_out(cfg)?;
    let mut model = PoseModel::new(cfg.pose_model(), cfg.seed)?;
    let train = load_split(&ds, Split::Train, cfg.workers)?
        .into_iter()
        .map(|(_, s)| PoseExample::new(&model, &s))
        .collect::<Result<Vec<_>>>()?;
    let (log, opt) = train_pose_model(&mut model, &train, &cfg.train(Stage::Pose), &cfg.weights())?;
    let checkpoint = out.join(POSE_CHECKPOINT);
    model.save(&checkpoint, Some(&opt))?;
    log.write_csv(&out.join(TRAIN_LOG))?;
    Ok(PoseRun { model, log, checkpoint })
}

/// Pose model plus evaluation samples of the configured split. The order
/// model is loaded when a checkpoint is configured.
pub fn load_eval_inputs(cfg: &RunConfig) -> Result<(PoseModel, Vec<EvalSample>)> {
    let pose = PoseModel::load(cfg.require(&cfg.checkpoint, "checkpoint")?)?;
    let order = match &cfg.order_checkpoint {
        Some(p) => Some(OrderModel::load(p)?),
        None => None,
    };
    let ds = open_dataset(cfg)?;
    let samples = load_split(&ds, cfg.split, cfg.workers)?;
    let evs = pool(cfg.workers)?.install(|| {
        use rayon::prelude::*;
        samples
            .par_iter()
            .map(|(e, s)| EvalSample::new(e.id.clone(), s, &pose, order.as_ref()))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok((pose, evs))
}

/// `eval`: metrics under the configured order mode.
pub fn eval(cfg: &RunConfig) -> Result<EvalReport> {
    if cfg.mode == OrderMode::Predicted && cfg.order_checkpoint.is_none() {
        return Err(Error::Config(
            "predicted order mode needs --order-checkpoint (or use --mode gt / --mode none)".into(),
        ));
    }
    let (pose, samples) = load_eval_inputs(cfg)?;
    let out = prepare_out(cfg)?;
    let report = evaluate(&pose, &samples, cfg.mode, &cfg.metric(), cfg.workers)?;
    report.write(&out, REPORT_STEM)?;
    Ok(report)
}

/// `kt-sweep`: Gumbel-perturbed ground-truth orders versus part accuracy.
pub fn sweep(cfg: &RunConfig) -> Result<(Vec<SweepRow>, Vec<BucketRow>)> {
    let (pose, samples) = load_eval_inputs(cfg)?;
    let out = prepare_out(cfg)?;
    let rows = kt_sweep(&pose, &samples, &cfg.noise_scales, cfg.sweep_seeds, cfg.seed, &cfg.metric(), cfg.workers)?;
    let buckets = kt_buckets(&rows);
    write(&out.join(SWEEP_FILE), &sweep_csv(&rows))?;
    write(&out.join(BUCKETS_FILE), &buckets_csv(&buckets))?;
    Ok((rows, buckets))
}

/// `export-attn`: attention heat rasters for the first `attn_samples`
/// samples of the split, plus the attention hit rate over the whole split
/// (ground-truth order encodings).
pub fn export_attn(cfg: &RunConfig) -> Result<(AttentionHits, Vec<PathBuf>)> {
    let (pose, samples) = load_eval_inputs(cfg)?;
    let out = prepare_out(cfg)?;
    let mode = if cfg.mode == OrderMode::Predicted && samples.iter().any(|s| s.predicted.is_none()) {
        OrderMode::Gt
    } else {
        cfg.mode
    };
    let mut written = Vec::new();
    for s in samples.iter().take(cfg.attn_samples) {
        let (_, pred) = evaluate_sample(&pose, s, &s.permutation(mode)?, &cfg.metric())?;
        let dir = out.join("attention").join(&s.id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let n = s.example.parts.len();
        for (i, r) in attention_rasters(&pred, n, pose.config.patch, pose.config.raster)?.iter().enumerate() {
            let path = dir.join(format!("part_{i:02}.pgm"));
            r.save_pgm(&path)?;
            written.push(path);
        }
    }
    let hits = attention_hits(&pose, &samples, cfg.workers)?;
    write(
        &out.join("attention_rate.csv"),
        &format!("hits,parts,rate\n{},{},{}\n", hits.hits, hits.parts, hits.rate()),
    )?;
    Ok((hits, written))
}
