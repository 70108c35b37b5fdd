use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use manualpa::config::RunConfig;
use manualpa::evaluation::OrderMode;
use manualpa::pipeline;
use manualpa::synth::dataset::Split;
use manualpa::synth::Category;
use manualpa::Result;

#[derive(Parser)]
#[command(name = "manualpa", version, about = "Manual-guided 3D part assembly on synthetic furniture")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset of parts and step diagrams.
    Gen(Flags),
    /// Train the part-to-step order model.
    TrainOrder(Flags),
    /// Train the pose model (needs an order checkpoint or --gt-order).
    TrainPose(Flags),
    /// Evaluate a pose checkpoint under an order mode.
    Eval(Flags),
    /// Perturb ground-truth orders with Gumbel noise and record KT vs PA.
    KtSweep(Flags),
    /// Write cross-attention heat rasters.
    ExportAttn(Flags),
}

/// Every flag mirrors the config key of the same name and wins over it.
#[derive(Args)]
struct Flags {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    order_checkpoint: Option<PathBuf>,
    #[arg(long)]
    gt_order: bool,
    #[arg(long)]
    mode: Option<OrderMode>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    category: Option<Category>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    split: Option<Split>,
}

impl Flags {
    fn merge(self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(seed, mode, batch, workers, category, count, split);
        macro_rules! set_opt {
            ($($f:ident),*) => { $( if self.$f.is_some() { c.$f = self.$f; } )* };
        }
        set_opt!(out, dataset, checkpoint, order_checkpoint, epochs, lr);
        c.gt_order |= self.gt_order;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(f) => {
            let m = pipeline::gen(&f.merge()?)?;
            println!("wrote {} samples", m.samples.len());
        }
        Command::TrainOrder(f) => {
            let r = pipeline::train_order(&f.merge()?)?;
            println!("order checkpoint {}", r.checkpoint.display());
        }
        Command::TrainPose(f) => {
            let r = pipeline::train_pose(&f.merge()?)?;
            println!("pose checkpoint {}", r.checkpoint.display());
        }
        Command::Eval(f) => {
            let r = pipeline::eval(&f.merge()?)?;
            println!(
                "mode {} samples {} SCD {:.4} PA {:.4} SR {:.4} KT {:.4}",
                r.mode, r.samples, r.scd, r.pa, r.sr, r.kt
            );
        }
        Command::KtSweep(f) => {
            let (rows, buckets) = pipeline::sweep(&f.merge()?)?;
            for r in rows {
                println!("noise {:>6} KT {:.4} PA {:.4}", r.noise_scale, r.kt, r.pa);
            }
            for b in buckets {
                println!("{:<14} scales {} PA {:.4}", b.bucket, b.scales, b.pa);
            }
        }
        Command::ExportAttn(f) => {
            let (hits, files) = pipeline::export_attn(&f.merge()?)?;
            println!("{} rasters, attention hit rate {:.4}", files.len(), hits.rate());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MANUALPA_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
