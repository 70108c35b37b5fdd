//! The whole command suite as library calls on a small configuration:
//! dataset, order model, pose model, evaluation under the three order modes,
//! the Kendall tau sweep and attention rasters. The run is too short for
//! meaningful accuracy; `configs/desk.toml` is the realistic setting.
//!
//! cargo run --release --example pipeline -- [out_dir]

use std::path::PathBuf;

use manualpa::config::RunConfig;
use manualpa::evaluation::OrderMode;
use manualpa::pipeline;

fn main() -> manualpa::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "pipeline_out".into()));
    let mut cfg = RunConfig::from_toml(
        r#"
        seed = 1
        workers = 1
        count = 100
        min_parts = 4
        max_parts = 8
        points_per_part = 128
        points = 48
        patch = 16
        layers = 2
        noise_scales = [0.0, 0.3, 1.0, 5.0]
        sweep_seeds = 2
        attn_samples = 2
        "#,
    )?;

    cfg.out = Some(root.join("data"));
    let manifest = pipeline::gen(&cfg)?;
    println!("generated {} manuals", manifest.samples.len());
    cfg.dataset = cfg.out.clone();

    cfg.out = Some(root.join("order"));
    cfg.epochs = Some(10);
    let order = pipeline::train_order(&cfg)?;
    println!("order model: final loss {:.4}", order.log.last_loss().unwrap_or(f64::NAN));
    cfg.order_checkpoint = Some(order.checkpoint);

    cfg.out = Some(root.join("pose"));
    cfg.epochs = Some(40);
    let pose = pipeline::train_pose(&cfg)?;
    println!("pose model: final loss {:.4}", pose.log.last_loss().unwrap_or(f64::NAN));
    cfg.checkpoint = Some(pose.checkpoint);

    for mode in [OrderMode::Predicted, OrderMode::Gt, OrderMode::None] {
        cfg.mode = mode;
        cfg.out = Some(root.join(format!("eval_{mode}")));
        let r = pipeline::eval(&cfg)?;
        println!("{mode:>9}: SCD {:.3} PA {:.3} SR {:.3} KT {:.3}", r.scd, r.pa, r.sr, r.kt);
    }

    cfg.out = Some(root.join("sweep"));
    let (rows, buckets) = pipeline::sweep(&cfg)?;
    for r in &rows {
        println!("noise {:>4}: KT {:.3} PA {:.3}", r.noise_scale, r.kt, r.pa);
    }
    for b in &buckets {
        println!("KT bucket {:<10} PA {:.3}", b.bucket, b.pa);
    }

    cfg.mode = OrderMode::Gt;
    cfg.out = Some(root.join("attention"));
    let (hits, files) = pipeline::export_attn(&cfg)?;
    println!("{} attention rasters, hit rate {:.3}", files.len(), hits.rate());
    println!("artifacts under {}", root.display());
    Ok(())
}
