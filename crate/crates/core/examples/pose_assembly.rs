//! Pose regression with positional soft guidance: trains the decoder on
//! ground-truth orders, then scores held-out chairs with the true order and
//! with no order at all.
//!
//! cargo run --release --example pose_assembly -- [samples] [epochs]

use manualpa::assembler::{train_pose_model, PoseExample, PoseModel, PoseModelConfig};
use manualpa::evaluation::{evaluate, EvalSample, MetricConfig, OrderMode};
use manualpa::objective::LossWeights;
use manualpa::synth::dataset::{generate_samples, DatasetConfig};
use manualpa::synth::Category;
use manualpa::train::TrainConfig;

fn main() -> manualpa::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let count: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(120);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(20);

    let mut data = DatasetConfig::new(Category::Chair, count, 21);
    data.gen.points_per_part = 128;
    data.min_parts = 4;
    data.max_parts = 10;
    let samples = generate_samples(&data)?;
    let (train_s, test_s) = samples.split_at(count * 4 / 5);

    // Small enough to train on one core in a few minutes.
    let config = PoseModelConfig { patch: 16, layers: 2, points: 64, ..PoseModelConfig::default() };
    let mut model = PoseModel::new(config, 9)?;
    let train = train_s.iter().map(|s| PoseExample::new(&model, s)).collect::<manualpa::Result<Vec<_>>>()?;

    let cfg = TrainConfig { epochs, lr: 3e-3, batch: 16, weight_decay: 1e-4, decay_every: 50, decay_factor: 0.9, seed: 2 };
    let (log, _) = train_pose_model(&mut model, &train, &cfg, &LossWeights::default())?;
    for r in log.rows.iter().step_by((epochs / 10).max(1)) {
        println!("epoch {:>4}  loss {:.4}  {:?}", r.epoch, r.loss, r.extra);
    }

    let test = test_s
        .iter()
        .enumerate()
        .map(|(i, s)| EvalSample::new(format!("test{i}"), s, &model, None))
        .collect::<manualpa::Result<Vec<_>>>()?;
    for mode in [OrderMode::Gt, OrderMode::None] {
        let r = evaluate(&model, &test, mode, &MetricConfig::default(), 1)?;
        println!("{mode:>5} order: SCD {:.3}  PA {:.3}  SR {:.3}", r.scd, r.pa, r.sr);
    }
    Ok(())
}
