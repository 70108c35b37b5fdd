//! Contrastive part-to-diagram alignment: trains the order model on
//! procedural chairs, then recovers assembly orders on held-out manuals
//! with the Hungarian solver.
//!
//! cargo run --release --example order_alignment -- [samples] [epochs]

use manualpa::alignment::{mean_kt, train_order_model, OrderExample, OrderModel, OrderModelConfig};
use manualpa::evaluation::kendall_tau;
use manualpa::synth::dataset::{generate_samples, DatasetConfig};
use manualpa::synth::Category;
use manualpa::train::TrainConfig;

fn main() -> manualpa::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let count: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(15);

    let mut data = DatasetConfig::new(Category::Chair, count, 11);
    data.gen.points_per_part = 128;
    data.min_parts = 4;
    data.max_parts = 10;
    let samples = generate_samples(&data)?;

    let mut model = OrderModel::new(OrderModelConfig::default(), 3)?;
    let examples = samples.iter().map(|s| OrderExample::new(&model, s)).collect::<manualpa::Result<Vec<_>>>()?;
    let (train, held_out) = examples.split_at(count * 4 / 5);
    println!("held-out kendall tau before training: {:.3}", mean_kt(&model, held_out)?);

    let cfg = TrainConfig { epochs, lr: 3e-3, batch: 16, weight_decay: 1e-4, decay_every: 5, decay_factor: 0.9, seed: 5 };
    let (log, _) = train_order_model(&mut model, train, held_out, &cfg)?;
    for r in &log.rows {
        println!("epoch {:>3}  loss {:.4}  {:?}", r.epoch, r.loss, r.extra);
    }

    let ex = &held_out[0];
    let s = model.similarity(&ex.inputs)?;
    let (_, order) = model.predict(&ex.inputs)?;
    println!("\nsimilarity matrix of one held-out chair (rows parts, columns steps):");
    for row in &s {
        println!("  {}", row.iter().map(|v| format!("{v:6.2}")).collect::<Vec<_>>().join(" "));
    }
    println!("predicted order {:?}", order.sigma);
    println!("true order      {:?}", ex.gt.sigma);
    println!("kendall tau {:.3}", kendall_tau(&order, &ex.gt)?);
    Ok(())
}
