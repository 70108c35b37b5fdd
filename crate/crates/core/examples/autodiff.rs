//! The reverse-mode engine on its own: builds a small contrastive loss,
//! prints its gradient and checks it against central differences.
//!
//! cargo run --release --example autodiff

use manualpa::alignment::order_loss;
use manualpa::tensor::gradcheck::DEFAULT_STEP;
use manualpa::tensor::{check_gradients, Input, Tape};

fn main() -> manualpa::Result<()> {
    let parts = vec![0.9, 0.1, 0.0, 0.2, 0.8, 0.1, 0.0, 0.3, 0.7];
    let diagrams = vec![1.0, 0.0, 0.1, 0.1, 1.0, 0.0, 0.2, 0.1, 0.9];

    let tape = Tape::new();
    let f = tape.leaf(3, 3, parts.clone());
    let g = tape.leaf(3, 3, diagrams.clone());
    let loss = order_loss(&f.l2_normalize_rows(1e-8), &g.l2_normalize_rows(1e-8), 0.07)?;
    println!("contrastive loss {:.6}", loss.item());
    let grads = tape.backward(loss)?;
    println!("d loss / d parts {:.4?}", grads.wrt(f).unwrap());

    let inputs = [Input::new(3, 3, parts), Input::new(3, 3, diagrams)];
    let report = check_gradients(&inputs, DEFAULT_STEP, |_, v| {
        order_loss(&v[0].l2_normalize_rows(1e-8), &v[1].l2_normalize_rows(1e-8), 0.07)
    })?;
    println!(
        "finite differences over {} coordinates: max relative error {:.2e}",
        report.checked, report.max_rel_error
    );
    Ok(())
}
