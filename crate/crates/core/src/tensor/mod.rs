//! Float64 matrices with reverse-mode differentiation, parameters,
//! checkpoints and the AdamW optimizer.

pub mod gradcheck;
pub mod kernels;
pub mod nn;
pub mod optim;
pub mod params;
pub mod tape;

mod backward;

pub use gradcheck::{check_gradients, GradCheckReport, Input};
pub use nn::{LayerNorm, Linear, Mlp};
pub use optim::{AdamW, AdamWConfig, StepDecay};
pub use params::{
    load_checkpoint, read_checkpoint, save_checkpoint, split_meta, with_meta, write_checkpoint, Checkpoint,
    GradBuffer, ParamId, ParamStore, Tensor,
};
pub use tape::{concat_cols, concat_rows, Gradients, Tape, Var};

#[cfg(test)]
mod tests;
