pub mod alignment;
pub mod assembler;
pub mod assignment;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod objective;
pub mod pipeline;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
