//! A small GIN training stack with adapter-based parameter-efficient
//! fine-tuning, a zoo of competing tuning modes, and analysis tooling
//! (generalization bounds, parameter and FLOP accounting, sweeps).

pub mod bounds;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod flops;
pub mod gaps;
pub mod gin;
pub mod gradcheck;
pub mod graph;
pub mod metrics;
pub mod peft;
pub mod registry;
pub mod rng;
pub mod sweep;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::SeedStream;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
