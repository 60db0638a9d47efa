//! Early, joint and late fusion of paired two-modality image chips with
//! from-scratch CNNs, plus the evaluation and paradigm-selection pipeline.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
