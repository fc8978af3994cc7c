//! Sinusoidal positional encodings with a step multiplier, a POS-tag input
//! channel, a small encoder-decoder Transformer trained with reverse-mode
//! autodiff, and translation metrics with bucketed analyses.

pub mod cli;
pub mod corpus;
pub mod decode;
pub mod encoding;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod training;

pub use error::{Error, Result};
