//! Encoder-decoder Transformer with fused word, position and tag inputs.

mod attention;
mod checkpoint;
mod config;
mod forward;
mod params;

pub use attention::{AttentionMask, AttentionOutput, MASK_BIAS};
pub use checkpoint::{
    load_checkpoint, read_blocks, read_checkpoint, save_checkpoint, write_blocks, write_checkpoint, CHECKPOINT_MAGIC,
};
pub use config::{ModelConfig, Side};
pub use forward::{log_softmax, Batch, Translator, LAYER_NORM_EPS};
pub use params::{Bound, ModelParams};
