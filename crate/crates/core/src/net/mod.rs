//! Encoder-decoder backbone family.
//!
//! ```text
//! input [B, H, W, 3]
//!   stem        3x3 conv-norm-relu -> f0
//!   stage 0     blocks[0] residual blocks at f0
//!   stage s     width-stride conv-norm-relu f(s-1) -> f(s), then blocks[s]
//!               residual blocks, for s = 1..5
//!   decoder s   1x1 lateral f(s) -> f(s-1), width upsample, add stage s-1
//!               output, 3x3 conv-norm-relu, for s = 5..1
//!   head        1x1 conv f0 -> num_classes
//! ```
//!
//! Height is never strided. Every convolution is a semi-local convolution
//! whose component count comes from the per-layer alpha schedule.

mod config;
mod layers;
mod network;
mod weights;

pub use config::{parse_network_config, FilterSpec, NetworkConfig, Preset};
pub use network::{Network, ParamView};
pub use weights::{
    apply_entries, decode_weights, encode_weights, load_weights, network_entries, save_weights, WeightEntry,
};
