//! Range-image LiDAR semantic segmentation.
//!
//! The crate covers the whole path from a rotating scanner's point list to a
//! scored segmentation:
//!
//! - [`cloud_io`]: KITTI `.bin` / SemanticKITTI `.label` parsing and the
//!   `RIMG` range-image container.
//! - [`synth`]: a deterministic rotating-LiDAR simulator with ground-truth
//!   ring and firing indices and an ego-motion switch.
//! - [`projection`]: scan unfolding from acquisition order, the
//!   ego-corrected spherical projection, occlusion accounting and label
//!   back-projection.
//! - [`nn`]: rank-4 tensors, zero/cyclic padding, semi-local convolutions and
//!   the other layers of the backbone, each with a hand-written backward pass.
//! - [`objectives`]: softmax, cross-entropy, soft Dice, confusion matrices
//!   and mIoU.
//! - [`net`]: the configurable encoder-decoder backbone (configs A-D, R*),
//!   parameter counting and weight checkpoints.
//! - [`train`]: the seeded training/evaluation loop and forward benchmarks.

pub mod cloud_io;
mod error;
pub mod net;
pub mod nn;
pub mod objectives;
pub mod preview;
pub mod projection;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
