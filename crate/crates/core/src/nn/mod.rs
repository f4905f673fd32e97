//! Dense NHWC tensor math with explicit forward/backward passes.
//!
//! There is no autodiff graph: every op exposes its backward as a separate
//! function and callers compose them in reverse order.

mod init;
mod norm;
mod ops;
mod pad;
pub(crate) mod slc;
mod tensor;

pub use init::glorot_uniform;
pub use norm::{batch_stats_norm, batch_stats_norm_backward, BatchNorm, NormCache, NormGrads};
pub use ops::{add, relu, relu_backward, upsample_width, upsample_width_backward};
pub use pad::{pad, pad_backward, PadSpec, WidthPadding};
pub use slc::{
    component_of_row, conv_backward, conv_forward, slc_backward, slc_forward, ConvGrads, ConvKernel, SlcKernel,
};
pub use tensor::Tensor;
