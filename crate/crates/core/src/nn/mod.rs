//! Dense-tensor numerical core: the layer primitives of the segmentation
//! network with exact analytic backward passes, Adam, and a finite-difference
//! gradient checker.
//!
//! Every primitive is a pure function of its inputs (plus explicit state such
//! as batch-norm running statistics) and runs single-threaded with a fixed
//! accumulation order, so results are bitwise reproducible.

mod activation;
mod adam;
mod conv;
pub mod gradcheck;
mod norm;
mod resample;
mod tensor;

pub use activation::{
    add, relu, relu_backward, relu_inplace, softmax_over_classes, tanh_act, tanh_backward,
};
pub use adam::{adam_step, AdamState, Parameter, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use conv::{conv2d, conv2d_backward, ConvGrads};
pub use gradcheck::{grad_check, GradCheckReport};
pub use norm::{
    batchnorm2d, batchnorm2d_backward, batchnorm2d_eval, channel_stats, BatchNormCache, Mode,
    BN_EPS, BN_MOMENTUM,
};
pub use resample::{
    maxpool2, maxpool2_backward, upsample_bilinear2x, upsample_bilinear2x_backward, PoolOutput,
};
pub use tensor::Tensor;
