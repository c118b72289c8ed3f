//! Forward kernels and their linearizations for the operators of a
//! BasicBlock residual unit, plus the classifier head.

mod activation;
mod batchnorm;
mod conv;
mod head;

pub use activation::{act_forward, Activation};
pub use batchnorm::{bn_forward, bn_jvp, BnParams, DEFAULT_BN_EPSILON};
pub use conv::{conv_forward, conv_vjp, ConvParams};
pub use head::{head_forward, head_jvp, head_vjp, softmax_xent, HeadParams};
