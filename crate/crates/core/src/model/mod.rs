//! CIFAR-style ResNet construction, weights, data and traced inference.

mod cifar;
mod network;
mod ntw1;
mod spec;
mod weights;

pub use cifar::{encode_cifar10, load_cifar10, parse_cifar10, LabeledImage, RECORD_BYTES, TEST_BATCH_RECORDS};
pub use network::{
    argmax, ActivationTrace, Network, Normalization, Overrides, UnitOverride, UnitParams, UnitTrace, WeightBlend,
};
pub use ntw1::{decode as decode_ntw1, encode as encode_ntw1, load_weights, save_weights};
pub use spec::{build_spec, NetworkSpec, UnitId, UnitLayout, CIFAR_CLASSES, DEFAULT_CHANNELS, STAGES};
pub use weights::{blend_weights, init_weights, WeightStore};
