//! Treat CIFAR-style residual networks as nonlinear dynamical systems: trace
//! activations, expose units, stages and the whole network as matrix-free
//! Jacobian operators, and study their singular value spectra and the way
//! input perturbations propagate.

pub mod error;
pub mod experiments;
pub mod jacobian;
pub mod model;
pub mod ops;
pub mod perturb;
pub mod rng;
pub mod spectra;
pub mod tensor;

pub use error::{Error, Result};
pub use jacobian::LinearOperator;
pub use model::{Network, NetworkSpec, UnitId, WeightStore};
pub use rng::{Distribution, RngStream};
pub use spectra::{BinCounts, Spectrum};
pub use tensor::{Real, Tensor};
