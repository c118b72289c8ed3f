//! Experiment orchestration: run configuration, the figure-producing
//! commands, CSV result files and the self-test.

mod commands;
mod config;
mod context;
mod result;
mod selftest;

pub use commands::{
    cmd_bins, cmd_project, cmd_propagate, cmd_scree, cmd_skipscale, cmd_weightnoise, header, run, Command,
};
pub use config::{KindSelection, ModelChoice, RunConfig, DEFAULT_ALPHAS, DEFAULT_EPS, DEFAULT_T_VALUES};
pub use context::{
    synthetic_image, Context, Sample, STREAM_IMAGES, STREAM_INIT, STREAM_LANCZOS, STREAM_RANDOM_PERTURBATION,
};
pub use result::{Cell, ResultFile, ResultHeader, TOOL_NAME};
pub use selftest::{run_selftest, Check};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "RESNET_SPECTRA_THREADS";

/// Sizes the global rayon pool from `RESNET_SPECTRA_THREADS` when set. Has no
/// effect once the pool exists.
pub fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}
