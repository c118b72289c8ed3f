//! Singular value spectra of linear operators.

mod dense;
mod lanczos;
mod mode;
mod spectrum;
mod stats;

pub use dense::{dense_singular_values, dense_svd, full_spectrum};
pub use lanczos::{lanczos_topk, LanczosOptions};
pub use mode::SvdMode;
pub use spectrum::{Spectrum, SpectrumMethod};
pub use stats::{
    bin_spectrum, bin_values, histogram, histogram_mode, histogram_to, plateau_fraction, plateau_value, predict_growth,
    project_coefficients, BinCounts, HistogramBin, DEFAULT_ZERO_TOL_REL, HISTOGRAM_BIN_WIDTH, PLATEAU_HI, PLATEAU_LO,
};
