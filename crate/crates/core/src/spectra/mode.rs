use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jacobian::LinearOperator;
use crate::rng::RngStream;
use crate::spectra::{full_spectrum, lanczos_topk, LanczosOptions, Spectrum};

/// How to obtain a spectrum: full dense decomposition or top-k Lanczos.
/// Parses from `dense` or `lanczos:K:TOL`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SvdMode {
    Dense,
    Lanczos { k: usize, tol: f64 },
}

impl Default for SvdMode {
    fn default() -> Self {
        SvdMode::Dense
    }
}

impl SvdMode {
    /// Spectrum of `op`; dense mode respects `cap`, Lanczos mode clamps `k`
    /// to the operator's smaller dimension.
    pub fn compute(
        &self,
        op: &dyn LinearOperator,
        cap: usize,
        with_vectors: bool,
        rng: &mut RngStream,
    ) -> Result<Spectrum> {
        match *self {
            SvdMode::Dense => full_spectrum(op, cap, with_vectors),
            SvdMode::Lanczos { k, tol } => {
                let k = k.min(op.in_dim().min(op.out_dim()));
                lanczos_topk(op, LanczosOptions::new(k, tol), rng)
            }
        }
    }
}

impl FromStr for SvdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("svd mode '{s}' is not 'dense' or 'lanczos:K:TOL'"));
        if s == "dense" {
            return Ok(SvdMode::Dense);
        }
        let mut parts = s.split(':');
        if parts.next() != Some("lanczos") {
            return Err(bad());
        }
        let k: usize = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let tol: f64 = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        if parts.next().is_some() || k == 0 || !(tol > 0.0) {
            return Err(bad());
        }
        Ok(SvdMode::Lanczos { k, tol })
    }
}

impl fmt::Display for SvdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SvdMode::Dense => f.write_str("dense"),
            SvdMode::Lanczos { k, tol } => write!(f, "lanczos:{k}:{tol:e}"),
        }
    }
}

impl TryFrom<String> for SvdMode {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SvdMode> for String {
    fn from(m: SvdMode) -> String {
        m.to_string()
    }
}
