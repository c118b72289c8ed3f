use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jacobian::DEFAULT_MATERIALIZE_CAP;
use crate::model::{build_spec, NetworkSpec, Normalization, DEFAULT_CHANNELS};
use crate::ops::Activation;
use crate::spectra::SvdMode;

/// Architecture selector: `resnet56`, `resnet110` or `tiny:<n>:<c1,c2,c3>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelChoice {
    ResNet56,
    ResNet110,
    Tiny { n: usize, channels: [usize; 3] },
}

impl ModelChoice {
    pub fn spec(&self, activation: Activation) -> Result<NetworkSpec> {
        match *self {
            ModelChoice::ResNet56 => Ok(NetworkSpec::resnet56(activation)),
            ModelChoice::ResNet110 => Ok(NetworkSpec::resnet110(activation)),
            ModelChoice::Tiny { n, channels } => build_spec(n, channels, activation),
        }
    }
}

impl FromStr for ModelChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("model '{s}' is not resnet56, resnet110 or tiny:<n>:<c1,c2,c3>"));
        match s {
            "resnet56" => return Ok(ModelChoice::ResNet56),
            "resnet110" => return Ok(ModelChoice::ResNet110),
            _ => {}
        }
        let rest = s.strip_prefix("tiny:").ok_or_else(bad)?;
        let (n, ch) = rest.split_once(':').unwrap_or((rest, ""));
        let n: usize = n.parse().map_err(|_| bad())?;
        let channels = if ch.is_empty() {
            DEFAULT_CHANNELS
        } else {
            let v: Vec<usize> = ch
                .split(',')
                .map(|c| c.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad())?;
            <[usize; 3]>::try_from(v).map_err(|_| bad())?
        };
        Ok(ModelChoice::Tiny { n, channels })
    }
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelChoice::ResNet56 => f.write_str("resnet56"),
            ModelChoice::ResNet110 => f.write_str("resnet110"),
            ModelChoice::Tiny { n, channels: [a, b, c] } => write!(f, "tiny:{n}:{a},{b},{c}"),
        }
    }
}

impl TryFrom<String> for ModelChoice {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelChoice> for String {
    fn from(m: ModelChoice) -> String {
        m.to_string()
    }
}

/// Which perturbations `propagate` produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindSelection {
    Random,
    Adversarial,
    #[default]
    Both,
}

impl FromStr for KindSelection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "adversarial" => Ok(Self::Adversarial),
            "both" => Ok(Self::Both),
            _ => Err(Error::InvalidArgument(format!(
                "kind '{s}' is not random, adversarial or both"
            ))),
        }
    }
}

pub const DEFAULT_EPS: f64 = 2.0 / 255.0;
pub const DEFAULT_ALPHAS: [f64; 5] = [0.5, 0.8, 1.0, 1.2, 1.5];
pub const DEFAULT_T_VALUES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Everything a command needs. Echoed into every result file so that a run
/// can be repeated from its output alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelChoice,
    pub activation: Activation,
    /// NTW1 weights; seeded He initialization when absent.
    pub weights: Option<PathBuf>,
    /// CIFAR-10 binary batch; seeded synthetic images when absent.
    pub data: Option<PathBuf>,
    pub seed: u64,
    pub images: Vec<usize>,
    pub eps: f64,
    pub normalization: Normalization,
    pub svd: SvdMode,
    /// Absolute zero threshold for bins; `1e-6 * sigma_1` when absent.
    pub zero_tol: Option<f64>,
    pub out: PathBuf,
    pub stage: usize,
    pub unit: usize,
    /// Units of `stage` for `project`; all units when empty.
    pub units: Vec<usize>,
    pub alphas: Vec<f64>,
    pub t_values: Vec<f64>,
    pub kind: KindSelection,
    /// Leading modes used by `project`; all stored modes when absent.
    pub k_modes: Option<usize>,
    pub noise_seed: u64,
    /// Keep only images whose adversarial perturbation flips a correct
    /// prediction.
    pub require_flip: bool,
    pub materialize_cap: usize,
    pub timestamp: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelChoice::ResNet56,
            activation: Activation::Relu,
            weights: None,
            data: None,
            seed: 0,
            images: vec![0],
            eps: DEFAULT_EPS,
            normalization: Normalization::default(),
            svd: SvdMode::Dense,
            zero_tol: None,
            out: PathBuf::from("results"),
            stage: 1,
            unit: 0,
            units: Vec::new(),
            alphas: DEFAULT_ALPHAS.to_vec(),
            t_values: DEFAULT_T_VALUES.to_vec(),
            kind: KindSelection::Both,
            k_modes: None,
            noise_seed: 0,
            require_flip: false,
            materialize_cap: DEFAULT_MATERIALIZE_CAP,
            timestamp: None,
        }
    }
}

fn check_file(p: &Path, what: &str) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::io(
            p,
            std::io::Error::new(std::io::ErrorKind::NotFound, format!("{what} file not found")),
        ))
    }
}

impl RunConfig {
    pub fn network_spec(&self) -> Result<NetworkSpec> {
        self.model.spec(self.activation)
    }

    /// Checks paths and value ranges; run before any computation.
    pub fn validate(&self) -> Result<()> {
        if let Some(w) = &self.weights {
            check_file(w, "weights")?;
        }
        if let Some(d) = &self.data {
            check_file(d, "dataset")?;
        }
        if self.out.exists() && !self.out.is_dir() {
            return Err(Error::InvalidArgument(format!(
                "output path {} is not a directory",
                self.out.display()
            )));
        }
        self.normalization.validate()?;
        let spec = self.network_spec()?;
        if self.stage == 0 || self.stage > crate::model::STAGES || self.unit >= spec.units_per_stage {
            return Err(Error::UnitOutOfRange {
                stage: self.stage,
                unit: self.unit,
            });
        }
        if let Some(&u) = self.units.iter().find(|&&u| u >= spec.units_per_stage) {
            return Err(Error::UnitOutOfRange {
                stage: self.stage,
                unit: u,
            });
        }
        if self.images.is_empty() {
            return Err(Error::InvalidArgument("no images selected".into()));
        }
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "eps must be finite and non-negative, got {}",
                self.eps
            )));
        }
        if let Some(&t) = self.t_values.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::InvalidArgument(format!("t = {t} outside [0, 1]")));
        }
        if let Some(&a) = self.alphas.iter().find(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha = {a} is not finite")));
        }
        if matches!(self.zero_tol, Some(z) if !(z >= 0.0)) {
            return Err(Error::InvalidArgument("zero tolerance must be non-negative".into()));
        }
        Ok(())
    }

    /// Reads a config from a JSON file or from the header of a result file.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        if let Some(line) = text.lines().find_map(|l| l.strip_prefix("# ")) {
            let header: crate::experiments::ResultHeader = serde_json::from_str(line)?;
            return Ok(header.config);
        }
        Ok(serde_json::from_str(text)?)
    }
}
