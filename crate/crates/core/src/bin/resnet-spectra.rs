use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use resnet_spectra::experiments::{self, Command, KindSelection, ModelChoice, RunConfig};
use resnet_spectra::ops::Activation;
use resnet_spectra::spectra::SvdMode;

#[derive(Parser)]
#[command(
    name = "resnet-spectra",
    version,
    about = "Singular value analysis of residual network Jacobians"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Singular values of one unit for each selected image
    Scree(RunArgs),
    /// Band counts of every unit's full spectrum
    Bins(RunArgs),
    /// Propagation of random and adversarial perturbations
    Propagate(RunArgs),
    /// Projections onto singular vectors and predicted vs actual growth
    Project(RunArgs),
    /// Spectra with a scaled skip connection
    Skipscale(RunArgs),
    /// Spectra with weights blended towards noise
    Weightnoise(RunArgs),
    /// Run the invariant suite on a seeded small network
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn list<T: std::str::FromStr>(s: &str) -> Result<List<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()
        .map(List)
}

/// Comma-separated values; a newtype so clap treats the list as one value.
#[derive(Clone)]
struct List<T>(Vec<T>);

#[derive(Args)]
struct RunArgs {
    /// Start from this config: a JSON file or a previous result file
    #[arg(long)]
    config: Option<PathBuf>,
    /// resnet56 | resnet110 | tiny:<n>:<c1,c2,c3>
    #[arg(long)]
    model: Option<ModelChoice>,
    /// relu | softplus | identity
    #[arg(long)]
    activation: Option<Activation>,
    /// NTW1 weight file (seeded initialization when omitted)
    #[arg(long)]
    weights: Option<PathBuf>,
    /// CIFAR-10 binary batch (seeded synthetic images when omitted)
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    stage: Option<usize>,
    #[arg(long)]
    unit: Option<usize>,
    /// Units of the stage for `project`, e.g. 0,1,2
    #[arg(long, value_parser = list::<usize>)]
    units: Option<List<usize>>,
    /// Image indices, e.g. 0,1,2
    #[arg(long, value_parser = list::<usize>)]
    images: Option<List<usize>>,
    /// FGSM step in pixel units
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long = "alpha", value_parser = list::<f64>)]
    alphas: Option<List<f64>>,
    #[arg(long = "t", value_parser = list::<f64>)]
    t_values: Option<List<f64>>,
    /// dense | lanczos:K:TOL
    #[arg(long)]
    svd: Option<SvdMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    zero_tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// random | adversarial | both
    #[arg(long)]
    kind: Option<KindSelection>,
    #[arg(long)]
    k_modes: Option<usize>,
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Keep only images whose prediction the adversarial step flips
    #[arg(long)]
    require_flip: bool,
    /// Largest operator input dimension that may be materialized
    #[arg(long)]
    cap: Option<usize>,
    /// Timestamp recorded in the result header (defaults to now)
    #[arg(long)]
    timestamp: Option<String>,
}

impl RunArgs {
    fn into_config(self) -> resnet_spectra::Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_path(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = self.$field { c.$target = v; })*
            };
        }
        set!(model => model, activation => activation, stage => stage, unit => unit, eps => eps, svd => svd,
             seed => seed, out => out, kind => kind, noise_seed => noise_seed, cap => materialize_cap);
        macro_rules! set_list {
            ($($field:ident),*) => {
                $(if let Some(List(v)) = self.$field { c.$field = v; })*
            };
        }
        set_list!(units, images, alphas, t_values);
        if self.weights.is_some() {
            c.weights = self.weights;
        }
        if self.data.is_some() {
            c.data = self.data;
        }
        if self.zero_tol.is_some() {
            c.zero_tol = self.zero_tol;
        }
        if self.k_modes.is_some() {
            c.k_modes = self.k_modes;
        }
        if self.require_flip {
            c.require_flip = true;
        }
        if self.timestamp.is_some() {
            c.timestamp = self.timestamp;
        }
        if c.timestamp.is_none() {
            c.timestamp = Some(chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string());
        }
        Ok(c)
    }
}

fn run(cli: Cli) -> resnet_spectra::Result<bool> {
    let (command, args) = match cli.command {
        Cmd::Selftest { seed } => {
            let checks = experiments::run_selftest(seed)?;
            for c in &checks {
                println!("{} {:<20} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
        Cmd::Scree(a) => (Command::Scree, a),
        Cmd::Bins(a) => (Command::Bins, a),
        Cmd::Propagate(a) => (Command::Propagate, a),
        Cmd::Project(a) => (Command::Project, a),
        Cmd::Skipscale(a) => (Command::Skipscale, a),
        Cmd::Weightnoise(a) => (Command::Weightnoise, a),
    };
    for path in experiments::run(command, args.into_config()?)? {
        println!("{}", path.display());
    }
    Ok(true)
}

fn main() -> ExitCode {
    experiments::configure_threads();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(2)
        }
    }
}
