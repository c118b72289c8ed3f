use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::experiments::context::{Context, Sample, STREAM_RANDOM_PERTURBATION};
use crate::experiments::result::{Cell, ResultFile, ResultHeader, TOOL_NAME};
use crate::experiments::{KindSelection, RunConfig};
use crate::model::{Overrides, UnitId, UnitOverride};
use crate::perturb::{fgsm, growth_between, propagate_from, random_matched, PerturbationKind};
use crate::rng::RngStream;
use crate::spectra::{bin_spectrum, full_spectrum, histogram_to, project_coefficients, HISTOGRAM_BIN_WIDTH};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Scree,
    Bins,
    Propagate,
    Project,
    Skipscale,
    Weightnoise,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Scree,
        Command::Bins,
        Command::Propagate,
        Command::Project,
        Command::Skipscale,
        Command::Weightnoise,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Scree => "scree",
            Command::Bins => "bins",
            Command::Propagate => "propagate",
            Command::Project => "project",
            Command::Skipscale => "skipscale",
            Command::Weightnoise => "weightnoise",
        }
    }

    pub fn execute(&self, ctx: &Context) -> Result<Vec<ResultFile>> {
        match self {
            Command::Scree => cmd_scree(ctx).map(|f| vec![f]),
            Command::Bins => cmd_bins(ctx).map(|f| vec![f]),
            Command::Propagate => cmd_propagate(ctx).map(|f| vec![f]),
            Command::Project => cmd_project(ctx),
            Command::Skipscale => cmd_skipscale(ctx).map(|f| vec![f]),
            Command::Weightnoise => cmd_weightnoise(ctx),
        }
    }
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown command '{s}'")))
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn header(command: Command, config: &RunConfig) -> ResultHeader {
    ResultHeader {
        tool: TOOL_NAME.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.name().into(),
        timestamp: config.timestamp.clone(),
        config: config.clone(),
    }
}

/// Loads, executes and writes every result file into `config.out`.
pub fn run(command: Command, config: RunConfig) -> Result<Vec<PathBuf>> {
    let ctx = Context::load(config)?;
    let files = command.execute(&ctx)?;
    let h = header(command, &ctx.config);
    files.iter().map(|f| f.write_to(&ctx.config.out, &h)).collect()
}

fn unit_id(ctx: &Context) -> UnitId {
    UnitId::new(ctx.config.stage, ctx.config.unit)
}

fn first_sample(ctx: &Context) -> &Sample {
    &ctx.samples[0]
}

fn sigma_rows(file: &mut ResultFile, key: Cell, sigma: &[f64]) {
    for (i, &s) in sigma.iter().enumerate() {
        file.push(vec![key.clone(), i.into(), s.into()]);
    }
}

/// Singular values of one unit for every selected image.
pub fn cmd_scree(ctx: &Context) -> Result<ResultFile> {
    let id = unit_id(ctx);
    let net = ctx.network(Overrides::new())?;
    let spectra: Vec<Vec<f64>> = ctx
        .samples
        .par_iter()
        .map(|s| {
            let (_, trace) = net.forward(&s.image)?;
            let op = net.unit_operator(&trace, id)?;
            Ok(ctx.spectrum(&op, false)?.singular_values)
        })
        .collect::<Result<_>>()?;
    let mut f = ResultFile::new(
        format!("scree_stage{}_unit{}.csv", id.stage, id.unit),
        &["image_id", "rank_index", "sigma"],
    );
    for (s, sigma) in ctx.samples.iter().zip(&spectra) {
        sigma_rows(&mut f, s.id.into(), sigma);
    }
    Ok(f)
}

/// Band counts of the full spectrum of every unit, at the first image.
pub fn cmd_bins(ctx: &Context) -> Result<ResultFile> {
    let net = ctx.network(Overrides::new())?;
    let (_, trace) = net.forward(&first_sample(ctx).image)?;
    let ids: Vec<UnitId> = ctx.spec.units().collect();
    let cap = ctx.config.materialize_cap;
    let counts = ids
        .par_iter()
        .map(|&id| {
            let op = net.unit_operator(&trace, id)?;
            let spec = full_spectrum(&op, cap, false).map_err(|e| Error::in_unit(id, e))?;
            Ok((bin_spectrum(&spec, ctx.config.zero_tol), spec.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut f = ResultFile::new(
        "bins.csv",
        &["stage", "unit", "n_above", "n_plateau", "n_mid", "n_zero", "map_dim"],
    );
    for (id, (c, dim)) in ids.iter().zip(counts) {
        f.push(vec![
            id.stage.into(),
            id.unit.into(),
            c.n_above.into(),
            c.n_plateau.into(),
            c.n_mid.into(),
            c.n_zero.into(),
            dim.into(),
        ]);
    }
    Ok(f)
}

/// Adversarial and norm-matched random perturbations of one sample, or
/// `None` when `require_flip` rejects it.
fn perturbations(
    net: &crate::model::Network<f64>,
    ctx: &Context,
    s: &Sample,
) -> Result<Option<(Tensor<f64>, Tensor<f64>)>> {
    let adv = fgsm(net, &s.image, s.label, ctx.config.eps)?;
    if ctx.config.require_flip {
        let clean_ok = net.predict(&s.image)? == s.label;
        let flipped = net.predict(&s.image.add(&adv)?)? != s.label;
        if !(clean_ok && flipped) {
            return Ok(None);
        }
    }
    let mut rng = RngStream::new(ctx.config.seed, STREAM_RANDOM_PERTURBATION + s.id as u64);
    let rand = random_matched(s.image.shape(), crate::tensor::l2_norm(&adv), &mut rng)?;
    Ok(Some((adv, rand)))
}

/// Per-unit output differences for random and adversarial perturbations of
/// equal input norm.
pub fn cmd_propagate(ctx: &Context) -> Result<ResultFile> {
    let net = ctx.network(Overrides::new())?;
    let kinds: &[PerturbationKind] = match ctx.config.kind {
        KindSelection::Random => &[PerturbationKind::Random],
        KindSelection::Adversarial => &[PerturbationKind::Adversarial],
        KindSelection::Both => &[PerturbationKind::Random, PerturbationKind::Adversarial],
    };
    let traces = ctx
        .samples
        .par_iter()
        .map(|s| {
            let Some((adv, rand)) = perturbations(&net, ctx, s)? else {
                return Ok(Vec::new());
            };
            let (_, clean) = net.forward(&s.image)?;
            kinds
                .iter()
                .map(|&k| {
                    let d = if k == PerturbationKind::Random { &rand } else { &adv };
                    Ok(propagate_from(&net, &clean, d)?.labeled(k, s.id, ctx.config.eps))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut f = ResultFile::new(
        "propagate.csv",
        &[
            "image_id",
            "kind",
            "stage",
            "unit",
            "raw_norm",
            "normalized_norm",
            "input_eps",
            "input_norm",
        ],
    );
    for t in traces.iter().flatten() {
        for u in &t.units {
            f.push(vec![
                t.image_id.unwrap_or_default().into(),
                t.kind.map(|k| k.to_string()).unwrap_or_default().into(),
                u.id.stage.into(),
                u.id.unit.into(),
                u.raw_norm.into(),
                u.normalized_norm.into(),
                t.eps.unwrap_or_default().into(),
                t.input_norm.into(),
            ]);
        }
    }
    Ok(f)
}

/// Projections of the propagated perturbation onto each listed unit's right
/// singular vectors, plus predicted and actual growth through the unit.
pub fn cmd_project(ctx: &Context) -> Result<Vec<ResultFile>> {
    let net = ctx.network(Overrides::new())?;
    let s = first_sample(ctx);
    let stage = ctx.config.stage;
    let units: Vec<usize> = if ctx.config.units.is_empty() {
        (0..ctx.spec.units_per_stage).collect()
    } else {
        ctx.config.units.clone()
    };
    let delta = match ctx.config.kind {
        KindSelection::Random => {
            let adv = fgsm(&net, &s.image, s.label, ctx.config.eps)?;
            let mut rng = RngStream::new(ctx.config.seed, STREAM_RANDOM_PERTURBATION + s.id as u64);
            random_matched(s.image.shape(), crate::tensor::l2_norm(&adv), &mut rng)?
        }
        _ => fgsm(&net, &s.image, s.label, ctx.config.eps)?,
    };
    let (_, clean) = net.forward(&s.image)?;
    let (_, perturbed) = net.forward(&s.image.add(&delta)?)?;
    let k_modes = ctx.config.k_modes;

    let per_unit = units
        .iter()
        .map(|&u| {
            let id = UnitId::new(stage, u);
            let c = clean.unit(id)?;
            let p = perturbed.unit(id)?;
            let op = net.unit_operator_at(c)?;
            let spec = ctx.spectrum(&op, true).map_err(|e| Error::in_unit(id, e))?;
            let d_in: Vec<f64> = p.input.data().iter().zip(c.input.data()).map(|(a, b)| a - b).collect();
            let mut alpha = project_coefficients(&d_in, &spec)?;
            let k = k_modes.unwrap_or(alpha.len()).min(alpha.len());
            alpha.truncate(k);
            let growth = growth_between(c, p, &spec, k_modes)?;
            Ok((u, alpha, spec.singular_values[..k].to_vec(), growth))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut proj = ResultFile::new(
        format!("project_stage{stage}.csv"),
        &["unit", "mode_index", "alpha", "sigma"],
    );
    let mut growth = ResultFile::new(
        format!("project_stage{stage}_growth.csv"),
        &[
            "unit",
            "predicted_change",
            "actual_change",
            "residual_mass",
            "input_norm",
        ],
    );
    for (u, alpha, sigma, g) in &per_unit {
        for (i, (a, s)) in alpha.iter().zip(sigma).enumerate() {
            proj.push(vec![(*u).into(), i.into(), (*a).into(), (*s).into()]);
        }
        growth.push(vec![
            (*u).into(),
            g.predicted.into(),
            g.actual.into(),
            g.residual_mass.into(),
            g.input_norm.into(),
        ]);
    }
    Ok(vec![proj, growth])
}

/// Spectrum of one regular unit with its skip connection scaled by each alpha.
pub fn cmd_skipscale(ctx: &Context) -> Result<ResultFile> {
    let id = unit_id(ctx);
    if ctx.spec.layout(id)?.is_downsampling() {
        return Err(Error::DownsamplingUnit { unit: id.to_string() });
    }
    let image = &first_sample(ctx).image;
    let spectra = ctx
        .config
        .alphas
        .par_iter()
        .map(|&a| {
            let net = ctx.network(Overrides::from([(id, UnitOverride::skip_scale(a))]))?;
            let (_, trace) = net.forward(image)?;
            let op = net.unit_operator(&trace, id)?;
            Ok(ctx.spectrum(&op, false)?.singular_values)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut f = ResultFile::new(
        format!("skipscale_stage{}_unit{}.csv", id.stage, id.unit),
        &["alpha", "rank_index", "sigma"],
    );
    for (&a, sigma) in ctx.config.alphas.iter().zip(&spectra) {
        sigma_rows(&mut f, a.into(), sigma);
    }
    Ok(f)
}

/// Spectrum of one unit as its weights are blended with norm-matched noise,
/// plus fixed-width histograms of each spectrum.
pub fn cmd_weightnoise(ctx: &Context) -> Result<Vec<ResultFile>> {
    let id = unit_id(ctx);
    let image = &first_sample(ctx).image;
    let seed = ctx.config.noise_seed;
    let spectra = ctx
        .config
        .t_values
        .par_iter()
        .map(|&t| {
            let net = ctx.network(Overrides::from([(id, UnitOverride::blend(t, seed))]))?;
            let (_, trace) = net.forward(image)?;
            let op = net.unit_operator(&trace, id)?;
            Ok(ctx.spectrum(&op, false)?.singular_values)
        })
        .collect::<Result<Vec<_>>>()?;
    let name = format!("weightnoise_stage{}_unit{}", id.stage, id.unit);
    let mut f = ResultFile::new(format!("{name}.csv"), &["t", "rank_index", "sigma"]);
    let mut h = ResultFile::new(format!("{name}_hist.csv"), &["t", "bin_lo", "bin_hi", "count"]);
    let max = spectra.iter().flatten().copied().fold(0.0, f64::max);
    for (&t, sigma) in ctx.config.t_values.iter().zip(&spectra) {
        sigma_rows(&mut f, t.into(), sigma);
        for b in histogram_to(sigma, HISTOGRAM_BIN_WIDTH, max) {
            h.push(vec![t.into(), b.lo.into(), b.hi.into(), b.count.into()]);
        }
    }
    Ok(vec![f, h])
}
