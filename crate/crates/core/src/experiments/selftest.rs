//! Invariant checks on a small seeded network: adjoint consistency, Taylor
//! decay of the linearization, solver agreement and the growth identity.

use crate::error::Result;
use crate::jacobian::{
    adjoint_mismatch, jacobian_test, materialize, materialize_transpose, DenseMatrix, LinearOperator, MatrixOperator,
};
use crate::model::{build_spec, init_weights, Network, UnitId, WeightStore};
use crate::ops::Activation;
use crate::rng::{Distribution, RngStream};
use crate::spectra::{
    dense_singular_values, full_spectrum, lanczos_topk, predict_growth, project_coefficients, LanczosOptions,
};
use crate::tensor::norm;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

fn tiny(act: Activation, seed: u64) -> Result<(Network<f64>, WeightStore)> {
    let spec = build_spec(1, [4, 8, 16], act)?;
    let store = init_weights(&spec, &RngStream::new(seed, 0));
    Ok((Network::new(&spec, &store)?, store))
}

fn image(seed: u64) -> crate::Tensor<f64> {
    crate::experiments::synthetic_image(seed, 0)
}

pub fn run_selftest(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut rng = RngStream::new(seed, 77);

    let (net, _) = tiny(Activation::Relu, seed)?;
    let (_, trace) = net.forward(&image(seed))?;
    let mut worst: f64 = 0.0;
    for id in net.spec().units() {
        worst = worst.max(adjoint_mismatch(&net.unit_operator(&trace, id)?, 20, &mut rng)?);
    }
    for stage in 1..=3 {
        worst = worst.max(adjoint_mismatch(&net.stage_operator(&trace, stage)?, 20, &mut rng)?);
    }
    worst = worst.max(adjoint_mismatch(&net.network_operator(&trace)?, 20, &mut rng)?);
    checks.push(Check::new(
        "adjoint",
        worst <= 1e-4,
        format!("worst relative mismatch {worst:.3e}"),
    ));

    let (soft, _) = tiny(Activation::Softplus, seed)?;
    let x = image(seed + 1);
    let (_, strace) = soft.forward(&x)?;
    let op = soft.network_operator(&strace)?;
    let dx = rng.sample_vec(op.in_dim(), Distribution::Gaussian);
    let report = jacobian_test(
        &op,
        |p| {
            Ok(soft
                .logits(&crate::Tensor::from_vec(&[3, 32, 32], p.to_vec())?)?
                .to_f64_vec())
        },
        &x.to_f64_vec(),
        &dx,
        1e-1,
        4,
    )?;
    let ok = (0.9..=1.1).contains(&report.first_order_slope) && (1.8..=2.2).contains(&report.second_order_slope);
    checks.push(Check::new(
        "decay",
        ok,
        format!(
            "slopes {:.3} / {:.3}",
            report.first_order_slope, report.second_order_slope
        ),
    ));

    let m = DenseMatrix::from_row_major(64, 64, rng.sample_vec(64 * 64, Distribution::Gaussian))?;
    let dense = dense_singular_values(&m)?;
    let lz = lanczos_topk(&MatrixOperator::new(m), LanczosOptions::new(10, 1e-10), &mut rng)?;
    let rel = lz
        .singular_values
        .iter()
        .zip(&dense.singular_values)
        .map(|(a, b)| (a - b).abs() / b)
        .fold(0.0, f64::max);
    checks.push(Check::new(
        "lanczos-vs-dense",
        rel <= 1e-6,
        format!("max relative deviation {rel:.3e}"),
    ));

    let id = UnitId::new(3, 0);
    let unit = net.unit_operator(&trace, id)?;
    let full = full_spectrum(&unit, 4096, true)?;
    let probed = dense_singular_values(&materialize_transpose(&unit, 4096)?.transpose())?;
    let s1 = full.largest();
    let dev = full
        .singular_values
        .iter()
        .zip(&probed.singular_values)
        .map(|(a, b)| (a - b).abs() / b.max(1e-6 * s1))
        .fold(0.0, f64::max);
    checks.push(Check::new(
        "full-vs-probed",
        dev <= 1e-5,
        format!("max deviation {dev:.3e}"),
    ));

    let mut worst_eq = 0.0f64;
    for _ in 0..5 {
        let d = rng.sample_vec(unit.in_dim(), Distribution::Gaussian);
        let alpha = project_coefficients(&d, &full)?;
        let pred = predict_growth(&alpha, &full.singular_values)?;
        let actual = norm(&unit.apply(&d)?);
        worst_eq = worst_eq.max((pred - actual).abs() / actual);
    }
    checks.push(Check::new(
        "growth-identity",
        worst_eq <= 1e-5,
        format!("max relative gap {worst_eq:.3e}"),
    ));

    let jm = materialize(&unit, 4096)?;
    checks.push(Check::new(
        "materialize-finite",
        jm.data().iter().all(|v| v.is_finite()),
        format!("{}x{}", jm.rows(), jm.cols()),
    ));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        for c in run_selftest(5).unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
