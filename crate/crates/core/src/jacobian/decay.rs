//! Taylor-remainder check for a linearization.
//!
//! For `eps = eps0 * 10^-i` the first difference `||F(x + eps dx) - F(x)||`
//! should shrink like `eps` and the remainder
//! `||F(x + eps dx) - F(x) - eps J dx||` like `eps^2`. Kinks (ReLU) can spoil the
//! second order, so smooth activations are the intended subject.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::jacobian::operator::{check_len, LinearOperator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayRow {
    pub eps: f64,
    pub first_order: f64,
    pub second_order: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub rows: Vec<DecayRow>,
    /// Least-squares slope of `log r1` against `log eps`.
    pub first_order_slope: f64,
    /// Least-squares slope of `log r2` against `log eps`; NaN when fewer than
    /// two remainders are nonzero (exactly linear maps).
    pub second_order_slope: f64,
}

/// Slope of the least-squares line through `(log10 x, log10 y)` over the
/// points with `y > 0`.
pub fn log_log_slope(points: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .into_iter()
        .filter(|&(x, y)| x > 0.0 && y > 0.0)
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

pub fn jacobian_test<F>(
    op: &dyn LinearOperator,
    forward: F,
    x: &[f64],
    dx: &[f64],
    eps0: f64,
    n_steps: usize,
) -> Result<DecayReport>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    check_len(x, op.in_shape())?;
    check_len(dx, op.in_shape())?;
    if !(eps0 > 0.0) || n_steps == 0 {
        return Err(Error::InvalidArgument("need eps0 > 0 and at least one step".into()));
    }
    let fx = forward(x)?;
    check_len(&fx, op.out_shape())?;
    let jdx = op.apply(dx)?;
    let mut rows = Vec::with_capacity(n_steps);
    for i in 0..n_steps {
        let eps = eps0 * 10f64.powi(-(i as i32));
        let xp: Vec<f64> = x.iter().zip(dx).map(|(a, d)| a + eps * d).collect();
        let fp = forward(&xp)?;
        let (mut r1, mut r2) = (0.0, 0.0);
        for ((p, f), j) in fp.iter().zip(&fx).zip(&jdx) {
            let d = p - f;
            r1 += d * d;
            r2 += (d - eps * j).powi(2);
        }
        rows.push(DecayRow {
            eps,
            first_order: r1.sqrt(),
            second_order: r2.sqrt(),
        });
    }
    Ok(DecayReport {
        first_order_slope: log_log_slope(rows.iter().map(|r| (r.eps, r.first_order))),
        second_order_slope: log_log_slope(rows.iter().map(|r| (r.eps, r.second_order))),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let s = log_log_slope((1..5).map(|i| {
            let e = 10f64.powi(-i);
            (e, 3.0 * e * e)
        }));
        assert!((s - 2.0).abs() < 1e-12);
        assert!(log_log_slope([(1.0, 0.0), (0.1, 0.0)]).is_nan());
    }
}
