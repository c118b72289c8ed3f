//! Matrix-free linearizations of units, stages and the whole network.

mod decay;
mod dense;
mod network;
mod operator;

pub use decay::{jacobian_test, log_log_slope, DecayReport, DecayRow};
pub use dense::{materialize, materialize_transpose, DenseMatrix, DEFAULT_MATERIALIZE_CAP};
pub use network::{input_gradient, HeadJacobian, StemJacobian, UnitJacobian};
pub use operator::{stage_operator, ChainOperator, DiagonalOperator, IdentityOperator, LinearOperator, MatrixOperator};

use crate::rng::{Distribution, RngStream};

/// Worst relative violation of `<J v, u> = <v, J^T u>` over `pairs` random
/// Gaussian pairs, measured as `|<Jv,u> - <v,J^T u>| / (||Jv|| ||u||)`.
pub fn adjoint_mismatch(op: &dyn LinearOperator, pairs: usize, rng: &mut RngStream) -> crate::Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let v = rng.sample_vec(op.in_dim(), Distribution::Gaussian);
        let u = rng.sample_vec(op.out_dim(), Distribution::Gaussian);
        let jv = op.apply(&v)?;
        let jtu = op.apply_transpose(&u)?;
        let lhs: f64 = jv.iter().zip(&u).map(|(a, b)| a * b).sum();
        let rhs: f64 = v.iter().zip(&jtu).map(|(a, b)| a * b).sum();
        let scale = crate::tensor::norm(&jv) * crate::tensor::norm(&u);
        let err = (lhs - rhs).abs();
        let rel = if scale > 0.0 {
            err / scale
        } else if err == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(rel);
    }
    Ok(worst)
}
