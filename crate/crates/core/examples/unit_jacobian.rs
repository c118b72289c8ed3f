//! The linearization of a residual unit as a matrix-free operator: apply it,
//! apply its transpose, check the adjoint identity and run the Taylor
//! remainder test on a smooth (softplus) network.
//!
//! ```bash
//! cargo run --release --example unit_jacobian
//! ```

use resnet_spectra::experiments::synthetic_image;
use resnet_spectra::jacobian::{adjoint_mismatch, jacobian_test};
use resnet_spectra::model::{build_spec, init_weights};
use resnet_spectra::ops::Activation;
use resnet_spectra::{Distribution, LinearOperator, Network, RngStream, Tensor, UnitId};

fn main() -> resnet_spectra::Result<()> {
    let spec = build_spec(1, [4, 8, 16], Activation::Softplus)?;
    let store = init_weights(&spec, &RngStream::new(3, 0));
    let net: Network<f64> = Network::new(&spec, &store)?;
    let (_, trace) = net.forward(&synthetic_image(3, 0))?;
    let mut rng = RngStream::new(3, 1);

    for id in spec.units() {
        let op = net.unit_operator(&trace, id)?;
        let worst = adjoint_mismatch(&op, 20, &mut rng)?;
        println!(
            "{:<10} {:?} -> {:?}  adjoint mismatch {worst:.2e}",
            id.to_string(),
            op.in_shape(),
            op.out_shape()
        );
    }

    // Stages and the whole image-to-logits map are operators too.
    let whole = net.network_operator(&trace)?;
    println!("network: {} inputs -> {} logits", whole.in_dim(), whole.out_dim());

    let id = UnitId::new(2, 0);
    let unit = trace.unit(id)?;
    let op = net.unit_operator(&trace, id)?;
    let shape = unit.input.shape().to_vec();
    let dx = rng.sample_vec(op.in_dim(), Distribution::Gaussian);
    let report = jacobian_test(
        &op,
        |x| {
            Ok(net
                .unit_forward(id, &Tensor::from_vec(&shape, x.to_vec())?)?
                .output
                .to_f64_vec())
        },
        &unit.input.to_f64_vec(),
        &dx,
        1e-1,
        4,
    )?;
    println!("{:>10} {:>14} {:>14}", "eps", "first order", "remainder");
    for r in &report.rows {
        println!("{:>10.0e} {:>14.4e} {:>14.4e}", r.eps, r.first_order, r.second_order);
    }
    println!(
        "slopes: first order {:.3} (expect 1), remainder {:.3} (expect 2)",
        report.first_order_slope, report.second_order_slope
    );
    Ok(())
}
