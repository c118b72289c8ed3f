//! Build a small CIFAR-style ResNet, run one traced forward pass and look at
//! what each residual unit recorded.
//!
//! ```bash
//! cargo run --release --example forward_trace
//! ```

use resnet_spectra::experiments::synthetic_image;
use resnet_spectra::model::{build_spec, init_weights};
use resnet_spectra::ops::Activation;
use resnet_spectra::{Network, RngStream};

fn density(mask: &[f64]) -> f64 {
    mask.iter().filter(|m| **m != 0.0).count() as f64 / mask.len() as f64
}

fn main() -> resnet_spectra::Result<()> {
    // Two units per stage with 4, 8 and 16 channels: a ResNet-14 shaped toy.
    let spec = build_spec(2, [4, 8, 16], Activation::Relu)?;
    let store = init_weights(&spec, &RngStream::new(7, 0));
    let net: Network<f64> = Network::new(&spec, &store)?;
    println!("depth {} with {} residual units", spec.depth(), spec.total_units());

    let image = synthetic_image(7, 0);
    let (logits, trace) = net.forward(&image)?;
    println!(
        "{:<12} {:>14} {:>12} {:>12}",
        "unit", "output shape", "inner act", "outer act"
    );
    for u in &trace.units {
        println!(
            "{:<12} {:>14} {:>12.3} {:>12.3}",
            u.id.to_string(),
            format!("{:?}", u.output.shape()),
            density(u.inner_mask.data()),
            density(u.outer_mask.data()),
        );
    }
    println!(
        "predicted class {} from logits {:?}",
        net.predict(&image)?,
        logits.data()
    );
    Ok(())
}
