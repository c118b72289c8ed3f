//! Leading singular triplets of a whole stage without materializing it, via
//! Golub-Kahan-Lanczos bidiagonalization, checked against the dense SVD.
//!
//! ```bash
//! cargo run --release --example lanczos_topk
//! ```

use std::time::Instant;

use resnet_spectra::experiments::synthetic_image;
use resnet_spectra::model::{build_spec, init_weights};
use resnet_spectra::ops::Activation;
use resnet_spectra::spectra::{full_spectrum, lanczos_topk, LanczosOptions};
use resnet_spectra::{LinearOperator, Network, RngStream};

fn main() -> resnet_spectra::Result<()> {
    let spec = build_spec(3, [4, 8, 16], Activation::Relu)?;
    let store = init_weights(&spec, &RngStream::new(11, 0));
    let net: Network<f64> = Network::new(&spec, &store)?;
    let (_, trace) = net.forward(&synthetic_image(11, 0))?;
    let stage = net.stage_operator(&trace, 3)?;
    println!("stage 3 operator: {} -> {}", stage.in_dim(), stage.out_dim());

    let t = Instant::now();
    let top = lanczos_topk(&stage, LanczosOptions::new(8, 1e-8), &mut RngStream::new(11, 3))?;
    let lanczos_time = t.elapsed();
    let t = Instant::now();
    let dense = full_spectrum(&stage, 4096, false)?;
    let dense_time = t.elapsed();

    println!("{:>4} {:>14} {:>14}", "i", "lanczos", "dense");
    for (i, (a, b)) in top.singular_values.iter().zip(&dense.singular_values).enumerate() {
        println!("{:>4} {a:>14.10} {b:>14.10}", i + 1);
    }
    println!(
        "{} of {} triplets converged; lanczos {:.2?}, dense {:.2?}",
        top.converged_count, top.k_requested, lanczos_time, dense_time
    );
    Ok(())
}
