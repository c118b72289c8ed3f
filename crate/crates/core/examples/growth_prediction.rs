//! Predicting how much a unit amplifies a perturbation from its singular
//! triplets: project the incoming difference onto the right singular vectors
//! and combine with the singular values, then compare with the nonlinear unit.
//!
//! ```bash
//! cargo run --release --example growth_prediction
//! ```

use resnet_spectra::experiments::synthetic_image;
use resnet_spectra::model::{build_spec, init_weights};
use resnet_spectra::ops::Activation;
use resnet_spectra::perturb::{fgsm, growth_table};
use resnet_spectra::spectra::{full_spectrum, project_coefficients};
use resnet_spectra::{Network, RngStream, UnitId};

fn main() -> resnet_spectra::Result<()> {
    let spec = build_spec(2, [4, 8, 16], Activation::Relu)?;
    let net: Network<f64> = Network::new(&spec, &init_weights(&spec, &RngStream::new(5, 0)))?;
    let image = synthetic_image(5, 0);
    let (_, clean) = net.forward(&image)?;
    let delta = fgsm(&net, &image, net.predict(&image)?, 2.0 / 255.0)?;

    let stage = 3;
    let spectra = (0..spec.units_per_stage)
        .map(|u| full_spectrum(&net.unit_operator(&clean, UnitId::new(stage, u))?, 4096, true))
        .collect::<resnet_spectra::Result<Vec<_>>>()?;

    // Where does the difference entering the last unit live?
    let (_, perturbed) = net.forward(&image.add(&delta)?)?;
    let id = UnitId::new(stage, 1);
    let d_in = perturbed.unit(id)?.input.sub(&clean.unit(id)?.input)?.to_f64_vec();
    let alpha = project_coefficients(&d_in, &spectra[1])?;
    let total: f64 = alpha.iter().map(|a| a * a).sum();
    let top: f64 = alpha[..10].iter().map(|a| a * a).sum();
    println!(
        "{id}: {:.1}% of the incoming difference lies in the top 10 modes",
        100.0 * top / total
    );

    let table = growth_table(&net, &clean, &delta, stage, &spectra, None)?;
    println!("{:<10} {:>10} {:>10}", "unit", "predicted", "actual");
    for row in &table.rows {
        println!(
            "{:<10} {:>10.4} {:>10.4}",
            row.id.to_string(),
            row.predicted,
            row.actual
        );
    }
    let few = growth_table(&net, &clean, &delta, stage, &spectra, Some(10))?;
    println!("with only 10 modes:");
    for row in &few.rows {
        println!(
            "{:<10} {:>10.4} (uncaptured share {:.3})",
            row.id.to_string(),
            row.predicted,
            row.residual_mass
        );
    }
    Ok(())
}
