//! Scaling the skip connection of one unit moves the plateau of its spectrum
//! to the scale factor.
//!
//! ```bash
//! cargo run --release --example skip_scaling
//! ```

use std::path::Path;

use resnet_spectra::experiments::ModelChoice;
use resnet_spectra::model::{load_cifar10, load_weights, Overrides, UnitOverride};
use resnet_spectra::ops::Activation;
use resnet_spectra::spectra::{full_spectrum, plateau_value};
use resnet_spectra::{Network, UnitId};

fn main() -> resnet_spectra::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let spec = "tiny:3:4,8,16".parse::<ModelChoice>()?.spec(Activation::Relu)?;
    let store = load_weights(fixtures.join("tiny_relu.ntw"))?;
    let image = load_cifar10(fixtures.join("tiny_test.bin"))?[0].image.cast();

    let id = UnitId::new(3, 1);
    for alpha in [0.5, 1.0, 1.5] {
        let overrides = Overrides::from([(id, UnitOverride::skip_scale(alpha))]);
        let net: Network<f64> = Network::with_options(&spec, &store, Default::default(), overrides)?;
        let (_, trace) = net.forward(&image)?;
        let s = full_spectrum(&net.unit_operator(&trace, id)?, 4096, false)?;
        println!(
            "alpha {alpha:.1}: sigma_1 {:.3}, plateau at {:.2}",
            s.largest(),
            plateau_value(&s.singular_values, None).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
