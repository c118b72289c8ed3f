//! Blending a trained unit's weights towards norm-matched noise,
//! `w(t) = t w + (1 - t) eta`, and watching the plateau at 1 disappear.
//!
//! ```bash
//! cargo run --release --example weight_noise
//! ```

use std::path::Path;

use resnet_spectra::experiments::ModelChoice;
use resnet_spectra::model::{load_cifar10, load_weights, Overrides, UnitOverride};
use resnet_spectra::ops::Activation;
use resnet_spectra::spectra::{full_spectrum, plateau_fraction};
use resnet_spectra::{Network, UnitId};

fn main() -> resnet_spectra::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let spec = "tiny:3:4,8,16".parse::<ModelChoice>()?.spec(Activation::Relu)?;
    let store = load_weights(fixtures.join("tiny_relu.ntw"))?;
    let image = load_cifar10(fixtures.join("tiny_test.bin"))?[0].image.cast();

    let id = UnitId::new(3, 1);
    for t in [0.0, 0.5, 1.0] {
        let overrides = Overrides::from([(id, UnitOverride::blend(t, 42))]);
        let net: Network<f64> = Network::with_options(&spec, &store, Default::default(), overrides)?;
        let (_, trace) = net.forward(&image)?;
        let s = full_spectrum(&net.unit_operator(&trace, id)?, 4096, false)?;
        println!(
            "t = {t:.1}: sigma_1 {:.3}, plateau fraction {:.3}",
            s.largest(),
            plateau_fraction(&s.singular_values)
        );
    }
    Ok(())
}
