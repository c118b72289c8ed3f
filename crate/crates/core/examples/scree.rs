//! Full singular value spectrum of one residual unit and its band counts.
//!
//! Uses the trained fixture network shipped with the crate, so the plateau of
//! singular values near 1 is visible.
//!
//! ```bash
//! cargo run --release --example scree
//! ```

use std::path::Path;

use resnet_spectra::experiments::ModelChoice;
use resnet_spectra::model::{load_cifar10, load_weights};
use resnet_spectra::ops::Activation;
use resnet_spectra::spectra::{bin_spectrum, full_spectrum, plateau_value};
use resnet_spectra::{Network, UnitId};

fn main() -> resnet_spectra::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let model: ModelChoice = "tiny:3:4,8,16".parse()?;
    let spec = model.spec(Activation::Relu)?;
    let net: Network<f64> = Network::new(&spec, &load_weights(fixtures.join("tiny_relu.ntw"))?)?;
    let images = load_cifar10(fixtures.join("tiny_test.bin"))?;

    let id = UnitId::new(3, 1);
    for item in &images[..3] {
        let (_, trace) = net.forward(&item.image.cast())?;
        let s = full_spectrum(&net.unit_operator(&trace, id)?, 4096, false)?;
        let b = bin_spectrum(&s, None);
        let head: Vec<String> = s.singular_values[..6].iter().map(|v| format!("{v:.3}")).collect();
        println!(
            "{id}: sigma_1.. = [{}], above {} plateau {} mid {} zero {} of {}, plateau at {:.2}",
            head.join(", "),
            b.n_above,
            b.n_plateau,
            b.n_mid,
            b.n_zero,
            b.total(),
            plateau_value(&s.singular_values, None).unwrap_or(f64::NAN),
        );
    }
    Ok(())
}
