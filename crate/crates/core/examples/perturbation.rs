//! Adversarial (FGSM) and norm-matched random perturbations pushed through
//! the trained fixture network, with the per-unit normalized difference
//! magnitudes.
//!
//! ```bash
//! cargo run --release --example perturbation
//! ```

use std::path::Path;

use resnet_spectra::experiments::ModelChoice;
use resnet_spectra::model::{load_cifar10, load_weights};
use resnet_spectra::ops::Activation;
use resnet_spectra::perturb::{fgsm, propagate, random_matched};
use resnet_spectra::tensor::l2_norm;
use resnet_spectra::{Network, RngStream, Tensor};

fn main() -> resnet_spectra::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let spec = "tiny:3:4,8,16".parse::<ModelChoice>()?.spec(Activation::Relu)?;
    let net: Network<f64> = Network::new(&spec, &load_weights(fixtures.join("tiny_relu.ntw"))?)?;
    let item = &load_cifar10(fixtures.join("tiny_test.bin"))?[0];
    let image: Tensor<f64> = item.image.cast();

    let eps = 2.0 / 255.0;
    let adv = fgsm(&net, &image, item.label, eps)?;
    let rand: Tensor<f64> = random_matched(image.shape(), l2_norm(&adv), &mut RngStream::new(0, 1))?;
    println!("label {}, clean prediction {}", item.label, net.predict(&image)?);
    println!("adversarial prediction {}", net.predict(&image.add(&adv)?)?);
    println!(
        "input norms: adversarial {:.6}, random {:.6}",
        l2_norm(&adv),
        l2_norm(&rand)
    );

    let a = propagate(&net, &image, &adv)?;
    let r = propagate(&net, &image, &rand)?;
    println!("{:<10} {:>12} {:>12}", "unit", "adversarial", "random");
    for (x, y) in a.units.iter().zip(&r.units) {
        println!(
            "{:<10} {:>12.5} {:>12.5}",
            x.id.to_string(),
            x.normalized_norm,
            y.normalized_norm
        );
    }
    Ok(())
}
