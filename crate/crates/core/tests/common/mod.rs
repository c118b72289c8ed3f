#![allow(dead_code)]

use std::path::PathBuf;

use resnet_spectra::model::{build_spec, init_weights, NetworkSpec, WeightStore};
use resnet_spectra::ops::Activation;
use resnet_spectra::{Network, RngStream, Tensor};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn tiny(n: usize, channels: [usize; 3], act: Activation, seed: u64) -> (NetworkSpec, WeightStore) {
    let spec = build_spec(n, channels, act).unwrap();
    let store = init_weights(&spec, &RngStream::new(seed, 0));
    (spec, store)
}

pub fn tiny_net(act: Activation, seed: u64) -> Network<f64> {
    let (spec, store) = tiny(1, [4, 8, 16], act, seed);
    Network::new(&spec, &store).unwrap()
}

/// Same weights with every residual branch silenced (second convolution zeroed).
pub fn zero_residual(spec: &NetworkSpec, store: &WeightStore) -> WeightStore {
    let mut out = store.clone();
    for id in spec.units() {
        let w = out.get_mut(&format!("{}.conv2.weight", id.prefix())).unwrap();
        w.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    out
}

/// Pixel image with entries in (0.1, 0.9).
pub fn image(seed: u64) -> Tensor<f64> {
    let mut r = RngStream::new(seed, 4242);
    let v = (0..3 * 32 * 32).map(|_| 0.1 + 0.8 * r.next_open01()).collect();
    Tensor::from_vec(&[3, 32, 32], v).unwrap()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted
/// descending.
pub fn jacobi_eigenvalues(mut a: Vec<f64>, n: usize) -> Vec<f64> {
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
    ev
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
