mod common;

use common::{image, rel_close, tiny, tiny_net, zero_residual};
use proptest::prelude::*;
use resnet_spectra::jacobian::{
    adjoint_mismatch, input_gradient, jacobian_test, materialize, materialize_transpose, stage_operator,
    DiagonalOperator, IdentityOperator, LinearOperator,
};
use resnet_spectra::model::UnitId;
use resnet_spectra::ops::Activation;
use resnet_spectra::spectra::dense_singular_values;
use resnet_spectra::tensor::l2_norm;
use resnet_spectra::{Distribution, Network, RngStream, Tensor};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn unit_dir(rng: &mut RngStream, n: usize) -> Vec<f64> {
    let v = rng.sample_vec(n, Distribution::Gaussian);
    let s = norm(&v);
    v.into_iter().map(|x| x / s).collect()
}

fn softplus_net(n: usize, seed: u64) -> Network<f64> {
    let (spec, store) = tiny(n, [4, 8, 16], Activation::Softplus, seed);
    Network::new(&spec, &store).unwrap()
}

#[test]
fn zero_residual_identity_unit_applies_identity() {
    let (spec, store) = tiny(2, [4, 8, 16], Activation::Identity, 1);
    let net: Network<f64> = Network::new(&spec, &zero_residual(&spec, &store)).unwrap();
    let (_, trace) = net.forward(&image(1)).unwrap();
    let op = net.unit_operator(&trace, UnitId::new(2, 1)).unwrap();
    let mut rng = RngStream::new(1, 0);
    for _ in 0..5 {
        let v = rng.sample_vec(op.in_dim(), Distribution::Gaussian);
        let jv = op.apply(&v).unwrap();
        assert!(jv.iter().zip(&v).all(|(a, b)| (a - b).abs() <= 1e-12));
    }
}

#[test]
fn adjoint_identity_on_every_unit_of_two_unit_net() {
    let (spec, store) = tiny(2, [4, 8, 16], Activation::Relu, 2);
    let net: Network<f64> = Network::new(&spec, &store).unwrap();
    let (_, trace) = net.forward(&image(2)).unwrap();
    let mut rng = RngStream::new(2, 0);
    for id in spec.units() {
        let m = adjoint_mismatch(&net.unit_operator(&trace, id).unwrap(), 100, &mut rng).unwrap();
        assert!(m <= 1e-4, "{id:?}: {m}");
    }
}

#[test]
fn unit_matches_finite_difference() {
    let net = softplus_net(2, 3);
    let (_, trace) = net.forward(&image(3)).unwrap();
    let mut rng = RngStream::new(3, 0);
    for id in [UnitId::new(1, 1), UnitId::new(2, 0), UnitId::new(3, 1)] {
        let ut = trace.unit(id).unwrap();
        let op = net.unit_operator(&trace, id).unwrap();
        let v = unit_dir(&mut rng, op.in_dim());
        let h = 1e-3;
        let x = ut.input.to_f64_vec();
        let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
        let yp = net
            .unit_forward(id, &Tensor::from_vec(ut.input.shape(), xp).unwrap())
            .unwrap();
        let fd: Vec<f64> = yp
            .output
            .data()
            .iter()
            .zip(ut.output.data())
            .map(|(a, b)| (a - b) / h)
            .collect();
        let jv = op.apply(&v).unwrap();
        let err = norm(&fd.iter().zip(&jv).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(err <= 2e-3 * norm(&jv), "{id:?}: {err} vs {}", norm(&jv));
    }
}

#[test]
fn stage_matches_finite_difference() {
    let net = softplus_net(3, 4);
    let (_, trace) = net.forward(&image(4)).unwrap();
    let op = net.stage_operator(&trace, 2).unwrap();
    let mut rng = RngStream::new(4, 0);
    let v = unit_dir(&mut rng, op.in_dim());
    let h = 1e-3;
    let first = trace.unit(UnitId::new(2, 0)).unwrap();
    let run = |x: &Tensor<f64>| {
        let mut x = x.clone();
        for u in 0..3 {
            x = net.unit_forward(UnitId::new(2, u), &x).unwrap().output;
        }
        x
    };
    let base = run(&first.input);
    let xp = first
        .input
        .to_f64_vec()
        .iter()
        .zip(&v)
        .map(|(a, b)| a + h * b)
        .collect();
    let pert = run(&Tensor::from_vec(first.input.shape(), xp).unwrap());
    let fd: Vec<f64> = pert.data().iter().zip(base.data()).map(|(a, b)| (a - b) / h).collect();
    let jv = op.apply(&v).unwrap();
    let err = norm(&fd.iter().zip(&jv).map(|(a, b)| a - b).collect::<Vec<_>>());
    assert!(err <= 5e-3 * norm(&jv), "{err} vs {}", norm(&jv));
}

#[test]
fn chains_of_one_and_of_identities() {
    let net = tiny_net(Activation::Relu, 5);
    let (_, trace) = net.forward(&image(5)).unwrap();
    let id = UnitId::new(1, 0);
    let single = stage_operator(vec![Box::new(net.unit_operator(&trace, id).unwrap())]).unwrap();
    let op = net.unit_operator(&trace, id).unwrap();
    let v = RngStream::new(5, 0).sample_vec(op.in_dim(), Distribution::Gaussian);
    assert_eq!(single.apply(&v).unwrap(), op.apply(&v).unwrap());
    assert_eq!(single.apply_transpose(&v).unwrap(), op.apply_transpose(&v).unwrap());

    let pair = stage_operator(vec![
        Box::new(IdentityOperator::new(&[4, 32, 32])),
        Box::new(IdentityOperator::new(&[4, 32, 32])),
    ])
    .unwrap();
    assert_eq!(pair.apply(&v).unwrap(), v);

    let (spec, store) = tiny(2, [4, 8, 16], Activation::Identity, 5);
    let flat: Network<f64> = Network::new(&spec, &zero_residual(&spec, &store)).unwrap();
    let (_, ft) = flat.forward(&image(5)).unwrap();
    let stage = flat.stage_operator(&ft, 1).unwrap();
    let out = stage.apply(&v).unwrap();
    assert!(out.iter().zip(&v).all(|(a, b)| (a - b).abs() <= 1e-12));
}

#[test]
fn incompatible_chain_is_rejected() {
    let r = stage_operator(vec![
        Box::new(IdentityOperator::new(&[4, 32, 32])),
        Box::new(IdentityOperator::new(&[8, 16, 16])),
    ]);
    assert!(r.is_err());
}

#[test]
fn input_gradient_matches_central_difference() {
    let net = softplus_net(1, 6);
    let img = image(6);
    let label = 3;
    let g = input_gradient(&net, &img, label).unwrap();
    let mut rng = RngStream::new(6, 0);
    let h = 1e-3;
    for _ in 0..20 {
        let i = rng.next_index(img.len());
        let mut p = img.clone();
        p.data_mut()[i] += h;
        let mut m = img.clone();
        m.data_mut()[i] -= h;
        let fd = (net.loss(&p, label).unwrap() - net.loss(&m, label).unwrap()) / (2.0 * h);
        assert!((fd - g.data()[i]).abs() <= 1e-3, "pixel {i}: {fd} vs {}", g.data()[i]);
    }
    let again = input_gradient(&net, &img, label).unwrap();
    assert_eq!(g.data(), again.data());
}

#[test]
fn zero_head_weight_gives_zero_gradient() {
    let (spec, mut store) = tiny(1, [4, 8, 16], Activation::Relu, 7);
    store
        .get_mut("head.fc.weight")
        .unwrap()
        .data_mut()
        .iter_mut()
        .for_each(|v| *v = 0.0);
    let net: Network<f64> = Network::new(&spec, &store).unwrap();
    let g = input_gradient(&net, &image(7), 1).unwrap();
    assert!(g.data().iter().all(|v| *v == 0.0));
}

#[test]
fn decay_orders() {
    let net = softplus_net(1, 8);
    let (_, trace) = net.forward(&image(8)).unwrap();
    let id = UnitId::new(1, 0);
    let ut = trace.unit(id).unwrap();
    let op = net.unit_operator(&trace, id).unwrap();
    let shape = ut.input.shape().to_vec();
    let dx = RngStream::new(8, 0).sample_vec(op.in_dim(), Distribution::Gaussian);
    let fwd = |p: &[f64]| {
        Ok(net
            .unit_forward(id, &Tensor::from_vec(&shape, p.to_vec())?)?
            .output
            .to_f64_vec())
    };
    let r = jacobian_test(&op, fwd, &ut.input.to_f64_vec(), &dx, 1e-1, 4).unwrap();
    assert!((0.9..=1.1).contains(&r.first_order_slope), "{r:?}");
    assert!((1.8..=2.2).contains(&r.second_order_slope), "{r:?}");

    // An affine unit is its own linearization.
    let (spec, store) = tiny(1, [4, 8, 16], Activation::Identity, 8);
    let lin: Network<f64> = Network::new(&spec, &store).unwrap();
    let (_, lt) = lin.forward(&image(8)).unwrap();
    let lop = lin.unit_operator(&lt, id).unwrap();
    let x = lt.unit(id).unwrap().input.to_f64_vec();
    let fwd = |p: &[f64]| {
        Ok(lin
            .unit_forward(id, &Tensor::from_vec(&shape, p.to_vec())?)?
            .output
            .to_f64_vec())
    };
    let r = jacobian_test(&lop, fwd, &x, &dx, 1e-1, 4).unwrap();
    assert!(r.rows.iter().all(|row| row.second_order <= 1e-5 * norm(&x)), "{r:?}");

    // ReLU: the report is produced, no order asserted.
    let relu = tiny_net(Activation::Relu, 8);
    let (_, rt) = relu.forward(&image(8)).unwrap();
    let rop = relu.unit_operator(&rt, id).unwrap();
    let x = rt.unit(id).unwrap().input.to_f64_vec();
    let fwd = |p: &[f64]| {
        Ok(relu
            .unit_forward(id, &Tensor::from_vec(&shape, p.to_vec())?)?
            .output
            .to_f64_vec())
    };
    let r = jacobian_test(&rop, fwd, &x, &dx, 1e-1, 4).unwrap();
    assert!(r.first_order_slope.is_finite());
}

#[test]
fn materialization_examples() {
    let m = materialize(&IdentityOperator::new(&[8]), 16).unwrap();
    for i in 0..8 {
        for j in 0..8 {
            assert_eq!(m.get(i, j), if i == j { 1.0 } else { 0.0 });
        }
    }
    assert!(materialize(&IdentityOperator::new(&[32]), 16).is_err());

    let net = tiny_net(Activation::Relu, 9);
    let (_, trace) = net.forward(&image(9)).unwrap();
    let op = net.unit_operator(&trace, UnitId::new(3, 0)).unwrap();
    let a = materialize(&op, 4096).unwrap();
    let b = materialize_transpose(&op, 4096).unwrap();
    assert!(a.max_abs_diff(&b) <= 1e-5);

    let bn = &net.unit_params(UnitId::new(3, 0)).unwrap().bn1;
    let d = materialize(&DiagonalOperator::batch_norm(bn, &[16, 8, 8]).unwrap(), 4096).unwrap();
    for c in 0..16 {
        let want = bn.gamma.data()[c] / (bn.var.data()[c] + 1e-5).sqrt();
        for p in [0, 17, 63] {
            let i = c * 64 + p;
            assert!(rel_close(d.get(i, i), want, 1e-12));
            assert_eq!(d.get(i, (i + 1) % 1024), 0.0);
        }
    }
}

#[test]
fn regular_unit_is_mask_plus_low_rank() {
    let (spec, store) = tiny(2, [4, 8, 16], Activation::Relu, 10);
    let net: Network<f64> = Network::new(&spec, &store).unwrap();
    let (_, trace) = net.forward(&image(10)).unwrap();
    let id = UnitId::new(3, 1);
    let ut = trace.unit(id).unwrap();
    let op = net.unit_operator(&trace, id).unwrap();
    let mut diff = materialize(&op, 4096).unwrap();
    let mask = ut.outer_mask.data();
    for (i, m) in mask.iter().enumerate() {
        diff.set(i, i, diff.get(i, i) - m);
    }
    let n = op.in_dim();
    let mut mjr = resnet_spectra::jacobian::DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = Tensor::<f64>::zeros(ut.input.shape()).unwrap();
        e.data_mut()[j] = 1.0;
        let col = op.residual_jvp(&e).unwrap();
        for (i, (c, m)) in col.data().iter().zip(mask).enumerate() {
            mjr.set(i, j, c * m);
        }
    }
    let s1 = dense_singular_values(&diff).unwrap().singular_values;
    let s2 = dense_singular_values(&mjr).unwrap().singular_values;
    for (a, b) in s1.iter().zip(&s2) {
        assert!((a - b).abs() <= 1e-5 * s2[0].max(1.0));
    }
    let rank = s1.iter().filter(|s| **s > 1e-8 * s1[0]).count();
    let active_inner = ut.inner_mask.data().iter().filter(|m| **m != 0.0).count();
    assert!(rank <= active_inner, "rank {rank} > {active_inner}");
}

#[test]
fn rebuilt_operator_is_bit_identical() {
    let net = tiny_net(Activation::Relu, 11);
    let (_, trace) = net.forward(&image(11)).unwrap();
    let (_, again) = net.forward(&image(11)).unwrap();
    let id = UnitId::new(2, 0);
    let a = net.unit_operator(&trace, id).unwrap();
    let b = net.unit_operator(&again, id).unwrap();
    let v = RngStream::new(11, 0).sample_vec(a.in_dim(), Distribution::Gaussian);
    assert_eq!(a.apply(&v).unwrap(), b.apply(&v).unwrap());
    let u = RngStream::new(11, 1).sample_vec(a.out_dim(), Distribution::Gaussian);
    assert_eq!(a.apply_transpose(&u).unwrap(), b.apply_transpose(&u).unwrap());
    assert!(l2_norm(&trace.image) > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn operators_are_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let net = tiny_net(Activation::Relu, 12);
        let (_, trace) = net.forward(&image(12)).unwrap();
        let ops: Vec<Box<dyn LinearOperator + '_>> = vec![
            Box::new(net.unit_operator(&trace, UnitId::new(1, 0)).unwrap()),
            Box::new(net.unit_operator(&trace, UnitId::new(2, 0)).unwrap()),
            Box::new(net.stage_operator(&trace, 3).unwrap()),
            Box::new(net.network_operator(&trace).unwrap()),
        ];
        let mut rng = RngStream::new(seed, 0);
        for op in &ops {
            let v = rng.sample_vec(op.in_dim(), Distribution::Gaussian);
            let w = rng.sample_vec(op.in_dim(), Distribution::Gaussian);
            let mix: Vec<f64> = v.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
            let (jv, jw, jm) = (op.apply(&v).unwrap(), op.apply(&w).unwrap(), op.apply(&mix).unwrap());
            let err = norm(&jm.iter().zip(jv.iter().zip(&jw)).map(|(m, (x, y))| m - a * x - b * y).collect::<Vec<_>>());
            prop_assert!(err <= 1e-4 * (a.abs() * norm(&jv) + b.abs() * norm(&jw)) + 1e-12);
        }
    }
}
