//! Every tape op against central finite differences in f64, plus
//! structural properties of the backward pass.

mod common;

use common::ops::{grid_param, probe_for, rand_tensor, rng, store, CASES};
use edno_core::autodiff::{backward, grad_check, Tape};
use edno_core::tensor::{BlockMap, RealGrid, Tensor};

#[test]
fn every_op_matches_finite_differences() {
    for (name, case) in CASES {
        for report in case() {
            assert!(report.passed(), "{name}: {report:#?}");
        }
    }
}

#[test]
fn weighted_sum_gradient_is_input_sum() {
    // loss = Σ w·x with x fixed, w a single scalar broadcast through affine
    let x = RealGrid::from_fn(3, 3, 1, |h, w, _| (h * 3 + w) as f64 * 0.1);
    let mut p = BlockMap::new();
    p.insert("w", Tensor::from_vec(&[1, 1], vec![0.7]).unwrap()).unwrap();
    p.insert("unused", Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap()).unwrap();
    p.insert("b", Tensor::zeros(&[1])).unwrap();
    let mut t = Tape::new();
    let xi = t.input(x.clone());
    let w = t.param(&p, "w").unwrap();
    let b = t.param(&p, "b").unwrap();
    let y = t.conv1x1(xi, w, b).unwrap();
    let m = t.mean(y).unwrap();
    let loss = t.scale(m, 9.0).unwrap();
    let g = backward(&t, loss, &p).unwrap();
    let sum: f64 = x.data().iter().sum();
    assert!((g.require("w").unwrap().data()[0] - sum).abs() < 1e-12);
    assert_eq!(g.require("unused").unwrap().data(), &[0.0, 0.0]);
    assert_eq!(g.keys().collect::<Vec<_>>(), vec!["w", "unused", "b"]);
}

#[test]
fn non_scalar_loss_and_empty_tape_are_rejected() {
    let p: BlockMap<f64> = BlockMap::new();
    let mut t = Tape::new();
    let x = t.input(RealGrid::zeros(2, 2, 1));
    assert!(backward(&t, x, &p).is_err());
    let empty: Tape<f64> = Tape::new();
    assert!(empty.gradients(x).is_err());
}

#[test]
fn backward_is_linear_and_deterministic() {
    let mut r = rng(11);
    let p = store(vec![
        ("x", rand_tensor(&mut r, &[4, 4, 2])),
        ("w", rand_tensor(&mut r, &[2, 4])),
        ("b", rand_tensor(&mut r, &[2])),
    ]);
    let build = |t: &mut Tape<f64>, a: f64| {
        let x = grid_param(t, &p, "x", 4, 4, 2).unwrap();
        let f = t.fft2(x).unwrap();
        let m = t.magnitude(f).unwrap();
        let ph = t.phase(f).unwrap();
        let cat = t.concat(&[m, ph]).unwrap();
        let w = t.param(&p, "w").unwrap();
        let b = t.param(&p, "b").unwrap();
        let y = t.conv1x1(cat, w, b).unwrap();
        let l = t.abs_mean(y).unwrap();
        t.scale(l, a).unwrap()
    };
    let mut t1 = Tape::new();
    let l1 = build(&mut t1, 1.0);
    let g1 = backward(&t1, l1, &p).unwrap();
    let g1b = backward(&t1, l1, &p).unwrap();
    assert_eq!(g1, g1b);
    let mut t3 = Tape::new();
    let l3 = build(&mut t3, 3.0);
    let g3 = backward(&t3, l3, &p).unwrap();
    for ((_, a), (_, b)) in g1.iter().zip(g3.iter()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((3.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}

#[test]
fn bilinear_toy_checks_tightly() {
    // loss = <probe, W x>: quadratic in (W, x), so central differences are exact
    let mut r = rng(12);
    let p = store(vec![
        ("x", rand_tensor(&mut r, &[2, 2, 2])),
        ("w", rand_tensor(&mut r, &[3, 2])),
    ]);
    let f = |p: &BlockMap<f64>| {
        let mut t = Tape::new();
        let x = grid_param(&mut t, p, "x", 2, 2, 2)?;
        let w = t.param(p, "w")?;
        let b = t.constant(Tensor::zeros(&[3]));
        let y = t.conv1x1(x, w, b)?;
        let probe = probe_for(t.value(y), 5);
        let loss = t.dot(y, probe)?;
        Ok((t, loss))
    };
    let report = grad_check(f, &p, 1e-4, 1e-9, usize::MAX).unwrap();
    assert!(report.passed(), "{report:#?}");
}
