//! Cross-module properties: gradient checks, α = 0 reduction, batch-norm
//! standardisation and the worked activation vector.

use std::time::Instant;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use talu_core::gradcheck::{self, BATCHNORM_TOLERANCE, DEFAULT_TOLERANCE};
use talu_core::{with_precision, Activation, ActivationKind, Precision, Tape, Tensor};

#[test]
fn every_gradient_suite_passes_within_a_minute() {
    let start = Instant::now();
    let results = with_precision(Precision::F64, || gradcheck::check_all(0)).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    for r in &results {
        assert!(r.points >= 100, "{r}");
        let tol = if r.component.contains("batch") { BATCHNORM_TOLERANCE } else { DEFAULT_TOLERANCE };
        assert!(r.tolerance <= tol, "{r}");
        assert!(r.passed(), "{r}");
    }
    for kind in ActivationKind::ALL {
        assert!(results.iter().any(|r| r.component.contains(kind.name())), "{} unchecked", kind.name());
    }
    assert!(elapsed < 60.0, "gradient checks took {elapsed:.1}s");
}

#[test]
fn gradient_checks_pass_on_other_seeds() {
    with_precision(Precision::F64, || {
        for seed in [1, 2] {
            for r in gradcheck::check_all(seed).unwrap() {
                assert!(r.passed(), "seed {seed}: {r}");
            }
        }
    });
}

#[test]
fn alpha_zero_is_bitwise_relu_on_a_million_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 1_000_000;
    // mix of magnitudes, exact zeros and both signs of zero
    let data: Vec<f64> = (0..n)
        .map(|i| match i % 10 {
            0 => 0.0,
            1 => -0.0,
            2 => rng.gen_range(-1e-300..1e-300),
            3 => rng.gen_range(-1e6..1e6),
            _ => rng.gen_range(-30.0..30.0),
        })
        .collect();
    let x = Tensor::new([n], data).unwrap();
    let g = Tensor::uniform([n], -2.0, 2.0, &mut rng);
    let talu = Activation::Talu { alpha: 0.0 };

    let (yt, yr) = (talu.forward(&x), Activation::Relu.forward(&x));
    let same = |a: &Tensor, b: &Tensor| a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits());
    assert!(same(&yt, &yr), "forward differs");

    let dt = talu.backward(&x, &g).unwrap().d_input;
    let dr = Activation::Relu.backward(&x, &g).unwrap().d_input;
    assert!(same(&dt, &dr), "d_input differs");
}

#[test]
fn training_batchnorm_standardises_each_channel() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = 16;
    let x = Tensor::uniform([64, 8, 8, c], -3.0, 7.0, &mut rng);
    // skew channels so a per-tensor normalisation would fail
    let x = Tensor::new(
        x.shape().to_vec(),
        x.data().iter().enumerate().map(|(i, v)| v * (1 + i % c) as f64 + (i % c) as f64).collect(),
    )
    .unwrap();
    let tape = Tape::new();
    let (y, _) = tape
        .constant(x)
        .batch_norm_train(tape.constant(Tensor::ones([c])), tape.constant(Tensor::zeros([c])), 1e-3)
        .unwrap();
    let y = y.value();
    let m = (y.numel() / c) as f64;
    for ch in 0..c {
        let vals = y.data().iter().skip(ch).step_by(c);
        let mean = vals.clone().sum::<f64>() / m;
        let var = vals.map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
        assert!(mean.abs() < 1e-6, "channel {ch} mean {mean}");
        assert!((var - 1.0).abs() < 1e-3, "channel {ch} var {var}");
    }
}

#[test]
fn worked_vector() {
    let x = Tensor::new([5], vec![-20.0, -1.0, 0.0, 1.0, 20.0]).unwrap();
    let t = Activation::Talu { alpha: 1.0 }.forward(&x);
    let d = t.data();
    assert!((d[0] + 1.0).abs() < 1e-8);
    assert!((d[1] + 0.7615941559557649).abs() < 1e-12);
    assert_eq!(&d[2..], &[0.0, 1.0, 20.0]);
    assert_eq!(Activation::Relu.forward(&x).data(), &[0.0, 0.0, 0.0, 1.0, 20.0]);
}

proptest! {
    #[test]
    fn alpha_zero_reduction_holds_for_any_finite_input(x in prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, g in -10.0f64..10.0) {
        let xt = Tensor::new([1], vec![x]).unwrap();
        let gt = Tensor::new([1], vec![g]).unwrap();
        let talu = Activation::Talu { alpha: 0.0 };
        prop_assert_eq!(talu.forward(&xt).data()[0].to_bits(), Activation::Relu.forward(&xt).data()[0].to_bits());
        prop_assert_eq!(
            talu.backward(&xt, &gt).unwrap().d_input.data()[0].to_bits(),
            Activation::Relu.backward(&xt, &gt).unwrap().d_input.data()[0].to_bits()
        );
    }

    #[test]
    fn talu_tensor_path_matches_scalar_definition(xs in prop::collection::vec(-40.0f64..40.0, 1..64), alpha in -2.0f64..3.0) {
        let x = Tensor::new([xs.len()], xs.clone()).unwrap();
        let act = Activation::Talu { alpha };
        let y = act.forward(&x);
        for (v, out) in xs.iter().zip(y.data()) {
            let expect = if *v > 0.0 { *v } else { alpha * v.tanh() };
            prop_assert!((out - expect).abs() <= 1e-14 * (1.0 + expect.abs()), "{} -> {} vs {}", v, out, expect);
        }
    }
}
