//! Layer forward passes against nested-loop references.

mod common;

use common::*;
use microexp_core::nn::{conv3d_forward, dense_forward, maxpool3d_forward};
use microexp_core::nn::dense::dense_weight_shape;
use microexp_core::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn conv_matches_reference_on_random_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..120 {
        let c = rng.gen_range(1..=3);
        let f = rng.gen_range(1..=3);
        let (kh, kw, kd) = (rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=4));
        let xs = shape(c, kh + rng.gen_range(0..4), kw + rng.gen_range(0..4), kd + rng.gen_range(0..5));
        let x = random_tensor(&mut rng, xs, -1.0, 1.0);
        let w = random_tensor(&mut rng, shape(f * c, kh, kw, kd), -1.0, 1.0);
        let b: Vec<f64> = (0..f).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = conv3d_forward(&x, &w, &Tensor::vector(b.clone()).unwrap()).unwrap();
        let r = conv_ref(&x, &w, &b);
        assert_eq!(y.shape(), r.shape());
        assert!(max_abs_diff(y.as_slice(), r.as_slice()) < 1e-12);
    }
}

#[test]
fn pool_matches_reference_on_random_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..120 {
        let win = (rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=3));
        let s = shape(
            rng.gen_range(1..=3),
            win.0 * rng.gen_range(1..=3) + rng.gen_range(0..win.0),
            win.1 * rng.gen_range(1..=3) + rng.gen_range(0..win.1),
            win.2 * rng.gen_range(1..=3) + rng.gen_range(0..win.2),
        );
        let x = random_tensor(&mut rng, s, -1.0, 1.0);
        let (y, _) = maxpool3d_forward(&x, win).unwrap();
        let r = pool_ref(&x, win);
        assert_eq!(y.shape(), r.shape());
        assert_eq!(y.as_slice(), r.as_slice());
    }
}

#[test]
fn dense_matches_reference_on_random_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..120 {
        let (n, m) = (rng.gen_range(1..40), rng.gen_range(1..12));
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = random_tensor(&mut rng, dense_weight_shape(n, m).unwrap(), -1.0, 1.0);
        let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = dense_forward(&Tensor::vector(x.clone()).unwrap(), &w, &Tensor::vector(b.clone()).unwrap()).unwrap();
        assert!(max_abs_diff(y.as_slice(), &dense_ref(&x, w.as_slice(), &b)) < 1e-12);
    }
}

#[test]
fn conv_window_example() {
    let x = Tensor::full(shape(1, 2, 2, 2), 1.0);
    let w = Tensor::full(shape(1, 2, 2, 2), 1.0);
    let y = conv3d_forward(&x, &w, &Tensor::vector(vec![0.0]).unwrap()).unwrap();
    assert_eq!(y.as_slice(), &[8.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_output_extents(h in 1usize..9, w in 1usize..9, d in 1usize..9, kh in 1usize..9, kw in 1usize..9, kd in 1usize..9) {
        let res = microexp_core::nn::conv_output_shape(shape(1, h, w, d), 2, (kh, kw, kd));
        if kh <= h && kw <= w && kd <= d {
            let s = res.unwrap();
            prop_assert_eq!((s.channels, s.height, s.width, s.depth), (2, h - kh + 1, w - kw + 1, d - kd + 1));
        } else {
            prop_assert!(res.is_err());
        }
    }

    #[test]
    fn pool_never_exceeds_window_max(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(&mut rng, shape(2, 4, 6, 3), -5.0, 5.0);
        let (y, argmax) = maxpool3d_forward(&x, (2, 3, 3)).unwrap();
        for (v, &i) in y.as_slice().iter().zip(&argmax) {
            prop_assert_eq!(*v, x.as_slice()[i]);
        }
        let global = x.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(y.as_slice().iter().all(|&v| v <= global));
    }

    #[test]
    fn conv_is_linear_in_input(seed in any::<u64>(), a in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x1 = random_tensor(&mut rng, shape(2, 4, 4, 4), -1.0, 1.0);
        let x2 = random_tensor(&mut rng, shape(2, 4, 4, 4), -1.0, 1.0);
        let w = random_tensor(&mut rng, shape(6, 2, 2, 3), -1.0, 1.0);
        let zero = Tensor::vector(vec![0.0; 3]).unwrap();
        let mut mix = x1.clone();
        mix.scale(a);
        mix.add_assign(&x2).unwrap();
        let lhs = conv3d_forward(&mix, &w, &zero).unwrap();
        let mut rhs = conv3d_forward(&x1, &w, &zero).unwrap();
        rhs.scale(a);
        rhs.add_assign(&conv3d_forward(&x2, &w, &zero).unwrap()).unwrap();
        prop_assert!(max_abs_diff(lhs.as_slice(), rhs.as_slice()) < 1e-10);
    }
}
