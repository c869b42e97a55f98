use proptest::prelude::*;
use streetfield_core::image::{Bitmap, Image};
use streetfield_core::loss::{rgb_loss, sky_decay_loss, total_loss, LossWeights};
use streetfield_core::metrics::psnr;
use streetfield_core::optim::{adam_update_slice, cosine_lr, AdamConfig};

#[test]
fn sky_decay_example() {
    let (v, g) = sky_decay_loss(&[vec![0.5, 0.5], vec![1.0, 0.0]], &[true, false], &[false, false]).unwrap();
    assert!((v - -0.25_f64).abs() < 1e-15);
    assert_eq!(g[0], vec![0.5, 0.5]);
    assert_eq!(g[1], vec![-1.0, 0.0]);
}

#[test]
fn transient_rays_are_skipped_but_counted() {
    let (v, g) = sky_decay_loss(&[vec![0.5, 0.5], vec![1.0, 0.0]], &[true, false], &[false, true]).unwrap();
    assert!((v - 0.25_f64).abs() < 1e-15);
    assert_eq!(g[1], vec![0.0, 0.0]);
    let l = rgb_loss(&[[1.0, 0.0, 0.0], [0.0; 3]], &[[0.0; 3], [1.0; 3]], &[false, true]).unwrap();
    assert!((l.value - 0.5_f64).abs() < 1e-15);
    assert_eq!(&l.grads[3..], &[0.0; 3]);
}

#[test]
fn weighted_total() {
    let b = total_loss(1.0, 0.5, 2.0, LossWeights { sky: 1e-4, ground: 1e-4 }).unwrap();
    assert!((b.l_total - 1.00025).abs() < 1e-15);
    assert_eq!(LossWeights::default(), LossWeights { sky: 1e-4, ground: 1e-4 });
    assert!(total_loss(1.0, 0.0, 0.0, LossWeights { sky: -1.0, ground: 0.0 }).is_err());
}

#[test]
fn cosine_schedule_values() {
    let t = 50_000;
    assert_eq!(cosine_lr(0, t, 0.01, 0.001), 0.01);
    assert!((cosine_lr(t, t, 0.01, 0.001) - 0.001).abs() < 1e-18);
    assert!((cosine_lr(t / 2, t, 0.01, 0.001) - 0.0055).abs() < 1e-15);
    assert_eq!(cosine_lr(t + 7, t, 0.01, 0.001), 0.001);
    let mut prev = f64::INFINITY;
    for i in 0..=1000 {
        let lr = cosine_lr(i * 50, t, 0.01, 0.001);
        assert!(lr <= prev);
        prev = lr;
    }
}

#[test]
fn first_adam_step_is_lr_sign() {
    let cfg = AdamConfig::default();
    let grads = [0.3_f64, -2.0, 1e-3];
    let mut p = [1.0_f64; 3];
    let (mut m, mut v) = ([0.0; 3], [0.0; 3]);
    adam_update_slice(&mut p, &grads, &mut m, &mut v, 1, 0.01, &cfg);
    for (x, g) in p.iter().zip(grads) {
        let expected = 1.0 - 0.01 * g / (g.abs() + 1e-8);
        assert!((x - expected).abs() < 1e-15);
    }

    let mut q = [0.5; 4];
    let (mut m, mut v) = ([0.0; 4], [0.0; 4]);
    adam_update_slice(&mut q, &[0.0; 4], &mut m, &mut v, 1, 0.01, &cfg);
    assert_eq!(q, [0.5; 4]);
}

#[test]
fn psnr_values() {
    let mut a = Image::new(4, 3);
    let mut b = Image::new(4, 3);
    for r in 0..3 {
        for c in 0..4 {
            a.set_pixel(r, c, [0.5, 0.2, 0.7]);
            b.set_pixel(r, c, [0.6, 0.3, 0.8]);
        }
    }
    assert_eq!(psnr(&a, &a, None).unwrap(), f64::INFINITY);
    assert!((psnr(&a, &b, None).unwrap() - 20.0).abs() < 1e-5);
    assert!(psnr(&a, &b, Some(&Bitmap::zeros(4, 3))).is_err());
}

proptest! {
    #[test]
    fn total_is_linear_in_the_weights(r in 0.0..10.0_f64, s in -1.0..1.0_f64, g in 0.0..5.0_f64, ls in 0.0..1.0_f64, lg in 0.0..1.0_f64) {
        let b = total_loss(r, s, g, LossWeights { sky: ls, ground: lg }).unwrap();
        prop_assert_eq!(b.l_total, r + ls * s + lg * g);
    }

    #[test]
    fn sky_loss_gradient_is_twice_the_signed_weight(w in prop::collection::vec(0.0..0.1_f64, 1..16), sky in any::<bool>()) {
        let (v, g) = sky_decay_loss(&[w.clone(), w.clone()], &[sky, sky], &[false, false]).unwrap();
        let sign = if sky { 1.0 } else { -1.0 };
        let s: f64 = w.iter().map(|x| x * x).sum();
        prop_assert!((v - sign * s).abs() < 1e-15);
        for (gi, wi) in g[0].iter().zip(&w) {
            prop_assert!((gi - sign * wi).abs() < 1e-15);
        }
    }
}
