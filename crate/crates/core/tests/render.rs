use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streetfield_core::field::{AffineColorMap, FieldSample};
use streetfield_core::math::{Mat3, Vec3};
use streetfield_core::render::{
    composite_pixel, composite_weighted, compute_weights, sample_ray, weights_into, MaskBits, Ray, SampleSet,
};

fn ray(t_near: f64, t_far: f64) -> Ray<f64> {
    Ray {
        origin: Vec3::zero(),
        direction: Vec3::new(0.0, 0.0, 1.0),
        t_near,
        t_far,
        image: 0,
        row: 0,
        col: 0,
        mask: MaskBits::default(),
    }
}

// Direct product form, no running sums shared with the implementation.
fn oracle_weights(sigma: &[f64], delta: &[f64]) -> Vec<f64> {
    (0..sigma.len())
        .map(|k| {
            let tk: f64 = (0..k).map(|j| (-sigma[j] * delta[j]).exp()).product();
            tk * (1.0 - (-sigma[k] * delta[k]).exp())
        })
        .collect()
}

#[test]
fn telescoping_identity_over_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let k = rng.random_range(1..200);
        let sigma: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..5.0) * rng.random_range(0.0..1.0_f64).powi(3)).collect();
        let delta: Vec<f64> = (0..k).map(|_| rng.random_range(1e-3..0.2)).collect();
        let mut w = vec![0.0; k];
        let mut tr = vec![0.0; k];
        let alpha = weights_into(&sigma, &delta, &mut w, &mut tr).unwrap();
        let optical: f64 = sigma.iter().zip(&delta).map(|(s, d)| s * d).sum();
        let closed = 1.0 - (-optical).exp();
        let sum: f64 = w.iter().sum();
        worst = worst.max((sum - closed).abs()).max((alpha - closed).abs());
        for pair in tr.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
        for (a, b) in w.iter().zip(oracle_weights(&sigma, &delta)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    assert!(worst < 1e-12, "{worst:e}");
}

#[test]
fn homogeneous_unit_density() {
    let s = sample_ray(&ray(0.0, 1.0), 128, &mut ChaCha8Rng::seed_from_u64(0), false).unwrap();
    let w = compute_weights(&vec![1.0; 128], &s.delta).unwrap();
    let sum: f64 = w.iter().sum();
    assert!((sum - (1.0 - (-1.0_f64).exp())).abs() < 1e-12);
    assert!((sum - 0.632121).abs() < 1e-6);
}

#[test]
fn half_weight_from_ln2() {
    let w = compute_weights(&[core::f64::consts::LN_2], &[1.0]).unwrap();
    assert!((w[0] - 0.5).abs() < 1e-15);
}

#[test]
fn negative_density_is_rejected() {
    assert!(compute_weights(&[0.1, -0.1], &[0.5, 0.5]).is_err());
}

#[test]
fn midpoints_and_stratified_intervals() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = sample_ray(&ray(0.0, 1.0), 2, &mut rng, false).unwrap();
    assert_eq!(s.t, vec![0.25, 0.75]);
    assert_eq!(s.delta, vec![0.5, 0.5]);
    assert!(sample_ray(&ray(0.0, 1.0), 0, &mut rng, false).is_err());

    let r = ray(2.0, 6.0);
    let a = sample_ray(&r, 16, &mut ChaCha8Rng::seed_from_u64(9), true).unwrap();
    let b = sample_ray(&r, 16, &mut ChaCha8Rng::seed_from_u64(9), true).unwrap();
    assert_eq!(a, b);
    for (k, t) in a.t.iter().enumerate() {
        let lo = 2.0 + 0.25 * k as f64;
        assert!(*t >= lo && *t <= lo + 0.25);
    }
}

#[test]
fn weighted_sum_oracle() {
    let out = composite_weighted(
        &[0.2_f64, 0.4],
        &[0.5, 0.25],
        0.75,
        &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        &[0.0, 0.0, 1.0],
        &AffineColorMap::identity(),
        9.0,
    );
    let expected = [0.5, 0.25, 0.25];
    for a in 0..3 {
        assert!((out.color[a] - expected[a]).abs() < 1e-15);
    }
    assert!((out.depth - (0.5 * 0.2 + 0.25 * 0.4) / 0.75).abs() < 1e-15);
}

#[test]
fn empty_medium_is_pure_sky() {
    let s = sample_ray(&ray(1.0, 3.0), 8, &mut ChaCha8Rng::seed_from_u64(0), false).unwrap();
    let field = vec![FieldSample { density: 0.0, color: [0.9, 0.1, 0.4] }; 8];
    let sky = [0.3, 0.55, 0.95];
    let mut map = AffineColorMap::identity();
    map.shift = Vec3::new(0.2, -0.1, 0.05);
    let out = composite_pixel(&s, &field, &sky, &map, 3.0).unwrap();
    assert_eq!(out.color, sky);
    assert_eq!(out.opacity, 0.0);
    assert_eq!(out.depth, 3.0);
}

#[test]
fn opaque_first_sample_hides_the_sky() {
    let s = sample_ray(&ray(0.0, 1.0), 4, &mut ChaCha8Rng::seed_from_u64(0), false).unwrap();
    let mut field = vec![FieldSample { density: 1.0, color: [0.0, 0.0, 0.0] }; 4];
    field[0] = FieldSample { density: 1e3, color: [0.2, 0.6, 0.4] };
    let out = composite_pixel(&s, &field, &[1.0, 1.0, 1.0], &AffineColorMap::identity(), 1.0).unwrap();
    for a in 0..3 {
        assert!((out.color[a] - field[0].color[a]).abs() < 1e-6);
    }
    assert!((out.depth - s.t[0]).abs() < 1e-6);
    assert!(composite_pixel(&s, &field[..3], &[0.0; 3], &AffineColorMap::identity(), 1.0).is_err());
}

fn arb_samples() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..40).prop_flat_map(|k| (prop::collection::vec(0.0..20.0_f64, k), prop::collection::vec(1e-4..0.5_f64, k)))
}

proptest! {
    #[test]
    fn weights_are_a_subprobability((sigma, delta) in arb_samples()) {
        let w = compute_weights(&sigma, &delta).unwrap();
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        prop_assert!(w.iter().sum::<f64>() <= 1.0 + 1e-12);
    }

    #[test]
    fn transmittance_never_increases((sigma, delta) in arb_samples()) {
        let k = sigma.len();
        let (mut w, mut tr) = (vec![0.0; k], vec![0.0; k]);
        weights_into(&sigma, &delta, &mut w, &mut tr).unwrap();
        prop_assert!(tr[0] <= 1.0);
        for pair in tr.windows(2) {
            prop_assert!(pair[1] <= pair[0]);
        }
    }

    #[test]
    fn identity_map_and_black_sky_is_the_weighted_sum(
        (sigma, delta) in arb_samples(),
        seed in any::<u64>(),
    ) {
        let k = sigma.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let colors: Vec<[f64; 3]> = (0..k).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let t: Vec<f64> = delta.iter().scan(0.0, |acc, d| { *acc += d; Some(*acc - 0.5 * d) }).collect();
        let s = SampleSet { t, variance: vec![0.0; k], delta: delta.clone() };
        let field: Vec<FieldSample<f64>> = sigma.iter().zip(&colors).map(|(d, c)| FieldSample { density: *d, color: *c }).collect();
        let out = composite_pixel(&s, &field, &[0.0; 3], &AffineColorMap { matrix: Mat3::identity(), shift: Vec3::zero() }, 1.0).unwrap();
        let w = oracle_weights(&sigma, &delta);
        for a in 0..3 {
            let expected: f64 = w.iter().zip(&colors).map(|(w, c)| w * c[a]).sum();
            prop_assert!((out.color[a] - expected).abs() < 1e-12);
        }
        prop_assert!(out.opacity >= 0.0 && out.opacity <= 1.0);
    }
}
