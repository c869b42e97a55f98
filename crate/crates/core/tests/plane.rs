use nalgebra::{Matrix3, Rotation3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streetfield_core::math::Vec3;
use streetfield_core::plane::{fit_points, ground_loss, unproject_patch};
use streetfield_core::render::{MaskBits, Ray};

fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
    Vec3::new(x, y, z)
}

fn gram(points: &[Vec3<f64>]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let c = points.iter().fold(Vector3::zeros(), |acc, p| acc + Vector3::new(p.x(), p.y(), p.z())) / n;
    points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = Vector3::new(p.x(), p.y(), p.z()) - c;
        acc + d * d.transpose()
    })
}

fn eigen_sigma3(points: &[Vec3<f64>]) -> f64 {
    gram(points).symmetric_eigen().eigenvalues.min().max(0.0).sqrt()
}

/// Smallest root of `det(G - x I)` by bisection on `[0, tr G]`.
fn cubic_sigma3(points: &[Vec3<f64>]) -> f64 {
    let g = gram(points);
    let c2 = g.trace();
    let c1 = g[(0, 0)] * g[(1, 1)] + g[(0, 0)] * g[(2, 2)] + g[(1, 1)] * g[(2, 2)]
        - g[(0, 1)].powi(2)
        - g[(0, 2)].powi(2)
        - g[(1, 2)].powi(2);
    let c0 = g.determinant();
    // p(x) = x^3 - c2 x^2 + c1 x - c0 with p(0) = -det <= 0; bracket the
    // first sign change on a scan, then bisect.
    let p = |x: f64| ((x - c2) * x + c1) * x - c0;
    let steps = 4096;
    let mut lo = 0.0;
    let mut hi = c2;
    for i in 1..=steps {
        let x = c2 * i as f64 / steps as f64;
        if p(x) >= 0.0 {
            hi = x;
            lo = c2 * (i - 1) as f64 / steps as f64;
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).max(0.0).sqrt()
}

fn random_patch(rng: &mut ChaCha8Rng) -> Vec<Vec3<f64>> {
    let n = rng.random_range(4..65);
    let noise = rng.random_range(0.01..0.5);
    let tilt = v(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 1.0).normalized();
    let offset = v(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-1.0..1.0));
    (0..n)
        .map(|_| {
            let (a, b) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let flat = v(a, b, -(tilt.x() * a + tilt.y() * b) / tilt.z());
            flat + tilt * rng.random_range(-noise..noise) + offset
        })
        .collect()
}

#[test]
fn gram_oracles_on_the_example() {
    let pts = [v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0), v(1.0, 1.0, 0.1)];
    let fit = fit_points(&pts).unwrap();
    assert!((fit.sigma3 - eigen_sigma3(&pts)).abs() < 1e-12);
    assert!((fit.sigma3 - cubic_sigma3(&pts)).abs() < 1e-9);
    assert!(fit.sigma3 > 0.0);
}

#[test]
fn random_patches_match_the_eigen_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let pts = random_patch(&mut rng);
        let fit = fit_points(&pts).unwrap();
        worst = worst.max((fit.sigma3 - eigen_sigma3(&pts)).abs());
        assert!((fit.normal.norm() - 1.0).abs() < 1e-12);
    }
    assert!(worst < 1e-9, "{worst:e}");
}

#[test]
fn coplanar_points_have_zero_sigma3() {
    let pts = [v(0.0, 0.0, 0.0), v(2.0, 0.0, 0.0), v(0.0, 3.0, 0.0), v(-1.0, 5.0, 0.0)];
    let fit = fit_points(&pts).unwrap();
    assert!(fit.sigma3 < 1e-9);
    assert_eq!(fit.normal, v(0.0, 0.0, 1.0));
    let mut lifted = pts;
    lifted[3] = v(-1.0, 5.0, 1e-6);
    assert!(fit_points(&lifted).unwrap().sigma3 > 1e-9);
}

#[test]
fn identical_points_are_indeterminate() {
    let fit = fit_points(&[v(1.0, 2.0, 3.0); 5]).unwrap();
    assert_eq!(fit.sigma3, 0.0);
    assert!(fit.indeterminate);
    assert!(fit_points(&[v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0)]).is_err());
}

#[test]
fn rigid_motions_leave_sigma3_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let pts = random_patch(&mut rng);
        let rot = Rotation3::from_scaled_axis(Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)));
        let shift = Vector3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let moved: Vec<Vec3<f64>> = pts
            .iter()
            .map(|p| {
                let q = rot * Vector3::new(p.x(), p.y(), p.z()) + shift;
                v(q.x, q.y, q.z)
            })
            .collect();
        let (a, b) = (fit_points(&pts).unwrap().sigma3, fit_points(&moved).unwrap().sigma3);
        assert!((a - b).abs() < 1e-10, "{a} {b}");
        let mut shuffled = pts.clone();
        shuffled.reverse();
        assert!((fit_points(&shuffled).unwrap().sigma3 - a).abs() < 1e-12);
    }
}

#[test]
fn lifting_one_point_grows_the_loss() {
    let mut pts: Vec<Vec3<f64>> = (0..25).map(|i| v((i % 5) as f64, (i / 5) as f64, 0.0)).collect();
    let mut prev = 0.0;
    for eps in [1e-3, 1e-2, 1e-1] {
        pts[12] = v(2.0, 2.0, eps);
        let s = fit_points(&pts).unwrap().sigma3;
        assert!((s - eigen_sigma3(&pts)).abs() < 1e-9);
        assert!(s > prev);
        prev = s;
    }
}

fn ground_ray(o: Vec3<f64>, d: Vec3<f64>) -> Ray<f64> {
    Ray { origin: o, direction: d.normalized(), t_near: 0.1, t_far: 50.0, image: 0, row: 0, col: 0, mask: MaskBits { ground: true, ..Default::default() } }
}

#[test]
fn unprojection_matches_elementwise_oracle() {
    let axis = unproject_patch(
        &[ground_ray(v(0.0, 0.0, 0.0), v(0.0, 0.0, 1.0)), ground_ray(v(1.0, 0.0, 0.0), v(0.0, 0.0, 1.0)), ground_ray(v(0.0, 1.0, 0.0), v(0.0, 0.0, 1.0))],
        &[2.0, 2.0, 2.0],
    )
    .unwrap();
    assert_eq!(axis.points[0], v(0.0, 0.0, 2.0));
    assert!(fit_points(&axis.points).unwrap().sigma3 < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rays: Vec<Ray<f64>> = (0..20)
        .map(|_| ground_ray(v(rng.random(), rng.random(), 1.5), v(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), -1.0)))
        .collect();
    let depths: Vec<f64> = (0..20).map(|_| rng.random_range(0.5..4.0)).collect();
    let patch = unproject_patch(&rays, &depths).unwrap();
    for ((r, z), p) in rays.iter().zip(&depths).zip(&patch.points) {
        for a in 0..3 {
            assert!((p[a] - (r.origin[a] + z * r.direction[a])).abs() < 1e-15);
        }
    }

    let mut bad = rays.clone();
    bad[3].mask.ground = false;
    assert!(unproject_patch(&bad, &depths).is_err());
    assert!(unproject_patch(&rays[..2], &depths[..2]).is_err());
}

#[test]
fn depth_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let n = rng.random_range(4..30);
        let rays: Vec<Ray<f64>> = (0..n)
            .map(|_| ground_ray(v(0.0, 0.0, 1.5), v(rng.random_range(-1.0..1.0), rng.random_range(0.5..2.0), -1.0)))
            .collect();
        let depths: Vec<f64> = rays.iter().map(|r| -1.5 / r.direction.z() + rng.random_range(-0.2..0.2)).collect();
        let patch = unproject_patch(&rays, &depths).unwrap();
        let g = ground_loss(&patch).unwrap();
        if g.spectral_gap < 1e-6 {
            continue;
        }
        let h = 1e-6;
        for r in 0..n {
            let mut plus = depths.clone();
            let mut minus = depths.clone();
            plus[r] += h;
            minus[r] -= h;
            let fp = ground_loss(&unproject_patch(&rays, &plus).unwrap()).unwrap().value;
            let fm = ground_loss(&unproject_patch(&rays, &minus).unwrap()).unwrap().value;
            let numeric = (fp - fm) / (2.0 * h);
            let rel = (g.depth_grads[r] - numeric).abs() / g.depth_grads[r].abs().max(numeric.abs()).max(1e-6);
            assert!(rel < 1e-4, "ray {r}: {} vs {numeric}", g.depth_grads[r]);
        }
    }
}

#[test]
fn coplanar_patch_is_flat_under_in_plane_motion() {
    let rays: Vec<Ray<f64>> = (0..9).map(|i| ground_ray(v(0.0, 0.0, 1.0), v((i % 3) as f64 - 1.0, (i / 3) as f64 + 0.5, -1.0))).collect();
    let depths: Vec<f64> = rays.iter().map(|r| -1.0 / r.direction.z()).collect();
    let patch = unproject_patch(&rays, &depths).unwrap();
    assert!(ground_loss(&patch).unwrap().value < 1e-12);
    let mut moved = patch.points.clone();
    for (i, p) in moved.iter_mut().enumerate() {
        *p = *p + v(0.01 * i as f64, -0.02, 0.0);
    }
    assert!(fit_points(&moved).unwrap().sigma3 < 1e-9);
}

#[test]
fn three_points_are_always_coplanar() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let pts: Vec<Vec3<f64>> = (0..3).map(|_| v(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0))).collect();
        assert!(fit_points(&pts).unwrap().sigma3 < 1e-9);
        assert!(gram(&pts).symmetric_eigen().eigenvalues.min() < 1e-12);
    }
}

proptest! {
    #[test]
    fn sigma3_squared_is_the_smallest_gram_eigenvalue(seed in any::<u64>()) {
        let pts = random_patch(&mut ChaCha8Rng::seed_from_u64(seed));
        let fit = fit_points(&pts).unwrap();
        let lambda = gram(&pts).symmetric_eigen().eigenvalues.min();
        prop_assert!((fit.sigma3 * fit.sigma3 - lambda).abs() < 1e-9 * (1.0 + lambda.abs()));
        prop_assert!(fit.sigma3 >= 0.0);
        prop_assert!(fit.sigma2 >= fit.sigma3);
    }

    #[test]
    fn sigma3_vanishes_only_on_planes(seed in any::<u64>(), lift in prop_oneof![Just(0.0), 1e-3..1.0_f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts: Vec<Vec3<f64>> = (0..12).map(|_| v(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 0.7)).collect();
        pts[0] = v(pts[0].x(), pts[0].y(), 0.7 + lift);
        let s = fit_points(&pts).unwrap().sigma3;
        prop_assert_eq!(s < 1e-9, lift == 0.0);
    }
}
