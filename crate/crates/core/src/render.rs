//! Ray sampling, discrete volume-rendering weights and compositing of the
//! foreground with the sky.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::field::{apply_appearance, AffineColorMap, FieldSample, UNIT_TOLERANCE};
use crate::math::{Mat3, Vec3};
use crate::{Error, Real, Result};

/// Accumulated opacity below which a ray reports `t_far` as its depth.
pub const DEPTH_OPACITY_FLOOR: f64 = 1e-8;

/// Region labels carried by a ray; independent bits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct MaskBits {
    pub transient: bool,
    pub sky: bool,
    pub ground: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray<R> {
    pub origin: Vec3<R>,
    pub direction: Vec3<R>,
    pub t_near: R,
    pub t_far: R,
    pub image: usize,
    pub row: u32,
    pub col: u32,
    pub mask: MaskBits,
}

impl<R: Real> Ray<R> {
    pub fn validate(&self) -> Result<()> {
        if !(self.origin.is_finite() && self.direction.is_finite() && self.t_near.is_finite() && self.t_far.is_finite()) {
            return Err(Error::NonFinite("ray"));
        }
        if !(self.t_near < self.t_far) {
            return Err(Error::InvalidRay("t_near must be below t_far"));
        }
        if !self.direction.is_unit(UNIT_TOLERANCE) {
            return Err(Error::NonUnitDirection);
        }
        Ok(())
    }

    pub fn at(&self, t: R) -> Vec3<R> {
        self.origin + self.direction * t
    }
}

/// Sample positions along a ray.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleSet<R> {
    pub t: Vec<R>,
    pub delta: Vec<R>,
    /// Isotropic variance of each sample, `(delta / 2)^2`.
    pub variance: Vec<R>,
}

impl<R: Real> SampleSet<R> {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// `k` uniform intervals over `[t_near, t_far]`; midpoints, or one uniform
/// jitter per interval when `stratified`.
pub fn sample_ray<R: Real, G: Rng + ?Sized>(ray: &Ray<R>, k: usize, rng: &mut G, stratified: bool) -> Result<SampleSet<R>> {
    let mut s = SampleSet::default();
    sample_ray_into(ray, k, rng, stratified, &mut s)?;
    Ok(s)
}

pub fn sample_ray_into<R: Real, G: Rng + ?Sized>(
    ray: &Ray<R>,
    k: usize,
    rng: &mut G,
    stratified: bool,
    out: &mut SampleSet<R>,
) -> Result<()> {
    if k == 0 {
        return Err(Error::ZeroSamples);
    }
    if !(ray.t_near < ray.t_far) {
        return Err(Error::InvalidRay("t_near must be below t_far"));
    }
    let width = (ray.t_far - ray.t_near) / R::of(k as f64);
    let var = width * width * R::of(0.25);
    out.t.clear();
    out.delta.clear();
    out.variance.clear();
    for i in 0..k {
        let lo = ray.t_near + width * R::of(i as f64);
        let frac = if stratified { R::of(rng.random::<f64>()) } else { R::half() };
        // Keep jittered samples strictly inside their own interval.
        let t = (lo + width * frac).min(ray.t_far).max(lo);
        out.t.push(t);
        out.delta.push(width);
        out.variance.push(var);
    }
    Ok(())
}

/// `w_k = T_k (1 - exp(-sigma_k delta_k))`, `T_k = exp(-sum_{j<k} sigma_j delta_j)`.
pub fn compute_weights<R: Real>(densities: &[R], widths: &[R]) -> Result<Vec<R>> {
    let mut w = vec![R::zero(); densities.len()];
    let mut t = vec![R::zero(); densities.len()];
    weights_into(densities, widths, &mut w, &mut t)?;
    Ok(w)
}

/// Fills weights and transmittances; returns accumulated opacity.
pub fn weights_into<R: Real>(densities: &[R], widths: &[R], weights: &mut [R], transmittance: &mut [R]) -> Result<R> {
    if densities.len() != widths.len() {
        return Err(Error::LengthMismatch { expected: densities.len(), found: widths.len() });
    }
    let mut optical = R::zero();
    for (k, (&sigma, &delta)) in densities.iter().zip(widths).enumerate() {
        if !(sigma >= R::zero()) {
            return Err(Error::NegativeDensity { index: k });
        }
        if !(delta > R::zero()) {
            return Err(Error::InvalidRay("interval widths must be positive"));
        }
        let tk = (-optical).exp();
        let a = sigma * delta;
        transmittance[k] = tk;
        weights[k] = tk * -(-a).exp_m1();
        optical += a;
    }
    Ok(-(-optical).exp_m1())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput<R> {
    /// Composited color before clamping.
    pub color: [R; 3],
    pub depth: R,
    pub opacity: R,
    pub weights: Vec<R>,
}

/// Foreground plus sky: `C = sum_k w_k T c_k + alpha b + (1 - alpha) c_sky`.
pub fn composite_pixel<R: Real>(
    samples: &SampleSet<R>,
    field: &[FieldSample<R>],
    sky: &[R; 3],
    map: &AffineColorMap<R>,
    t_far: R,
) -> Result<RenderOutput<R>> {
    if field.len() != samples.len() {
        return Err(Error::LengthMismatch { expected: samples.len(), found: field.len() });
    }
    let sig: Vec<R> = field.iter().map(|f| f.density).collect();
    let mut w = vec![R::zero(); sig.len()];
    let mut tr = vec![R::zero(); sig.len()];
    let alpha = weights_into(&sig, &samples.delta, &mut w, &mut tr)?;
    let colors: Vec<[R; 3]> = field.iter().map(|f| f.color).collect();
    Ok(composite_weighted(&samples.t, &w, alpha, &colors, sky, map, t_far))
}

/// Compositing given precomputed weights.
pub fn composite_weighted<R: Real>(
    t: &[R],
    weights: &[R],
    alpha: R,
    colors: &[[R; 3]],
    sky: &[R; 3],
    map: &AffineColorMap<R>,
    t_far: R,
) -> RenderOutput<R> {
    let mut fg = Vec3::zero();
    let mut wt = R::zero();
    for (k, w) in weights.iter().enumerate() {
        fg += Vec3(colors[k]) * *w;
        wt += *w * t[k];
    }
    let fg = map.matrix.mul_vec(&fg) + map.shift * alpha;
    let color = (fg + Vec3(*sky) * (R::one() - alpha)).0;
    let depth = if alpha.as_f64() > DEPTH_OPACITY_FLOOR { wt / alpha } else { t_far };
    RenderOutput { color, depth, opacity: alpha, weights: weights.to_vec() }
}

/// Upstream gradients arriving at one rendered ray.
#[derive(Clone, Debug)]
pub struct RayUpstream<'a, R> {
    pub color: [R; 3],
    pub depth: R,
    /// Extra `d loss / d w_k` (sky decay term); may be empty.
    pub weights: &'a [R],
}

/// Gradients of the compositing step with respect to its inputs.
#[derive(Clone, Debug, Default)]
pub struct CompositeGrads<R> {
    pub density: Vec<R>,
    pub color: Vec<[R; 3]>,
    pub matrix: Mat3<R>,
    pub shift: Vec3<R>,
    pub sky: [R; 3],
}

/// Reverse pass of [`composite_weighted`] through [`weights_into`].
#[allow(clippy::too_many_arguments)]
pub fn composite_backward<R: Real>(
    t: &[R],
    delta: &[R],
    weights: &[R],
    transmittance: &[R],
    densities: &[R],
    colors: &[[R; 3]],
    sky: &[R; 3],
    map: &AffineColorMap<R>,
    out: &RenderOutput<R>,
    up: &RayUpstream<'_, R>,
    grads: &mut CompositeGrads<R>,
) {
    let k = weights.len();
    let alpha = out.opacity;
    let gc = Vec3(up.color);
    // d C / d c_k = w_k T^T g_C
    let gtc = map.matrix.transpose().mul_vec(&gc);
    grads.color.clear();
    grads.density.clear();
    grads.density.resize(k, R::zero());
    let mut fg = Vec3::zero();
    for (kk, w) in weights.iter().enumerate() {
        grads.color.push((gtc * *w).0);
        fg += Vec3(colors[kk]) * *w;
    }
    let mut gm = Mat3::zero();
    for i in 0..3 {
        for j in 0..3 {
            gm.0[i][j] = gc[i] * fg[j];
        }
    }
    grads.matrix = gm;
    grads.shift = gc * alpha;
    grads.sky = (gc * (R::one() - alpha)).0;

    let depth_active = alpha.as_f64() > DEPTH_OPACITY_FLOOR;
    let shift_minus_sky = map.shift - Vec3(*sky);
    // d L / d w_k, all sources.
    let mut gw = vec![R::zero(); k];
    for kk in 0..k {
        let ck = map.matrix.mul_vec(&Vec3(colors[kk])) + shift_minus_sky;
        let mut g = gc.dot(&ck);
        if depth_active {
            g += up.depth * (t[kk] - out.depth) / alpha;
        }
        if let Some(e) = up.weights.get(kk) {
            g += *e;
        }
        gw[kk] = g;
    }
    // d w_j / d a_k = T_k e^{-a_k} (j = k), -w_j (j > k), 0 (j < k)
    let mut suffix = R::zero();
    for kk in (0..k).rev() {
        let a = densities[kk] * delta[kk];
        let local = transmittance[kk] * (-a).exp() * gw[kk] - suffix;
        grads.density[kk] = local * delta[kk];
        suffix += weights[kk] * gw[kk];
    }
}

/// Convenience: per-sample colors after the affine map (unclamped).
pub fn mapped_colors<R: Real>(field: &[FieldSample<R>], map: &AffineColorMap<R>) -> Vec<[R; 3]> {
    field.iter().map(|f| apply_appearance(&f.color, map)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_ray() -> Ray<f64> {
        Ray {
            origin: Vec3::zero(),
            direction: Vec3::new(0.0, 0.0, 1.0),
            t_near: 0.0,
            t_far: 1.0,
            image: 0,
            row: 0,
            col: 0,
            mask: MaskBits::default(),
        }
    }

    #[test]
    fn midpoint_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = sample_ray(&unit_ray(), 2, &mut rng, false).unwrap();
        assert_eq!(s.t, vec![0.25, 0.75]);
        assert_eq!(s.delta, vec![0.5, 0.5]);
        assert_eq!(s.variance, vec![0.0625, 0.0625]);
        assert_eq!(sample_ray(&unit_ray(), 0, &mut rng, false), Err(Error::ZeroSamples));
    }

    #[test]
    fn stratified_samples_stay_in_their_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let s = sample_ray(&unit_ray(), 16, &mut rng, true).unwrap();
            for (i, t) in s.t.iter().enumerate() {
                assert!(*t >= i as f64 / 16.0 && *t <= (i + 1) as f64 / 16.0);
            }
        }
        let a = sample_ray(&unit_ray(), 8, &mut ChaCha8Rng::seed_from_u64(9), true).unwrap();
        let b = sample_ray(&unit_ray(), 8, &mut ChaCha8Rng::seed_from_u64(9), true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn weights_of_empty_medium_are_zero() {
        let w = compute_weights(&[0.0_f64; 5], &[0.2; 5]).unwrap();
        assert!(w.iter().all(|v| *v == 0.0));
        assert_eq!(compute_weights(&[0.1_f64, -0.1], &[0.1, 0.1]), Err(Error::NegativeDensity { index: 1 }));
    }

    #[test]
    fn single_sample_half_opacity() {
        let w = compute_weights(&[core::f64::consts::LN_2], &[1.0]).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_foreground_is_pure_sky() {
        let s = SampleSet { t: vec![0.25, 0.75], delta: vec![0.5, 0.5], variance: vec![0.0; 2] };
        let f = [FieldSample { density: 0.0, color: [0.3, 0.3, 0.3] }; 2];
        let out = composite_pixel(&s, &f, &[0.1, 0.2, 0.9], &AffineColorMap::identity(), 1.0).unwrap();
        assert_eq!(out.color, [0.1, 0.2, 0.9]);
        assert_eq!(out.opacity, 0.0);
        assert_eq!(out.depth, 1.0);
        assert!(composite_pixel(&s, &f[..1], &[0.0; 3], &AffineColorMap::identity(), 1.0).is_err());
    }

    #[test]
    fn opaque_first_sample_dominates() {
        let s = SampleSet { t: vec![0.25, 0.75], delta: vec![0.5, 0.5], variance: vec![0.0; 2] };
        let f = [
            FieldSample { density: 200.0, color: [0.9, 0.1, 0.4] },
            FieldSample { density: 1.0, color: [0.0, 1.0, 0.0] },
        ];
        let out = composite_pixel::<f64>(&s, &f, &[0.0, 0.0, 1.0], &AffineColorMap::identity(), 1.0).unwrap();
        for (a, b) in out.color.iter().zip([0.9_f64, 0.1, 0.4]) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((out.depth - 0.25).abs() < 1e-12);
        assert!(1.0 - out.opacity < 1e-6);
    }
}
