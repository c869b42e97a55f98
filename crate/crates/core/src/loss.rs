//! Training losses: transient-masked color reconstruction, sky decay and
//! their weighted combination with the ground regularizer.
//!
//! Every reduction is a mean over the rays of the batch (transient rays
//! count in the denominator but contribute nothing).

use alloc::vec::Vec;

use crate::{Error, Real, Result};

/// Value and per-ray gradient of a batch-mean loss.
#[derive(Clone, Debug, PartialEq)]
pub struct RayLoss<R> {
    pub value: R,
    pub grads: Vec<R>,
}

/// `mean_r (1 - M_t(r)) |C(r) - C_gt(r)|^2`.
///
/// Returns `d loss / d C(r)` per ray, flattened as 3 values per ray.
pub fn rgb_loss<R: Real>(pred: &[[R; 3]], gt: &[[R; 3]], transient: &[bool]) -> Result<RayLoss<R>> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch { expected: pred.len(), found: gt.len() });
    }
    if transient.len() != pred.len() {
        return Err(Error::LengthMismatch { expected: pred.len(), found: transient.len() });
    }
    let n = pred.len().max(1);
    let inv = R::one() / R::of(n as f64);
    let mut value = R::zero();
    let mut grads = alloc::vec![R::zero(); 3 * pred.len()];
    for (r, ((p, g), t)) in pred.iter().zip(gt).zip(transient).enumerate() {
        if *t {
            continue;
        }
        for a in 0..3 {
            let e = p[a] - g[a];
            value += e * e * inv;
            grads[3 * r + a] = R::two() * e * inv;
        }
    }
    Ok(RayLoss { value, grads })
}

/// `mean_r [M_s(r) sum_k w_k^2 - (1 - M_s(r)) sum_k w_k^2]`, skipping
/// transient rays. Gradients are per weight, one vector per ray.
pub fn sky_decay_loss<R: Real>(weights: &[Vec<R>], sky: &[bool], transient: &[bool]) -> Result<(R, Vec<Vec<R>>)> {
    if sky.len() != weights.len() {
        return Err(Error::LengthMismatch { expected: weights.len(), found: sky.len() });
    }
    if transient.len() != weights.len() {
        return Err(Error::LengthMismatch { expected: weights.len(), found: transient.len() });
    }
    let inv = R::one() / R::of(weights.len().max(1) as f64);
    let mut value = R::zero();
    let mut grads = Vec::with_capacity(weights.len());
    for (r, w) in weights.iter().enumerate() {
        if let Some(k) = w.iter().position(|v| !(*v >= R::zero() && *v <= R::one())) {
            return Err(Error::NegativeWeight { index: k });
        }
        if transient[r] {
            grads.push(alloc::vec![R::zero(); w.len()]);
            continue;
        }
        let sign = if sky[r] { R::one() } else { -R::one() };
        let (v, g) = sky_decay_ray(w, sign, inv);
        value += v;
        grads.push(g);
    }
    Ok((value, grads))
}

/// One ray's signed, batch-scaled `sum w^2` and its gradient `2 w`.
pub fn sky_decay_ray<R: Real>(w: &[R], sign: R, scale: R) -> (R, Vec<R>) {
    let s: R = w.iter().map(|v| *v * *v).sum();
    let f = sign * scale;
    (f * s, w.iter().map(|v| R::two() * f * *v).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub sky: f64,
    pub ground: f64,
}

impl LossWeights {
    pub const DEFAULT: LossWeights = LossWeights { sky: 1e-4, ground: 1e-4 };

    pub fn validate(&self) -> Result<()> {
        if !(self.sky >= 0.0) {
            return Err(Error::NegativeLossWeight("lambda_sky"));
        }
        if !(self.ground >= 0.0) {
            return Err(Error::NegativeLossWeight("lambda_ground"));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights::DEFAULT
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub l_rgb: f64,
    pub l_sky: f64,
    pub l_ground: f64,
    pub l_total: f64,
    pub lambda_sky: f64,
    pub lambda_ground: f64,
}

/// `l_total = l_rgb + lambda_sky l_sky + lambda_ground l_ground`.
pub fn total_loss(l_rgb: f64, l_sky: f64, l_ground: f64, weights: LossWeights) -> Result<LossBreakdown> {
    weights.validate()?;
    Ok(LossBreakdown {
        l_rgb,
        l_sky,
        l_ground,
        l_total: l_rgb + weights.sky * l_sky + weights.ground * l_ground,
        lambda_sky: weights.sky,
        lambda_ground: weights.ground,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_is_zero() {
        let c = [[0.1_f64, 0.5, 0.9], [0.3, 0.3, 0.3]];
        let l = rgb_loss(&c, &c, &[false, false]).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.grads.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn transient_rays_are_ignored() {
        let p = [[1.0_f64, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let g = [[0.0_f64, 0.0, 1.0], [1.0, 0.0, 0.0]];
        let l = rgb_loss(&p, &g, &[true, true]).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.grads.iter().all(|v| *v == 0.0));
        assert!(rgb_loss(&p, &g[..1], &[true]).is_err());
    }

    #[test]
    fn single_ray_squared_error() {
        let l = rgb_loss(&[[0.6_f64, 0.2, 0.2]], &[[0.5, 0.2, 0.2]], &[false]).unwrap();
        assert!((l.value - 0.01).abs() < 1e-15);
    }

    #[test]
    fn sky_decay_cases() {
        let (v, _) = sky_decay_loss(&[vec![0.0_f64; 4]], &[true], &[false]).unwrap();
        assert_eq!(v, 0.0);
        let (v, _) = sky_decay_loss(&[vec![1.0_f64, 0.0, 0.0]], &[false], &[false]).unwrap();
        assert_eq!(v, -1.0);
        let (v, g) = sky_decay_loss(&[vec![0.5_f64, 0.5], vec![1.0, 0.0]], &[true, false], &[false, false]).unwrap();
        assert!((v + 0.25).abs() < 1e-15);
        assert_eq!(g[0], vec![0.5, 0.5]);
        assert_eq!(g[1], vec![-1.0, 0.0]);
        let (v, _) = sky_decay_loss(&[vec![0.5_f64, 0.5]], &[true], &[true]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn weighted_total() {
        let b = total_loss(1.0, 0.5, 2.0, LossWeights::DEFAULT).unwrap();
        assert!((b.l_total - 1.00025).abs() < 1e-15);
        let b = total_loss(0.7, 3.0, 9.0, LossWeights { sky: 0.0, ground: 0.0 }).unwrap();
        assert_eq!(b.l_total, 0.7);
        assert!(total_loss(1.0, 1.0, 1.0, LossWeights { sky: -1.0, ground: 0.0 }).is_err());
        assert_eq!(LossWeights::default(), LossWeights { sky: 0.0001, ground: 0.0001 });
    }
}
