//! Sinusoidal encodings: integrated positional embedding for sample
//! positions, plain frequency encoding for view directions.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::Vec3;
use crate::{Error, Real, Result};

pub fn ipe_dim(levels: usize) -> usize {
    6 * levels
}

/// Integrated positional embedding of an isotropic Gaussian.
///
/// Layout per level `l`: `[sin x, sin y, sin z, cos x, cos y, cos z]` of
/// `2^l * mean`, each scaled by `exp(-0.5 * variance * 4^l)`.
pub fn ipe_encode<R: Real>(mean: &Vec3<R>, variance: R, levels: usize) -> Result<Vec<R>> {
    let mut out = vec![R::zero(); ipe_dim(levels)];
    ipe_encode_into(mean, variance, levels, &mut out)?;
    Ok(out)
}

pub fn ipe_encode_into<R: Real>(mean: &Vec3<R>, variance: R, levels: usize, out: &mut [R]) -> Result<()> {
    if !(variance >= R::zero()) {
        return Err(Error::NegativeVariance);
    }
    if !mean.is_finite() {
        return Err(Error::NonFinite("positional encoding input"));
    }
    let mut freq = R::one();
    for l in 0..levels {
        let att = (-R::half() * variance * freq * freq).exp();
        let o = &mut out[6 * l..6 * l + 6];
        for a in 0..3 {
            let (s, c) = (mean[a] * freq).sin_cos();
            o[a] = s * att;
            o[3 + a] = c * att;
        }
        freq = freq * R::two();
    }
    Ok(())
}

pub fn direction_dim(levels: usize) -> usize {
    3 + 6 * levels
}

/// `[d, sin(2^l d), cos(2^l d)]` for `l = 0..levels`.
pub fn direction_encode_into<R: Real>(d: &Vec3<R>, levels: usize, out: &mut [R]) {
    out[..3].copy_from_slice(&d.0);
    let mut freq = R::one();
    for l in 0..levels {
        let o = &mut out[3 + 6 * l..3 + 6 * l + 6];
        for a in 0..3 {
            let (s, c) = (d[a] * freq).sin_cos();
            o[a] = s;
            o[3 + a] = c;
        }
        freq = freq * R::two();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_gives_unit_cosines() {
        let e = ipe_encode(&Vec3::<f64>::zero(), 0.0, 3).unwrap();
        for l in 0..3 {
            assert_eq!(&e[6 * l..6 * l + 3], &[0.0; 3]);
            assert_eq!(&e[6 * l + 3..6 * l + 6], &[1.0; 3]);
        }
    }

    #[test]
    fn huge_variance_vanishes() {
        let e = ipe_encode::<f64>(&Vec3::new(0.3, -0.2, 0.9), 1e6, 4).unwrap();
        assert!(e.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn negative_variance_rejected() {
        assert_eq!(ipe_encode(&Vec3::<f64>::zero(), -1e-3, 2), Err(Error::NegativeVariance));
    }

    #[test]
    fn direction_encoding_layout() {
        let d = Vec3::new(0.0_f64, 0.6, 0.8);
        let mut out = [0.0; 15];
        direction_encode_into(&d, 2, &mut out);
        assert_eq!(&out[..3], &[0.0, 0.6, 0.8]);
        assert!((out[3 + 6 + 1] - (1.2_f64).sin()).abs() < 1e-15);
        assert!((out[3 + 6 + 5] - (1.6_f64).cos()).abs() < 1e-15);
    }
}
