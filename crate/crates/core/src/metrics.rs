//! Image-quality metrics.

use crate::image::{Bitmap, Image};
use crate::{Error, Result};

/// Peak signal-to-noise ratio for images in `[0, 1]`, in decibels.
///
/// Identical inputs yield `f64::INFINITY`. With a mask, only pixels whose
/// bit is set are compared.
pub fn psnr(a: &Image, b: &Image, mask: Option<&Bitmap>) -> Result<f64> {
    let mse = mse(a, b, mask)?;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * libm::log10(1.0 / mse)
    }
}

/// Mean squared error over all channels of the selected pixels.
pub fn mse(a: &Image, b: &Image, mask: Option<&Bitmap>) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::LengthMismatch { expected: a.width * a.height, found: b.width * b.height });
    }
    if let Some(m) = mask {
        if m.width != a.width || m.height != a.height {
            return Err(Error::LengthMismatch { expected: a.width * a.height, found: m.width * m.height });
        }
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in 0..a.width * a.height {
        if mask.is_some_and(|m| m.bits[p] == 0) {
            continue;
        }
        for c in 0..3 {
            let e = a.data[3 * p + c] as f64 - b.data[3 * p + c] as f64;
            sum += e * e;
        }
        n += 3;
    }
    if n == 0 {
        return Err(Error::EmptyPixelSet);
    }
    Ok(sum / n as f64)
}
