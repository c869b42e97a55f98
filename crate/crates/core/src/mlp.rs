//! Dense layers over flat parameter slices.
//!
//! A layer owns no storage: it records where its row-major weight matrix
//! and bias live inside a parameter block, so a whole network is one
//! contiguous `[R]` that the optimizer and checkpoints treat uniformly.

use alloc::vec::Vec;

use rand::Rng;

use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub offset: usize,
}

impl Dense {
    pub fn param_count(&self) -> usize {
        self.outputs * (self.inputs + 1)
    }

    fn bias_offset(&self) -> usize {
        self.offset + self.outputs * self.inputs
    }

    pub fn weights<'a, R>(&self, params: &'a [R]) -> &'a [R] {
        &params[self.offset..self.bias_offset()]
    }

    pub fn bias<'a, R>(&self, params: &'a [R]) -> &'a [R] {
        &params[self.bias_offset()..self.bias_offset() + self.outputs]
    }

    pub fn bias_mut<'a, R>(&self, params: &'a mut [R]) -> &'a mut [R] {
        let bo = self.bias_offset();
        &mut params[bo..bo + self.outputs]
    }

    #[inline]
    pub fn forward<R: Real>(&self, params: &[R], x: &[R], y: &mut [R]) {
        let w = self.weights(params);
        let b = self.bias(params);
        for o in 0..self.outputs {
            y[o] = b[o] + dot(&w[o * self.inputs..(o + 1) * self.inputs], &x[..self.inputs]);
        }
    }

    /// Accumulates parameter gradients into `gparams` and, when given,
    /// input gradients into `gx`.
    #[inline]
    pub fn backward<R: Real>(&self, params: &[R], x: &[R], gy: &[R], gx: Option<&mut [R]>, gparams: &mut [R]) {
        let n = self.inputs;
        let bo = self.bias_offset();
        for o in 0..self.outputs {
            let g = gy[o];
            if g == R::zero() {
                continue;
            }
            gparams[bo + o] += g;
            axpy(g, &x[..n], &mut gparams[self.offset + o * n..self.offset + (o + 1) * n]);
        }
        if let Some(gx) = gx {
            let w = self.weights(params);
            for o in 0..self.outputs {
                let g = gy[o];
                if g != R::zero() {
                    axpy(g, &w[o * n..(o + 1) * n], &mut gx[..n]);
                }
            }
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init_glorot<R: Real, G: Rng + ?Sized>(&self, params: &mut [R], rng: &mut G) {
        let limit = libm::sqrt(6.0 / (self.inputs + self.outputs) as f64);
        let bo = self.bias_offset();
        for v in &mut params[self.offset..bo] {
            *v = R::of(rng.random_range(-limit..limit));
        }
        params[bo..bo + self.outputs].iter_mut().for_each(|v| *v = R::zero());
    }

    pub fn init_zero<R: Real>(&self, params: &mut [R]) {
        params[self.offset..self.offset + self.param_count()].iter_mut().for_each(|v| *v = R::zero());
    }
}

/// Lays out consecutive layers inside one parameter block.
pub fn stack(shapes: &[(usize, usize)]) -> (Vec<Dense>, usize) {
    let mut offset = 0;
    let layers = shapes
        .iter()
        .map(|&(inputs, outputs)| {
            let d = Dense { inputs, outputs, offset };
            offset += d.param_count();
            d
        })
        .collect();
    (layers, offset)
}

#[inline]
pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    let mut acc = [R::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += *x * *y;
    }
    s
}

#[inline]
pub fn axpy<R: Real>(alpha: R, x: &[R], y: &mut [R]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// Numerically stable softplus.
#[inline]
pub fn softplus<R: Real>(x: R) -> R {
    x.max(R::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid<R: Real>(x: R) -> R {
    if x >= R::zero() {
        R::one() / (R::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (R::one() + e)
    }
}

/// Softplus in place; `deriv` receives `sigmoid(x)`, the derivative.
#[inline]
pub fn softplus_with_deriv<R: Real>(v: &mut [R], deriv: &mut [R]) {
    for (x, d) in v.iter_mut().zip(deriv.iter_mut()) {
        let e = (-x.abs()).exp();
        let inv = R::one() / (R::one() + e);
        *d = if *x >= R::zero() { inv } else { e * inv };
        *x = x.max(R::zero()) + e.ln_1p();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..19).map(|i| i as f64 * 0.3 - 2.0).collect();
        let b: Vec<f64> = (0..19).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0_f64) - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus(800.0_f64), 800.0);
        assert!(softplus(-800.0_f64) >= 0.0);
        let mut v = [-3.0_f64, 0.0, 2.5];
        let mut d = [0.0; 3];
        softplus_with_deriv(&mut v, &mut d);
        for (x, dv) in [-3.0_f64, 0.0, 2.5].iter().zip(d) {
            assert!((dv - sigmoid(*x)).abs() < 1e-15);
        }
    }

    #[test]
    fn dense_backward_matches_definition() {
        let (layers, n) = stack(&[(3, 2)]);
        let l = layers[0];
        let params: Vec<f64> = (0..n).map(|i| 0.1 * i as f64 - 0.3).collect();
        let x = [0.5, -1.0, 2.0];
        let gy = [1.0, -2.0];
        let mut gp = vec![0.0; n];
        let mut gx = [0.0; 3];
        l.backward(&params, &x, &gy, Some(&mut gx), &mut gp);
        // dL/dW[o][i] = gy[o] x[i]; dL/db = gy; dL/dx = W^T gy
        assert_eq!(gp[0], 0.5);
        assert_eq!(gp[3], -1.0);
        assert_eq!(&gp[6..8], &gy);
        let w = l.weights(&params);
        for i in 0..3 {
            assert!((gx[i] - (w[i] * gy[0] + w[3 + i] * gy[1])).abs() < 1e-15);
        }
    }
}
