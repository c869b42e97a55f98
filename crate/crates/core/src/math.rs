//! Small fixed-size vector and matrix types.

use core::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use crate::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3<R>(pub [R; 3]);

impl<R: Real> Vec3<R> {
    pub fn new(x: R, y: R, z: R) -> Self {
        Vec3([x, y, z])
    }

    pub fn zero() -> Self {
        Vec3([R::zero(); 3])
    }

    pub fn splat(v: R) -> Self {
        Vec3([v; 3])
    }

    pub fn x(&self) -> R {
        self.0[0]
    }

    pub fn y(&self) -> R {
        self.0[1]
    }

    pub fn z(&self) -> R {
        self.0[2]
    }

    pub fn dot(&self, o: &Self) -> R {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn cross(&self, o: &Self) -> Self {
        let [a0, a1, a2] = self.0;
        let [b0, b1, b2] = o.0;
        Vec3([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])
    }

    pub fn norm_squared(&self) -> R {
        self.dot(self)
    }

    pub fn norm(&self) -> R {
        self.norm_squared().sqrt()
    }

    pub fn normalized(&self) -> Self {
        *self * (R::one() / self.norm())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(R) -> R) -> Self {
        Vec3([f(self.0[0]), f(self.0[1]), f(self.0[2])])
    }

    pub fn cast<S: Real>(&self) -> Vec3<S> {
        Vec3(self.0.map(|v| S::of(v.as_f64())))
    }

    /// True when `|v|` is within `tol` of one.
    pub fn is_unit(&self, tol: f64) -> bool {
        let n2 = self.norm_squared().as_f64();
        (libm::sqrt(n2) - 1.0).abs() <= tol
    }
}

impl<R: Real> Add for Vec3<R> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<R: Real> AddAssign for Vec3<R> {
    fn add_assign(&mut self, o: Self) {
        for a in 0..3 {
            self.0[a] += o.0[a];
        }
    }
}

impl<R: Real> Sub for Vec3<R> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<R: Real> Mul<R> for Vec3<R> {
    type Output = Self;
    fn mul(self, s: R) -> Self {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl<R: Real> Neg for Vec3<R> {
    type Output = Self;
    fn neg(self) -> Self {
        Vec3([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl<R> Index<usize> for Vec3<R> {
    type Output = R;
    fn index(&self, i: usize) -> &R {
        &self.0[i]
    }
}

impl<R> IndexMut<usize> for Vec3<R> {
    fn index_mut(&mut self, i: usize) -> &mut R {
        &mut self.0[i]
    }
}

/// Row-major 3x3 matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Mat3<R>(pub [[R; 3]; 3]);

impl<R: Real> Mat3<R> {
    pub fn identity() -> Self {
        let (o, z) = (R::one(), R::zero());
        Mat3([[o, z, z], [z, o, z], [z, z, o]])
    }

    pub fn zero() -> Self {
        Mat3([[R::zero(); 3]; 3])
    }

    pub fn from_rows(r0: Vec3<R>, r1: Vec3<R>, r2: Vec3<R>) -> Self {
        Mat3([r0.0, r1.0, r2.0])
    }

    pub fn row(&self, i: usize) -> Vec3<R> {
        Vec3(self.0[i])
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn mul_vec(&self, v: &Vec3<R>) -> Vec3<R> {
        Vec3([self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v)])
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        let mut out = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        out
    }

    pub fn determinant(&self) -> R {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.determinant();
        if det == R::zero() || !det.is_finite() {
            return None;
        }
        let m = &self.0;
        let inv = R::one() / det;
        let cof = |a: usize, b: usize, c: usize, d: usize| m[a][b] * m[c][d] - m[a][d] * m[c][b];
        Some(Mat3([
            [cof(1, 1, 2, 2) * inv, -cof(0, 1, 2, 2) * inv, cof(0, 1, 1, 2) * inv],
            [-cof(1, 0, 2, 2) * inv, cof(0, 0, 2, 2) * inv, -cof(0, 0, 1, 2) * inv],
            [cof(1, 0, 2, 1) * inv, -cof(0, 0, 2, 1) * inv, cof(0, 0, 1, 1) * inv],
        ]))
    }

    pub fn frobenius(&self) -> R {
        self.0.iter().flatten().map(|v| *v * *v).sum::<R>().sqrt()
    }

    pub fn sub(&self, o: &Self) -> Self {
        let mut out = *self;
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] -= o.0[i][j];
            }
        }
        out
    }

    pub fn cast<S: Real>(&self) -> Mat3<S> {
        Mat3(self.0.map(|r| r.map(|v| S::of(v.as_f64()))))
    }
}

/// Unit quaternion `(w, x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quat<R> {
    pub w: R,
    pub x: R,
    pub y: R,
    pub z: R,
}

impl<R: Real> Quat<R> {
    pub fn new(w: R, x: R, y: R, z: R) -> Self {
        Quat { w, x, y, z }
    }

    pub fn identity() -> Self {
        Quat::new(R::one(), R::zero(), R::zero(), R::zero())
    }

    pub fn norm(&self) -> R {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = R::one() / self.norm();
        Quat::new(self.w * n, self.x * n, self.y * n, self.z * n)
    }

    pub fn to_matrix(&self) -> Mat3<R> {
        let Quat { w, x, y, z } = *self;
        let one = R::one();
        let two = R::two();
        Mat3([
            [one - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)],
            [two * (x * y + w * z), one - two * (x * x + z * z), two * (y * z - w * x)],
            [two * (x * z - w * y), two * (y * z + w * x), one - two * (x * x + y * y)],
        ])
    }

    /// Rotation matrix to quaternion (Shepperd's method), with `w >= 0`.
    pub fn from_matrix(m: &Mat3<R>) -> Self {
        let m = &m.0;
        let one = R::one();
        let quarter = R::of(0.25);
        let trace = m[0][0] + m[1][1] + m[2][2];
        let q = if trace > R::zero() {
            let s = (trace + one).sqrt() * R::two();
            Quat::new(quarter * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s)
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (one + m[0][0] - m[1][1] - m[2][2]).sqrt() * R::two();
            Quat::new((m[2][1] - m[1][2]) / s, quarter * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s)
        } else if m[1][1] > m[2][2] {
            let s = (one + m[1][1] - m[0][0] - m[2][2]).sqrt() * R::two();
            Quat::new((m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, quarter * s, (m[1][2] + m[2][1]) / s)
        } else {
            let s = (one + m[2][2] - m[0][0] - m[1][1]).sqrt() * R::two();
            Quat::new((m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, quarter * s)
        };
        let q = q.normalized();
        if q.w < R::zero() {
            Quat::new(-q.w, -q.x, -q.y, -q.z)
        } else {
            q
        }
    }
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb<R> {
    pub min: Vec3<R>,
    pub max: Vec3<R>,
}

impl<R: Real> Aabb<R> {
    pub fn new(min: Vec3<R>, max: Vec3<R>) -> Self {
        Aabb { min, max }
    }

    pub fn extent(&self) -> Vec3<R> {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3<R> {
        (self.min + self.max) * R::half()
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|a| self.min[a] < self.max[a]) && self.min.is_finite() && self.max.is_finite()
    }

    pub fn contains(&self, p: &Vec3<R>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    /// Slab intersection; returns the parametric `[t_enter, t_exit]` range.
    pub fn intersect(&self, origin: &Vec3<R>, dir: &Vec3<R>) -> Option<(R, R)> {
        let mut t0 = R::neg_infinity();
        let mut t1 = R::infinity();
        for a in 0..3 {
            if dir[a] == R::zero() {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let inv = R::one() / dir[a];
            let mut ta = (self.min[a] - origin[a]) * inv;
            let mut tb = (self.max[a] - origin[a]) * inv;
            if ta > tb {
                core::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
        }
        (t0 <= t1).then_some((t0, t1))
    }

    pub fn cast<S: Real>(&self) -> Aabb<S> {
        Aabb::new(self.min.cast(), self.max.cast())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quaternion_round_trip() {
        let q = Quat::new(core::f64::consts::FRAC_1_SQRT_2, 0.0, core::f64::consts::FRAC_1_SQRT_2, 0.0).normalized();
        let back = Quat::from_matrix(&q.to_matrix());
        assert!((back.w - q.w).abs() < 1e-12 && (back.y - q.y).abs() < 1e-12);
        let r = Quat::new(0.3_f64, -0.5, 0.1, 0.8).normalized();
        let back = Quat::from_matrix(&r.to_matrix());
        for (a, b) in [(back.w, r.w), (back.x, r.x), (back.y, r.y), (back.z, r.z)] {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let m = Mat3([[1.2_f64, 0.1, -0.3], [0.0, 0.9, 0.2], [0.05, -0.1, 1.1]]);
        let p = m.mul_mat(&m.inverse().unwrap());
        assert!(p.sub(&Mat3::identity()).frobenius() < 1e-12);
    }

    #[test]
    fn slab_hits_box_from_inside() {
        let b = Aabb::new(Vec3::splat(-1.0_f64), Vec3::splat(1.0));
        let (t0, t1) = b.intersect(&Vec3::zero(), &Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!((t0, t1), (-1.0, 1.0));
        assert!(b.intersect(&Vec3::new(0.0, 5.0, 0.0), &Vec3::new(1.0, 0.0, 0.0)).is_none());
    }
}
