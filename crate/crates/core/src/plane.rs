//! Least-squares plane fitting of rendered ground points and the
//! smallest-singular-value regularizer.
//!
//! The centered point matrix `A` (one row per point) is never decomposed
//! directly: its right singular vectors are the eigenvectors of the 3x3
//! Gram matrix `A^T A`, found in closed form, and the smallest singular
//! value is then re-evaluated as `|A n|` so that exactly coplanar inputs
//! give exactly zero instead of the square root of a rounding error.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::math::{Mat3, Vec3};
use crate::render::Ray;
use crate::{Error, Real, Result};

/// Singular values closer than this are treated as a repeated pair.
pub const MULTIPLICITY_TOLERANCE: f64 = 1e-9;

/// Eigen-decomposition of a symmetric 3x3 matrix, eigenvalues ascending.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymmetricEigen3 {
    pub values: [f64; 3],
    /// Unit eigenvector of the smallest eigenvalue.
    pub min_vector: Vec3<f64>,
    /// True when the smallest eigenvalue is (numerically) repeated and
    /// `min_vector` is one arbitrary member of its eigenspace.
    pub min_repeated: bool,
}

/// Closed-form (trigonometric) eigenvalues of a symmetric 3x3 matrix and
/// the eigenvector of the smallest one.
pub fn symmetric_eigen3(m: &Mat3<f64>) -> SymmetricEigen3 {
    let scale = m.0.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return SymmetricEigen3 { values: [0.0; 3], min_vector: Vec3::new(0.0, 0.0, 1.0), min_repeated: true };
    }
    let a = Mat3(m.0.map(|r| r.map(|v| v / scale)));
    let [[a00, a01, a02], [_, a11, a12], [_, _, a22]] = a.0;
    let off = a01 * a01 + a02 * a02 + a12 * a12;
    let q = (a00 + a11 + a22) / 3.0;
    let (b00, b11, b22) = (a00 - q, a11 - q, a22 - q);
    let p = libm::sqrt((b00 * b00 + b11 * b11 + b22 * b22 + 2.0 * off) / 6.0);
    let values = if p == 0.0 {
        [q; 3]
    } else {
        let b = Mat3([[b00 / p, a01 / p, a02 / p], [a01 / p, b11 / p, a12 / p], [a02 / p, a12 / p, b22 / p]]);
        let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
        let phi = libm::acos(r) / 3.0;
        let hi = q + 2.0 * p * libm::cos(phi);
        let lo = q + 2.0 * p * libm::cos(phi + 2.0 * PI / 3.0);
        let mid = 3.0 * q - hi - lo;
        let mut v = [lo, mid, hi];
        v.sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
        v
    };
    let (min_vector, min_repeated) = null_vector(&a, values[0]);
    SymmetricEigen3 { values: values.map(|v| v * scale), min_vector, min_repeated }
}

/// Unit vector spanning (approximately) the null space of `a - lambda I`.
fn null_vector(a: &Mat3<f64>, lambda: f64) -> (Vec3<f64>, bool) {
    let mut m = *a;
    for i in 0..3 {
        m.0[i][i] -= lambda;
    }
    let rows = [m.row(0), m.row(1), m.row(2)];
    let crosses = [rows[0].cross(&rows[1]), rows[0].cross(&rows[2]), rows[1].cross(&rows[2])];
    let (best, norm2) = crosses
        .iter()
        .map(|c| (*c, c.norm_squared()))
        .fold((Vec3::zero(), 0.0), |acc, c| if c.1 > acc.1 { c } else { acc });
    let row_scale = rows.iter().map(|r| r.norm_squared()).fold(0.0_f64, f64::max);
    // Rank <= 1: the eigenvalue is repeated; any null-space member will do.
    if norm2 <= 1e-24 * row_scale * row_scale || norm2 == 0.0 {
        let big = rows.iter().copied().fold(Vec3::zero(), |acc, r| if r.norm_squared() > acc.norm_squared() { r } else { acc });
        if big.norm_squared() == 0.0 {
            return (Vec3::new(0.0, 0.0, 1.0), true);
        }
        let axis = if big.x().abs() <= big.y().abs() && big.x().abs() <= big.z().abs() {
            Vec3::new(1.0, 0.0, 0.0)
        } else if big.y().abs() <= big.z().abs() {
            Vec3::new(0.0, 1.0, 0.0)
        } else {
            Vec3::new(0.0, 0.0, 1.0)
        };
        return (big.cross(&axis).normalized(), true);
    }
    (best * (1.0 / libm::sqrt(norm2)), false)
}

/// Flips `n` so that its last component with magnitude above `1e-12` is
/// positive.
pub fn canonical_normal(n: Vec3<f64>) -> Vec3<f64> {
    for a in (0..3).rev() {
        if n[a].abs() > 1e-12 {
            return if n[a] < 0.0 { -n } else { n };
        }
    }
    n
}

/// Ground rays of one pixel patch and their unprojected points.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanePatch {
    pub origins: Vec<Vec3<f64>>,
    pub directions: Vec<Vec3<f64>>,
    pub depths: Vec<f64>,
    pub points: Vec<Vec3<f64>>,
}

impl PlanePatch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `p_r = o_r + z_r d_r` for every ground ray of a patch.
pub fn unproject_patch<R: Real>(rays: &[Ray<R>], depths: &[R]) -> Result<PlanePatch> {
    if rays.len() != depths.len() {
        return Err(Error::LengthMismatch { expected: rays.len(), found: depths.len() });
    }
    if rays.len() < 3 {
        return Err(Error::TooFewPoints(rays.len()));
    }
    let mut patch = PlanePatch {
        origins: Vec::with_capacity(rays.len()),
        directions: Vec::with_capacity(rays.len()),
        depths: Vec::with_capacity(rays.len()),
        points: Vec::with_capacity(rays.len()),
    };
    for (i, (ray, z)) in rays.iter().zip(depths).enumerate() {
        if !ray.mask.ground {
            return Err(Error::NonGroundRay { index: i });
        }
        let z = z.as_f64();
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::InvalidRay("ground depths must be positive"));
        }
        let o: Vec3<f64> = ray.origin.cast();
        let d: Vec3<f64> = ray.direction.cast();
        patch.origins.push(o);
        patch.directions.push(d);
        patch.depths.push(z);
        patch.points.push(o + d * z);
    }
    Ok(patch)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneFit {
    pub barycenter: Vec3<f64>,
    /// Unit normal, sign-canonicalized.
    pub normal: Vec3<f64>,
    /// Smallest singular value of the centered point matrix.
    pub sigma3: f64,
    /// Second-smallest singular value.
    pub sigma2: f64,
    /// The normal is not unique (all points identical or collinear).
    pub indeterminate: bool,
}

impl PlaneFit {
    /// `sigma2 - sigma3` below [`MULTIPLICITY_TOLERANCE`].
    pub fn is_degenerate(&self) -> bool {
        self.sigma2 - self.sigma3 < MULTIPLICITY_TOLERANCE
    }
}

pub fn barycenter(points: &[Vec3<f64>]) -> Vec3<f64> {
    let mut c = Vec3::zero();
    for p in points {
        c += *p;
    }
    c * (1.0 / points.len() as f64)
}

/// Gram matrix `A^T A` of the centered points.
pub fn centered_gram(points: &[Vec3<f64>], center: &Vec3<f64>) -> Mat3<f64> {
    let mut g = Mat3::zero();
    for p in points {
        let d = *p - *center;
        for i in 0..3 {
            for j in i..3 {
                g.0[i][j] += d[i] * d[j];
            }
        }
    }
    for i in 0..3 {
        for j in 0..i {
            g.0[i][j] = g.0[j][i];
        }
    }
    g
}

pub fn fit_points(points: &[Vec3<f64>]) -> Result<PlaneFit> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints(points.len()));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("plane points"));
    }
    let c = barycenter(points);
    let eig = symmetric_eigen3(&centered_gram(points, &c));
    let n = eig.min_vector;
    let residual: f64 = points.iter().map(|p| (*p - c).dot(&n)).map(|r| r * r).sum();
    let sigma3 = libm::sqrt(residual);
    let sigma2 = libm::sqrt(eig.values[1].max(0.0)).max(sigma3);
    Ok(PlaneFit { barycenter: c, normal: canonical_normal(n), sigma3, sigma2, indeterminate: eig.min_repeated })
}

pub fn fit_plane(patch: &PlanePatch) -> Result<PlaneFit> {
    fit_points(&patch.points)
}

/// Value and depth gradient of the ground regularizer for one patch.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundLoss {
    pub value: f64,
    /// `d sigma3 / d z_r` for each ray of the patch.
    pub depth_grads: Vec<f64>,
    /// `sigma3` is (numerically) repeated; the gradient follows one
    /// arbitrary but fixed singular pair.
    pub degenerate: bool,
    /// `sigma2 - sigma3`.
    pub spectral_gap: f64,
}

/// `L = sigma3(A)`. With `u3 = A n / sigma3`, `d sigma3 / d A = u3 n^T`,
/// so `d sigma3 / d p_r = ((p_r - c) . n) n / sigma3`; the barycenter term
/// vanishes because the residuals sum to zero.
pub fn ground_loss(patch: &PlanePatch) -> Result<GroundLoss> {
    let fit = fit_plane(patch)?;
    let n = fit.normal;
    let c = fit.barycenter;
    let depth_grads = if fit.sigma3 > 0.0 {
        patch
            .points
            .iter()
            .zip(&patch.directions)
            .map(|(p, d)| (*p - c).dot(&n) * n.dot(d) / fit.sigma3)
            .collect()
    } else {
        alloc::vec![0.0; patch.len()]
    };
    Ok(GroundLoss { value: fit.sigma3, depth_grads, degenerate: fit.is_degenerate(), spectral_gap: fit.sigma2 - fit.sigma3 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::MaskBits;

    fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
        Vec3::new(x, y, z)
    }

    #[test]
    fn coplanar_square_on_z0() {
        let pts = [v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0), v(1.0, 1.0, 0.0)];
        let fit = fit_points(&pts).unwrap();
        assert!(fit.sigma3 < 1e-9);
        assert_eq!(fit.normal, v(0.0, 0.0, 1.0));
        assert!(!fit.indeterminate);
    }

    #[test]
    fn identical_points_are_indeterminate() {
        let pts = [v(1.0, 2.0, 3.0); 5];
        let fit = fit_points(&pts).unwrap();
        assert_eq!(fit.sigma3, 0.0);
        assert!(fit.indeterminate);
        assert!(fit_points(&pts[..2]).is_err());
    }

    #[test]
    fn eigen_of_diagonal() {
        let e = symmetric_eigen3(&Mat3([[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]]));
        assert!((e.values[0] - 1.0).abs() < 1e-14 && (e.values[2] - 3.0).abs() < 1e-14);
        assert!((e.min_vector.y().abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn axis_ray_unprojects() {
        let ray = Ray {
            origin: Vec3::<f64>::zero(),
            direction: v(0.0, 0.0, 1.0),
            t_near: 0.1,
            t_far: 5.0,
            image: 0,
            row: 0,
            col: 0,
            mask: MaskBits { ground: true, ..Default::default() },
        };
        let patch = unproject_patch(&[ray, ray, ray], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(patch.points[0], v(0.0, 0.0, 2.0));
        let mut bad = ray;
        bad.mask.ground = false;
        assert_eq!(unproject_patch(&[ray, bad, ray], &[1.0; 3]), Err(Error::NonGroundRay { index: 1 }));
        assert_eq!(unproject_patch(&[ray, ray], &[1.0; 2]), Err(Error::TooFewPoints(2)));
    }

    #[test]
    fn canonical_sign() {
        assert_eq!(canonical_normal(v(0.3, 0.0, -0.9)), v(-0.3, 0.0, 0.9));
        assert_eq!(canonical_normal(v(-0.6, 0.8, 0.0)), v(-0.6, 0.8, 0.0));
        assert_eq!(canonical_normal(v(-1.0, 0.0, 0.0)), v(1.0, 0.0, 0.0));
    }
}
