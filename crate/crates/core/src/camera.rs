//! Pinhole cameras in the structure-from-motion convention: the pose maps
//! world to camera (`x_cam = R x_world + t`), the camera looks down +z with
//! +x right and +y down, and pixel `(row, col)` has its center at
//! `(col + 0.5, row + 0.5)`.

use crate::math::{Aabb, Mat3, Quat, Vec3};
use crate::render::{MaskBits, Ray};
use crate::{Error, Real, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation.
    pub rotation: Quat<f64>,
    /// World-to-camera translation.
    pub translation: Vec3<f64>,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::DegenerateIntrinsics);
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::DegenerateIntrinsics);
        }
        if !(self.cx >= 0.0 && self.cx <= self.width as f64 && self.cy >= 0.0 && self.cy <= self.height as f64) {
            return Err(Error::InvalidConfig("principal point outside the image"));
        }
        if (self.rotation.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidConfig("camera quaternion is not unit-norm"));
        }
        if !self.translation.is_finite() {
            return Err(Error::NonFinite("camera translation"));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Mat3<f64> {
        self.rotation.to_matrix()
    }

    /// Camera center in world coordinates, `-R^T t`.
    pub fn center(&self) -> Vec3<f64> {
        -self.rotation_matrix().transpose().mul_vec(&self.translation)
    }

    /// Builds a camera at `eye` looking at `target`, with world +z up.
    pub fn look_at(eye: Vec3<f64>, target: Vec3<f64>, width: usize, height: usize, focal: f64) -> Camera {
        let forward = (target - eye).normalized();
        let up = Vec3::new(0.0, 0.0, 1.0);
        let right = forward.cross(&up).normalized();
        let down = forward.cross(&right);
        // Rows are the camera axes expressed in world coordinates.
        let r = Mat3::from_rows(right, down, forward);
        let rotation = Quat::from_matrix(&r);
        let translation = -rotation.to_matrix().mul_vec(&eye);
        Camera {
            width,
            height,
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            rotation,
            translation,
        }
    }

    /// World-space unit direction through the center of pixel `(row, col)`.
    pub fn pixel_direction(&self, row: f64, col: f64) -> Vec3<f64> {
        let dc = Vec3::new((col + 0.5 - self.cx) / self.fx, (row + 0.5 - self.cy) / self.fy, 1.0);
        self.rotation_matrix().transpose().mul_vec(&dc).normalized()
    }

    /// Projects a world point to continuous pixel coordinates `(u, v)`;
    /// the center of pixel `(row, col)` maps to `(col + 0.5, row + 0.5)`.
    pub fn project(&self, p: &Vec3<f64>) -> Option<(f64, f64)> {
        let pc = self.rotation_matrix().mul_vec(p) + self.translation;
        if pc.z() <= 0.0 {
            return None;
        }
        Some((self.fx * pc.x() / pc.z() + self.cx, self.fy * pc.y() / pc.z() + self.cy))
    }

    /// Ray through pixel `(row, col)` clipped to `scene_box`, starting no
    /// closer than `near`. `None` when the ray misses the box.
    pub fn pixel_ray<R: Real>(
        &self,
        row: usize,
        col: usize,
        scene_box: &Aabb<f64>,
        near: f64,
        image: usize,
        mask: MaskBits,
    ) -> Option<Ray<R>> {
        let origin = self.center();
        let dir = self.pixel_direction(row as f64, col as f64);
        let (t0, t1) = scene_box.intersect(&origin, &dir)?;
        let t_near = t0.max(near);
        if !(t_near < t1) {
            return None;
        }
        Some(Ray {
            origin: origin.cast(),
            direction: dir.cast(),
            t_near: R::of(t_near),
            t_far: R::of(t1),
            image,
            row: row as u32,
            col: col as u32,
            mask,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_points_forward() {
        let cam = Camera::look_at(Vec3::new(3.0, 0.0, 1.0), Vec3::new(0.0, 0.0, 1.0), 32, 24, 30.0);
        cam.validate().unwrap();
        let c = cam.center();
        assert!((c - Vec3::new(3.0, 0.0, 1.0)).norm() < 1e-12);
        // The principal ray points along -x.
        let d = cam.pixel_direction(11.5, 15.5);
        assert!((d - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
        // Image rows go down in world z.
        assert!(cam.pixel_direction(0.0, 15.5).z() > 0.0);
    }

    #[test]
    fn zero_focal_rejected() {
        let mut cam = Camera::look_at(Vec3::new(1.0, 0.0, 0.0), Vec3::zero(), 8, 8, 4.0);
        cam.fx = 0.0;
        assert_eq!(cam.validate(), Err(Error::DegenerateIntrinsics));
    }

    #[test]
    fn pixel_round_trip() {
        let cam = Camera::look_at(Vec3::new(2.0, 1.0, 1.5), Vec3::new(-1.0, 0.3, 0.2), 64, 48, 55.0);
        for (row, col) in [(0usize, 0usize), (10, 40), (47, 63), (23, 31)] {
            let d = cam.pixel_direction(row as f64, col as f64);
            let (u, v) = cam.project(&(cam.center() + d)).unwrap();
            assert!((u - (col as f64 + 0.5)).abs() < 1e-6);
            assert!((v - (row as f64 + 0.5)).abs() < 1e-6);
        }
    }
}
