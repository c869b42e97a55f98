//! In-memory scene datasets: cameras, images, region masks and optional
//! ground truth.

use alloc::string::String;
use alloc::vec::Vec;

use crate::camera::Camera;
use crate::field::AffineColorMap;
use crate::image::{Bitmap, Image, ScalarMap};
use crate::math::Aabb;
use crate::render::MaskBits;
use crate::{Error, Result};

/// Every `VALIDATION_STRIDE`-th frame (starting at 0) is held out.
pub const VALIDATION_STRIDE: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct MaskSet {
    pub transient: Bitmap,
    pub sky: Bitmap,
    pub ground: Bitmap,
}

impl MaskSet {
    pub fn empty(width: usize, height: usize) -> Self {
        MaskSet { transient: Bitmap::zeros(width, height), sky: Bitmap::zeros(width, height), ground: Bitmap::zeros(width, height) }
    }

    pub fn bits(&self, row: usize, col: usize) -> MaskBits {
        MaskBits { transient: self.transient.get(row, col), sky: self.sky.get(row, col), ground: self.ground.get(row, col) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub name: String,
    pub camera: Camera,
    pub image: Image,
    pub masks: MaskSet,
    /// Ray-distance depth; zero where no surface was hit.
    pub depth: Option<ScalarMap>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneDataset {
    pub frames: Vec<Frame>,
    pub scene_box: Aabb<f64>,
    /// Injected per-frame color transforms (synthetic scenes only).
    pub appearance_gt: Option<Vec<AffineColorMap<f64>>>,
}

impl SceneDataset {
    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::InvalidConfig("dataset has no images"));
        }
        if !self.scene_box.is_valid() {
            return Err(Error::InvalidConfig("scene box must have positive extent"));
        }
        for f in &self.frames {
            f.camera.validate()?;
            let (w, h) = (f.camera.width, f.camera.height);
            if f.image.width != w || f.image.height != h {
                return Err(Error::InvalidConfig("image size differs from its camera"));
            }
            for m in [&f.masks.transient, &f.masks.sky, &f.masks.ground] {
                if m.width != w || m.height != h {
                    return Err(Error::InvalidConfig("mask size differs from its image"));
                }
            }
            if let Some(d) = &f.depth {
                if d.width != w || d.height != h {
                    return Err(Error::InvalidConfig("depth map size differs from its image"));
                }
            }
        }
        if let Some(gt) = &self.appearance_gt {
            if gt.len() != self.frames.len() {
                return Err(Error::InvalidConfig("one appearance transform per image required"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn is_validation(index: usize) -> bool {
        index % VALIDATION_STRIDE == 0
    }

    pub fn training_indices(&self) -> Vec<usize> {
        let all: Vec<usize> = (0..self.frames.len()).collect();
        let train: Vec<usize> = all.iter().copied().filter(|i| !Self::is_validation(*i)).collect();
        // A single-frame dataset trains on its only frame.
        if train.is_empty() {
            all
        } else {
            train
        }
    }

    pub fn validation_indices(&self) -> Vec<usize> {
        if self.frames.len() < 2 {
            return Vec::new();
        }
        (0..self.frames.len()).filter(|i| Self::is_validation(*i)).collect()
    }
}
