//! Training ray batches: uniformly drawn pixels plus ground patches.

use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;

use crate::render::Ray;
use crate::scene::{Frame, SceneDataset};
use crate::{Error, Real, Result};

/// Rays with their target colors. Rays of `patches[i]` form one ground
/// patch; they sit after the uniformly sampled rays.
#[derive(Clone, Debug, PartialEq)]
pub struct RayBatch<R> {
    pub rays: Vec<Ray<R>>,
    pub targets: Vec<[R; 3]>,
    pub patches: Vec<Range<usize>>,
}

impl<R: Real> RayBatch<R> {
    pub fn new() -> Self {
        RayBatch { rays: Vec::new(), targets: Vec::new(), patches: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    pub fn push(&mut self, ray: Ray<R>, target: [R; 3]) {
        self.rays.push(ray);
        self.targets.push(target);
    }
}

impl<R: Real> Default for RayBatch<R> {
    fn default() -> Self {
        Self::new()
    }
}

/// Ray and target color of one dataset pixel; `None` if it misses the box.
pub fn pixel_ray<R: Real>(ds: &SceneDataset, image: usize, row: usize, col: usize, near: f64) -> Option<(Ray<R>, [R; 3])> {
    let f: &Frame = &ds.frames[image];
    let ray = f.camera.pixel_ray(row, col, &ds.scene_box, near, image, f.masks.bits(row, col))?;
    Some((ray, f.image.pixel(row, col).map(|v| R::of(v as f64))))
}

/// Draws `count` pixels uniformly over all (image, pixel) pairs of the
/// listed frames. Pixels whose ray misses the scene box are redrawn.
pub fn sample_ray_batch<R: Real, G: Rng + ?Sized>(
    ds: &SceneDataset,
    frames: &[usize],
    count: usize,
    near: f64,
    rng: &mut G,
    out: &mut RayBatch<R>,
) -> Result<()> {
    if count == 0 {
        return Err(Error::InvalidConfig("batch size must be at least 1"));
    }
    let sizes: Vec<usize> = frames.iter().map(|i| ds.frames[*i].camera.width * ds.frames[*i].camera.height).collect();
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::EmptyPixelSet);
    }
    let mut drawn = 0;
    let mut misses = 0;
    while drawn < count {
        let (image, pixel) = locate(&sizes, rng.random_range(0..total));
        let image = frames[image];
        let w = ds.frames[image].camera.width;
        match pixel_ray(ds, image, pixel / w, pixel % w, near) {
            Some((ray, c)) => {
                out.push(ray, c);
                drawn += 1;
            }
            None => {
                misses += 1;
                if misses > 100 * count + 1000 {
                    return Err(Error::InvalidConfig("no camera ray intersects the scene box"));
                }
            }
        }
    }
    Ok(())
}

fn locate(sizes: &[usize], mut u: usize) -> (usize, usize) {
    for (i, s) in sizes.iter().enumerate() {
        if u < *s {
            return (i, u);
        }
        u -= s;
    }
    unreachable!("index below the total pixel count")
}

/// Patch acceptance rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchRule {
    pub size: usize,
    pub min_ground_fraction: f64,
    /// Draws allowed per requested patch before giving up on it.
    pub attempts: usize,
}

/// Appends up to `count` square ground patches to `out`. A patch is kept
/// when at least `min_ground_fraction` of its pixels are ground and none
/// is transient; only its ground pixels become rays.
pub fn sample_ground_patches<R: Real, G: Rng + ?Sized>(
    ds: &SceneDataset,
    frames: &[usize],
    count: usize,
    rule: &PatchRule,
    near: f64,
    rng: &mut G,
    out: &mut RayBatch<R>,
) -> usize {
    if frames.is_empty() || rule.size == 0 {
        return 0;
    }
    let mut found = 0;
    let mut tries = 0;
    while found < count && tries < count * rule.attempts {
        tries += 1;
        let image = frames[rng.random_range(0..frames.len())];
        let f = &ds.frames[image];
        let (w, h) = (f.camera.width, f.camera.height);
        if w < rule.size || h < rule.size {
            continue;
        }
        let r0 = rng.random_range(0..=h - rule.size);
        let c0 = rng.random_range(0..=w - rule.size);
        let mut ground = 0;
        let mut transient = false;
        for r in r0..r0 + rule.size {
            for c in c0..c0 + rule.size {
                ground += f.masks.ground.get(r, c) as usize;
                transient |= f.masks.transient.get(r, c);
            }
        }
        let need = rule.min_ground_fraction * (rule.size * rule.size) as f64;
        if transient || (ground as f64) < need || ground < 3 {
            continue;
        }
        let start = out.len();
        for r in r0..r0 + rule.size {
            for c in c0..c0 + rule.size {
                if !f.masks.ground.get(r, c) {
                    continue;
                }
                if let Some((ray, col)) = pixel_ray(ds, image, r, c, near) {
                    out.push(ray, col);
                }
            }
        }
        if out.len() - start >= 3 {
            out.patches.push(start..out.len());
            found += 1;
        } else {
            out.rays.truncate(start);
            out.targets.truncate(start);
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic_scene, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batch_rays_are_unit_and_labeled() {
        let ds = generate_synthetic_scene(&SynthConfig { width: 24, height: 24, frames: 4, ..Default::default() }, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = RayBatch::<f32>::new();
        sample_ray_batch(&ds, &[1, 2, 3], 300, 0.05, &mut rng, &mut b).unwrap();
        assert_eq!(b.len(), 300);
        for r in &b.rays {
            assert!(r.direction.is_unit(1e-6));
            assert!(r.image >= 1);
            r.validate().unwrap();
        }
        let rule = PatchRule { size: 6, min_ground_fraction: 0.75, attempts: 50 };
        let n = sample_ground_patches(&ds, &[1, 2, 3], 2, &rule, 0.05, &mut rng, &mut b);
        assert_eq!(n, b.patches.len());
        for p in &b.patches {
            assert!(p.len() >= 27);
            assert!(b.rays[p.clone()].iter().all(|r| r.mask.ground && !r.mask.transient));
        }
    }
}
