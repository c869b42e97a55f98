//! Held-out evaluation: probe-fitted appearance, rendering, per-region
//! PSNR, ground depth error and sky opacity.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use streetfield_core::batch::pixel_ray;
use streetfield_core::camera::Camera;
use streetfield_core::config::TrainConfig;
use streetfield_core::field::{AffineColorMap, FieldModel, FieldParams};
use streetfield_core::math::Mat3;
use streetfield_core::metrics::psnr_from_mse;
use streetfield_core::objective::{fit_probe_latent, probe_rays};
use streetfield_core::scene::SceneDataset;
use streetfield_core::trace::{ray_seed, render_pixel, PixelOutput, RayWorkspace, RenderedImage, TraceOptions};

use crate::error::AppResult;
use crate::train::build_pool;

/// Opacity above which a sky ray counts as carrying foreground density.
pub const SKY_OPACITY_THRESHOLD: f64 = 0.1;

/// Pooled squared error over a pixel set.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorSum {
    pub sum: f64,
    /// Number of channel values summed.
    pub count: usize,
}

impl ErrorSum {
    pub fn add(&mut self, o: &ErrorSum) {
        self.sum += o.sum;
        self.count += o.count;
    }

    pub fn mse(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.sum / self.count as f64
        }
    }

    pub fn psnr(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            psnr_from_mse(self.mse())
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub frames: Vec<usize>,
    pub overall: ErrorSum,
    pub sky: ErrorSum,
    pub ground: ErrorSum,
    /// Pixels not marked transient.
    pub static_: ErrorSum,
    /// Squared depth error summed over ground pixels, and their count.
    pub ground_depth: ErrorSum,
    pub sky_rays: usize,
    pub sky_rays_opaque: usize,
}

impl EvalReport {
    pub fn depth_rmse(&self) -> f64 {
        self.ground_depth.mse().sqrt()
    }

    pub fn sky_opaque_fraction(&self) -> f64 {
        self.sky_rays_opaque as f64 / self.sky_rays.max(1) as f64
    }

    pub fn table(&self) -> String {
        let mut s = String::from("region   psnr_db   pixels\n");
        for (name, e) in [("overall", &self.overall), ("sky", &self.sky), ("ground", &self.ground), ("static", &self.static_)] {
            s.push_str(&format!("{name:8} {:8.3} {:8}\n", e.psnr(), e.count / 3));
        }
        s.push_str(&format!("ground depth RMSE {:.4}\n", self.depth_rmse()));
        s.push_str(&format!("sky rays with opacity > {SKY_OPACITY_THRESHOLD}: {:.4}\n", self.sky_opaque_fraction()));
        s
    }
}

/// Renders a full view, parallel over rows.
#[allow(clippy::too_many_arguments)]
pub fn render_view(
    model: &FieldModel,
    params: &FieldParams<f32>,
    camera: &Camera,
    map: &AffineColorMap<f32>,
    opts: &TraceOptions,
    near: f64,
    seed: u64,
    pool: &rayon::ThreadPool,
) -> AppResult<RenderedImage> {
    camera.validate()?;
    let rows: Vec<AppResult<Vec<PixelOutput>>> = pool.install(|| {
        (0..camera.height)
            .into_par_iter()
            .map_init(
                || RayWorkspace::new(model),
                |ws, row| {
                    (0..camera.width)
                        .map(|col| Ok(render_pixel(model, params, camera, map, opts, near, row, col, seed, ws)?))
                        .collect()
                },
            )
            .collect()
    });
    let mut out = RenderedImage::new(camera.width, camera.height);
    for (row, px) in rows.into_iter().enumerate() {
        for (col, p) in px?.iter().enumerate() {
            out.set(row, col, p);
        }
    }
    Ok(out)
}

/// Fits frame `image`'s latent on up to `count` random non-transient pixels,
/// leaving every other parameter untouched.
pub fn fit_frame_latent(
    ds: &SceneDataset,
    model: &FieldModel,
    params: &mut FieldParams<f32>,
    cfg: &TrainConfig,
    image: usize,
) -> AppResult<f64> {
    let f = &ds.frames[image];
    let (w, h) = (f.camera.width, f.camera.height);
    let candidates: Vec<usize> = (0..w * h).filter(|i| !f.masks.transient.get(i / w, i % w)).collect();
    if candidates.is_empty() || cfg.probe_pixels == 0 {
        return Ok(f64::NAN);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ray_seed(cfg.seed, image as u64, 0x5EED));
    let take = cfg.probe_pixels.min(candidates.len());
    let (mut rays, mut targets) = (Vec::new(), Vec::new());
    for k in sample(&mut rng, candidates.len(), take) {
        let p = candidates[k];
        if let Some((ray, c)) = pixel_ray::<f32>(ds, image, p / w, p % w, cfg.near) {
            rays.push(ray);
            targets.push(c);
        }
    }
    let opts = TraceOptions { samples: cfg.samples, stratified: false, cutoff: cfg.transmittance_cutoff };
    let probe = probe_rays(model, params, &rays, &targets, &opts, cfg.seed)?;
    Ok(fit_probe_latent(model, params, image, &probe, cfg.probe_steps, cfg.probe_lr, &cfg.adam))
}

/// Renders each listed frame (midpoint sampling) and accumulates errors.
/// With appearance enabled each frame's latent is first fitted on its
/// probe pixels; the caller's parameters are not modified.
pub fn evaluate(
    ds: &SceneDataset,
    model: &FieldModel,
    params: &FieldParams<f32>,
    cfg: &TrainConfig,
    frames: &[usize],
    threads: usize,
) -> AppResult<EvalReport> {
    let pool = build_pool(threads)?;
    let mut work = params.clone();
    let mut rep = EvalReport { frames: frames.to_vec(), ..Default::default() };
    let opts = TraceOptions { samples: cfg.samples, stratified: false, cutoff: cfg.transmittance_cutoff };
    for &i in frames {
        let map = if cfg.appearance {
            fit_frame_latent(ds, model, &mut work, cfg, i)?;
            model.image_appearance(&work, Some(i))?
        } else {
            AffineColorMap::identity()
        };
        let f = &ds.frames[i];
        let img = render_view(model, &work, &f.camera, &map, &opts, cfg.near, cfg.seed, &pool)?;
        let (w, h) = (f.camera.width, f.camera.height);
        for row in 0..h {
            for col in 0..w {
                let a = img.image.pixel(row, col);
                let b = f.image.pixel(row, col);
                let e = ErrorSum { sum: (0..3).map(|c| ((a[c] - b[c]) as f64).powi(2)).sum(), count: 3 };
                let m = f.masks.bits(row, col);
                rep.overall.add(&e);
                if m.sky {
                    rep.sky.add(&e);
                }
                if m.ground {
                    rep.ground.add(&e);
                }
                if !m.transient {
                    rep.static_.add(&e);
                    if m.sky {
                        rep.sky_rays += 1;
                        rep.sky_rays_opaque += (img.opacity.get(row, col) as f64 > SKY_OPACITY_THRESHOLD) as usize;
                    }
                    if let (true, Some(d)) = (m.ground, &f.depth) {
                        let diff = (img.depth.get(row, col) - d.get(row, col)) as f64;
                        rep.ground_depth.add(&ErrorSum { sum: diff * diff, count: 1 });
                    }
                }
            }
        }
    }
    Ok(rep)
}

/// Mean Frobenius error of the estimated relative transforms
/// `T_i T_j^{-1}` against the injected ones, relative to the injected
/// norm, over all ordered pairs of the listed frames. This comparison is
/// blind to any transform common to all frames.
pub fn relative_transform_error(estimated: &[Mat3<f64>], injected: &[Mat3<f64>]) -> Option<f64> {
    let n = estimated.len().min(injected.len());
    let mut total = 0.0;
    let mut pairs = 0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let e = estimated[i].mul_mat(&estimated[j].inverse()?);
            let g = injected[i].mul_mat(&injected[j].inverse()?);
            total += e.sub(&g).frobenius() / g.frobenius();
            pairs += 1;
        }
    }
    (pairs > 0).then(|| total / pairs as f64)
}
