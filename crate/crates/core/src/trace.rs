//! Per-ray forward and reverse passes through field, sky and compositing,
//! and whole-image rendering.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::Camera;
use crate::encoding::direction_encode_into;
use crate::field::{AffineColorMap, BackwardScratch, FieldModel, FieldParams, SampleTape, SkyTape};
use crate::image::{Image, ScalarMap};
use crate::math::{Aabb, Vec3};
use crate::render::{
    composite_backward, composite_weighted, sample_ray_into, weights_into, CompositeGrads, MaskBits, Ray, RayUpstream,
    RenderOutput, SampleSet,
};
use crate::{Real, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceOptions {
    pub samples: usize,
    pub stratified: bool,
    /// Stop marching once transmittance drops below this; 0 never stops.
    pub cutoff: f64,
}

/// Buffers reused across rays; one per worker.
#[derive(Clone, Debug)]
pub struct RayWorkspace<R> {
    pub samples: SampleSet<R>,
    dir_enc: Vec<R>,
    tapes: Vec<SampleTape<R>>,
    sky_tape: SkyTape<R>,
    density: Vec<R>,
    colors: Vec<[R; 3]>,
    transmittance: Vec<R>,
    /// Samples actually evaluated for the last ray.
    pub used: usize,
    pub map: AffineColorMap<R>,
    pub sky: [R; 3],
    pub out: RenderOutput<R>,
    scratch: BackwardScratch<R>,
    cgrads: CompositeGrads<R>,
}

impl<R: Real> RayWorkspace<R> {
    pub fn new(model: &FieldModel) -> Self {
        RayWorkspace {
            samples: SampleSet::default(),
            dir_enc: vec![R::zero(); model.direction_dim()],
            tapes: Vec::new(),
            sky_tape: model.new_sky_tape(),
            density: Vec::new(),
            colors: Vec::new(),
            transmittance: Vec::new(),
            used: 0,
            map: AffineColorMap::identity(),
            sky: [R::zero(); 3],
            out: RenderOutput { color: [R::zero(); 3], depth: R::zero(), opacity: R::zero(), weights: Vec::new() },
            scratch: model.new_backward_scratch(),
            cgrads: CompositeGrads::default(),
        }
    }
}

/// Renders one ray, leaving everything the reverse pass needs in `ws`.
pub fn trace_ray<R: Real, G: Rng + ?Sized>(
    model: &FieldModel,
    params: &FieldParams<R>,
    ray: &Ray<R>,
    map: &AffineColorMap<R>,
    opts: &TraceOptions,
    rng: &mut G,
    ws: &mut RayWorkspace<R>,
) -> Result<()> {
    sample_ray_into(ray, opts.samples, rng, opts.stratified, &mut ws.samples)?;
    direction_encode_into(&ray.direction, model.config.direction_levels, &mut ws.dir_enc);
    let k = opts.samples;
    while ws.tapes.len() < k {
        ws.tapes.push(model.new_sample_tape());
    }
    ws.density.resize(k, R::zero());
    ws.colors.resize(k, [R::zero(); 3]);
    ws.transmittance.resize(k, R::zero());
    ws.out.weights.resize(k, R::zero());
    let mut optical = 0.0;
    let mut used = k;
    for i in 0..k {
        let x = ray.at(ws.samples.t[i]);
        let s = model.forward_sample(params, &x, &ws.dir_enc, ws.samples.variance[i], &mut ws.tapes[i])?;
        ws.density[i] = s.density;
        ws.colors[i] = s.color;
        optical += (s.density * ws.samples.delta[i]).as_f64();
        if opts.cutoff > 0.0 && libm::exp(-optical) < opts.cutoff {
            used = i + 1;
            break;
        }
    }
    ws.used = used;
    let alpha = weights_into(&ws.density[..used], &ws.samples.delta[..used], &mut ws.out.weights[..used], &mut ws.transmittance[..used])?;
    ws.out.weights.truncate(used);
    ws.sky = model.forward_sky(params, &ray.direction, &mut ws.sky_tape);
    ws.map = *map;
    let out = composite_weighted(&ws.samples.t[..used], &ws.out.weights, alpha, &ws.colors[..used], &ws.sky, map, ray.t_far);
    ws.out.color = out.color;
    ws.out.depth = out.depth;
    ws.out.opacity = out.opacity;
    Ok(())
}

/// Reverse pass of the last [`trace_ray`] call. Appearance gradients go to
/// `image`'s latent and the decoder when `image` is given.
pub fn backprop_ray<R: Real>(
    model: &FieldModel,
    params: &FieldParams<R>,
    ws: &mut RayWorkspace<R>,
    up: &RayUpstream<'_, R>,
    image: Option<usize>,
    grads: &mut FieldParams<R>,
) {
    let used = ws.used;
    composite_backward(
        &ws.samples.t[..used],
        &ws.samples.delta[..used],
        &ws.out.weights,
        &ws.transmittance[..used],
        &ws.density[..used],
        &ws.colors[..used],
        &ws.sky,
        &ws.map,
        &ws.out,
        up,
        &mut ws.cgrads,
    );
    let zero = R::zero();
    for i in 0..used {
        let gs = ws.cgrads.density[i];
        let gc = ws.cgrads.color[i];
        if gs == zero && gc.iter().all(|v| *v == zero) {
            continue;
        }
        model.backward_sample(params, &ws.tapes[i], gs, &gc, grads, &mut ws.scratch);
    }
    if ws.cgrads.sky.iter().any(|v| *v != zero) {
        model.backward_sky(params, &ws.sky_tape, &ws.cgrads.sky, grads, &mut ws.scratch);
    }
    if let Some(i) = image {
        let (gm, gb) = (ws.cgrads.matrix, ws.cgrads.shift);
        model.backward_appearance(params, i, &gm, &gb, grads);
    }
}

/// Deterministic per-ray stream: SplitMix64 finalizer over the inputs.
pub fn ray_seed(seed: u64, iteration: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(iteration.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One rendered pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelOutput {
    /// Composited color before clamping.
    pub color: [f64; 3],
    /// Expected ray distance; 0 when the ray misses the scene box.
    pub depth: f64,
    pub opacity: f64,
}

/// Renders pixel `(row, col)`; rays missing the box show the sky.
#[allow(clippy::too_many_arguments)]
pub fn render_pixel<R: Real>(
    model: &FieldModel,
    params: &FieldParams<R>,
    camera: &Camera,
    map: &AffineColorMap<R>,
    opts: &TraceOptions,
    near: f64,
    row: usize,
    col: usize,
    seed: u64,
    ws: &mut RayWorkspace<R>,
) -> Result<PixelOutput> {
    let scene_box: &Aabb<f64> = &model.config.scene_box;
    match camera.pixel_ray::<R>(row, col, scene_box, near, 0, MaskBits::default()) {
        Some(ray) => {
            let mut rng = ChaCha8Rng::seed_from_u64(ray_seed(seed, 0, (row * camera.width + col) as u64));
            trace_ray(model, params, &ray, map, opts, &mut rng, ws)?;
            Ok(PixelOutput {
                color: ws.out.color.map(|v| v.as_f64()),
                depth: ws.out.depth.as_f64(),
                opacity: ws.out.opacity.as_f64(),
            })
        }
        None => {
            let d: Vec3<R> = camera.pixel_direction(row as f64, col as f64).cast();
            let mut tape = model.new_sky_tape();
            let sky = model.forward_sky(params, &d, &mut tape);
            Ok(PixelOutput { color: sky.map(|v| v.as_f64()), depth: 0.0, opacity: 0.0 })
        }
    }
}

/// A rendered view: clamped color, depth and opacity.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedImage {
    pub image: Image,
    pub depth: ScalarMap,
    pub opacity: ScalarMap,
}

impl RenderedImage {
    pub fn new(width: usize, height: usize) -> Self {
        RenderedImage { image: Image::new(width, height), depth: ScalarMap::new(width, height), opacity: ScalarMap::new(width, height) }
    }

    pub fn set(&mut self, row: usize, col: usize, px: &PixelOutput) {
        self.image.set_pixel(row, col, px.color.map(|v| v.clamp(0.0, 1.0) as f32));
        self.depth.set(row, col, px.depth as f32);
        self.opacity.set(row, col, px.opacity as f32);
    }
}

/// Renders every pixel of `camera` sequentially.
pub fn render_image<R: Real>(
    model: &FieldModel,
    params: &FieldParams<R>,
    camera: &Camera,
    map: &AffineColorMap<R>,
    opts: &TraceOptions,
    near: f64,
    seed: u64,
) -> Result<RenderedImage> {
    camera.validate()?;
    let mut out = RenderedImage::new(camera.width, camera.height);
    let mut ws = RayWorkspace::new(model);
    for row in 0..camera.height {
        for col in 0..camera.width {
            let px = render_pixel(model, params, camera, map, opts, near, row, col, seed, &mut ws)?;
            out.set(row, col, &px);
        }
    }
    Ok(out)
}
