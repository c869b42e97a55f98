//! The batch training objective `l_rgb + lambda_sky l_sky + lambda_ground
//! l_ground` with its gradient, split into independent work units.
//!
//! A batch is cut into chunks of plain rays and one unit per ground patch.
//! Patch rays count toward the color and sky terms like any other ray. A
//! patch is evaluated twice: once forward to get the depths that feed the
//! plane fit, then forward and backward with the plane gradient attached.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::batch::RayBatch;
use crate::field::{BlockId, FieldModel, FieldParams};
use crate::optim::{adam_update_slice, AdamConfig};
use crate::plane::{ground_loss, unproject_patch};
use crate::render::{Ray, RayUpstream};
use crate::trace::{backprop_ray, ray_seed, trace_ray, RayWorkspace, TraceOptions};
use crate::{Real, Result};

/// Multipliers of the three loss terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TermWeights {
    pub rgb: f64,
    pub sky: f64,
    pub ground: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveOptions {
    pub trace: TraceOptions,
    pub terms: TermWeights,
    pub mask_transients: bool,
    /// Decode each ray's image latent; otherwise the identity map is used.
    pub appearance: bool,
    pub seed: u64,
    pub iteration: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WorkUnit {
    Rays(Range<usize>),
    Patch(usize),
}

/// Unweighted loss terms accumulated by one or more units; each already
/// divided by the batch ray count (or patch count).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Partial {
    pub l_rgb: f64,
    pub l_sky: f64,
    pub l_ground: f64,
    pub degenerate_patches: usize,
    /// Smallest `sigma2 - sigma3` over the patches seen.
    pub min_spectral_gap: f64,
}

impl Default for Partial {
    fn default() -> Self {
        Partial { l_rgb: 0.0, l_sky: 0.0, l_ground: 0.0, degenerate_patches: 0, min_spectral_gap: f64::INFINITY }
    }
}

impl Partial {
    pub fn add(&mut self, o: &Partial) {
        self.l_rgb += o.l_rgb;
        self.l_sky += o.l_sky;
        self.l_ground += o.l_ground;
        self.degenerate_patches += o.degenerate_patches;
        self.min_spectral_gap = self.min_spectral_gap.min(o.min_spectral_gap);
    }

    pub fn weighted(&self, t: &TermWeights) -> f64 {
        t.rgb * self.l_rgb + t.sky * self.l_sky + t.ground * self.l_ground
    }
}

#[derive(Clone, Debug)]
pub struct ObjectiveWorkspace<R> {
    pub ray: RayWorkspace<R>,
    extra: Vec<R>,
    depths: Vec<R>,
}

impl<R: Real> ObjectiveWorkspace<R> {
    pub fn new(model: &FieldModel) -> Self {
        ObjectiveWorkspace { ray: RayWorkspace::new(model), extra: Vec::new(), depths: Vec::new() }
    }
}

pub struct Objective<'a, R> {
    pub model: &'a FieldModel,
    pub params: &'a FieldParams<R>,
    pub batch: &'a RayBatch<R>,
    pub opts: ObjectiveOptions,
}

impl<'a, R: Real> Objective<'a, R> {
    pub fn new(model: &'a FieldModel, params: &'a FieldParams<R>, batch: &'a RayBatch<R>, opts: ObjectiveOptions) -> Self {
        Objective { model, params, batch, opts }
    }

    /// Fixed partition: plain rays in chunks of `chunk`, then the patches.
    pub fn units(&self, chunk: usize) -> Vec<WorkUnit> {
        let plain = self.batch.patches.first().map(|p| p.start).unwrap_or(self.batch.len());
        let chunk = chunk.max(1);
        let mut units: Vec<WorkUnit> = (0..plain).step_by(chunk).map(|s| WorkUnit::Rays(s..(s + chunk).min(plain))).collect();
        units.extend((0..self.batch.patches.len()).map(WorkUnit::Patch));
        units
    }

    pub fn run_unit(&self, unit: &WorkUnit, mut grads: Option<&mut FieldParams<R>>, ws: &mut ObjectiveWorkspace<R>) -> Result<Partial> {
        let mut acc = Partial::default();
        match unit {
            WorkUnit::Rays(range) => {
                for i in range.clone() {
                    acc.add(&self.ray_pass(i, R::zero(), grads.as_deref_mut(), ws)?);
                }
            }
            WorkUnit::Patch(p) => {
                let range = self.batch.patches[*p].clone();
                let count = self.batch.patches.len() as f64;
                ws.depths.clear();
                for i in range.clone() {
                    if grads.is_none() {
                        acc.add(&self.ray_pass(i, R::zero(), None, ws)?);
                    } else {
                        self.trace(i, ws)?;
                    }
                    ws.depths.push(ws.ray.out.depth);
                }
                let patch = unproject_patch(&self.batch.rays[range.clone()], &ws.depths)?;
                let gl = ground_loss(&patch)?;
                acc.l_ground = gl.value / count;
                acc.degenerate_patches = gl.degenerate as usize;
                acc.min_spectral_gap = acc.min_spectral_gap.min(gl.spectral_gap);
                if let Some(g) = grads {
                    let scale = self.opts.terms.ground / count;
                    for (j, i) in range.enumerate() {
                        let gz = R::of(scale * gl.depth_grads[j]);
                        acc.add(&self.ray_pass(i, gz, Some(g), ws)?);
                    }
                }
            }
        }
        Ok(acc)
    }

    /// All units in order, accumulating into one gradient buffer.
    pub fn evaluate(&self, mut grads: Option<&mut FieldParams<R>>) -> Result<Partial> {
        let mut ws = ObjectiveWorkspace::new(self.model);
        let mut total = Partial::default();
        for u in self.units(64) {
            total.add(&self.run_unit(&u, grads.as_deref_mut(), &mut ws)?);
        }
        Ok(total)
    }

    fn image(&self, ray: &Ray<R>) -> Option<usize> {
        self.opts.appearance.then_some(ray.image)
    }

    fn trace(&self, i: usize, ws: &mut ObjectiveWorkspace<R>) -> Result<()> {
        let ray = &self.batch.rays[i];
        let map = self.model.image_appearance(self.params, self.image(ray))?;
        let mut rng = ChaCha8Rng::seed_from_u64(ray_seed(self.opts.seed, self.opts.iteration, i as u64));
        trace_ray(self.model, self.params, ray, &map, &self.opts.trace, &mut rng, &mut ws.ray)
    }

    fn ray_pass(&self, i: usize, g_depth: R, grads: Option<&mut FieldParams<R>>, ws: &mut ObjectiveWorkspace<R>) -> Result<Partial> {
        self.trace(i, ws)?;
        let ray = &self.batch.rays[i];
        let inv_n = 1.0 / self.batch.len() as f64;
        let mut p = Partial::default();
        let mut g_color = [R::zero(); 3];
        ws.extra.clear();
        let skip = self.opts.mask_transients && ray.mask.transient;
        if !skip {
            let target = &self.batch.targets[i];
            let gain = R::of(2.0 * self.opts.terms.rgb * inv_n);
            for a in 0..3 {
                let e = ws.ray.out.color[a] - target[a];
                p.l_rgb += (e * e).as_f64() * inv_n;
                g_color[a] = gain * e;
            }
            let sign = if ray.mask.sky { 1.0 } else { -1.0 };
            let s: f64 = ws.ray.out.weights.iter().map(|w| (*w * *w).as_f64()).sum();
            p.l_sky = sign * s * inv_n;
            let gain = R::of(2.0 * sign * self.opts.terms.sky * inv_n);
            ws.extra.extend(ws.ray.out.weights.iter().map(|w| gain * *w));
        }
        if let Some(g) = grads {
            if skip && g_depth == R::zero() {
                return Ok(p);
            }
            let up = RayUpstream { color: g_color, depth: g_depth, weights: &ws.extra };
            backprop_ray(self.model, self.params, &mut ws.ray, &up, self.image(ray), g);
        }
        Ok(p)
    }
}

/// Frozen-field quantities of one probe pixel: the composite is affine in
/// the appearance map, `C = T fg + alpha b + (1 - alpha) sky`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeRay {
    pub foreground: [f64; 3],
    pub opacity: f64,
    pub sky: [f64; 3],
    pub target: [f64; 3],
}

/// Renders probe rays with the identity map and records their affine parts.
pub fn probe_rays<R: Real>(
    model: &FieldModel,
    params: &FieldParams<R>,
    rays: &[Ray<R>],
    targets: &[[R; 3]],
    trace: &TraceOptions,
    seed: u64,
) -> Result<Vec<ProbeRay>> {
    let mut ws = RayWorkspace::new(model);
    let id = crate::field::AffineColorMap::identity();
    let mut out = Vec::with_capacity(rays.len());
    for (i, (ray, t)) in rays.iter().zip(targets).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(ray_seed(seed, 0, i as u64));
        trace_ray(model, params, ray, &id, trace, &mut rng, &mut ws)?;
        let a = ws.out.opacity.as_f64();
        let sky = ws.sky.map(|v| v.as_f64());
        let mut fg = [0.0; 3];
        for c in 0..3 {
            fg[c] = ws.out.color[c].as_f64() - (1.0 - a) * sky[c];
        }
        out.push(ProbeRay { foreground: fg, opacity: a, sky, target: t.map(|v| v.as_f64()) });
    }
    Ok(out)
}

/// Fits the latent of `image` to probe pixels with the field frozen, by
/// Adam on the mean squared color error. Returns the final probe loss.
pub fn fit_probe_latent<R: Real>(
    model: &FieldModel,
    params: &mut FieldParams<R>,
    image: usize,
    probe: &[ProbeRay],
    steps: usize,
    lr: f64,
    adam: &AdamConfig,
) -> f64 {
    let b = model.config.latent_dim;
    let mut m = vec![R::zero(); b];
    let mut v = vec![R::zero(); b];
    let mut grads: FieldParams<R> = FieldParams::zeros_like(model);
    let mut loss = probe_loss(model, params, image, probe, &mut grads);
    for step in 1..=steps {
        let (lo, hi) = (image * b, (image + 1) * b);
        let g = grads.appearance_latents[lo..hi].to_vec();
        if g.iter().any(|x| !x.is_finite()) {
            break;
        }
        adam_update_slice(&mut params.appearance_latents[lo..hi], &g, &mut m, &mut v, step as u64, lr, adam);
        grads.appearance_latents[lo..hi].iter_mut().for_each(|x| *x = R::zero());
        grads.appearance_decoder.iter_mut().for_each(|x| *x = R::zero());
        loss = probe_loss(model, params, image, probe, &mut grads);
    }
    loss
}

fn probe_loss<R: Real>(model: &FieldModel, params: &FieldParams<R>, image: usize, probe: &[ProbeRay], grads: &mut FieldParams<R>) -> f64 {
    if probe.is_empty() {
        return 0.0;
    }
    let map = model.decode_appearance(params, params.latent(model, image));
    let t = map.matrix.cast::<f64>();
    let sh = map.shift.cast::<f64>();
    let inv = 1.0 / probe.len() as f64;
    let mut loss = 0.0;
    let mut gm = crate::math::Mat3::<f64>::zero();
    let mut gb = crate::math::Vec3::<f64>::zero();
    for p in probe {
        let fg = crate::math::Vec3(p.foreground);
        let c = t.mul_vec(&fg) + sh * p.opacity + crate::math::Vec3(p.sky) * (1.0 - p.opacity);
        for a in 0..3 {
            let e = c[a] - p.target[a];
            loss += e * e * inv;
            let g = 2.0 * e * inv;
            for j in 0..3 {
                gm.0[a][j] += g * fg[j];
            }
            gb[a] += g * p.opacity;
        }
    }
    model.backward_appearance(params, image, &gm.cast(), &gb.cast(), grads);
    loss
}

/// Blocks trained when appearance compensation is on or off.
pub fn trainable_blocks(appearance: bool) -> Vec<BlockId> {
    BlockId::ALL.into_iter().filter(|b| appearance || !matches!(b, BlockId::AppearanceLatents | BlockId::AppearanceDecoder)).collect()
}
