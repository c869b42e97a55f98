//! Central finite-difference verification of analytic gradients.

use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::batch::RayBatch;
use crate::field::{BlockId, FieldModel, FieldParams};
use crate::math::Vec3;
use crate::objective::{Objective, ObjectiveOptions, TermWeights};
use crate::render::{MaskBits, Ray};
use crate::trace::TraceOptions;
use crate::Result;

/// Spectral gap below which a ground-loss check is flagged instead of judged.
pub const GAP_FLAG_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Minimum parameters checked per block (all of them if fewer).
    pub per_block: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-5, per_block: 200, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockReport {
    pub block: BlockId,
    pub checked: usize,
    pub max_rel_error: f64,
    /// Result not meaningful (near-degenerate plane fit); not a failure.
    pub flagged: bool,
}

impl BlockReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.flagged || self.max_rel_error < tol
    }
}

/// `|a - f| / max(|a|, |f|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Indices to probe: everything for small slices, otherwise half drawn
/// from entries with a nonzero analytic gradient and half uniformly.
pub fn pick_indices<G: Rng + ?Sized>(analytic: &[f64], count: usize, rng: &mut G) -> Vec<usize> {
    let n = analytic.len();
    if n <= count {
        return (0..n).collect();
    }
    let nonzero: Vec<usize> = (0..n).filter(|i| analytic[*i] != 0.0).collect();
    let half = (count / 2).min(nonzero.len());
    let mut picked: Vec<usize> = sample(rng, nonzero.len(), half).into_iter().map(|i| nonzero[i]).collect();
    while picked.len() < count {
        let i = rng.random_range(0..n);
        if !picked.contains(&i) {
            picked.push(i);
        }
    }
    picked.sort_unstable();
    picked
}

/// Worst relative error between `analytic` and central differences of `f`
/// over the picked entries of `x`. `x` is restored afterwards.
pub fn check_slice(x: &mut [f64], analytic: &[f64], cfg: &GradCheckConfig, mut f: impl FnMut(&[f64]) -> f64) -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let idx = pick_indices(analytic, cfg.per_block, &mut rng);
    let mut worst = 0.0_f64;
    for i in &idx {
        let orig = x[*i];
        x[*i] = orig + cfg.step;
        let fp = f(x);
        x[*i] = orig - cfg.step;
        let fm = f(x);
        x[*i] = orig;
        worst = worst.max(relative_error(analytic[*i], (fp - fm) / (2.0 * cfg.step)));
    }
    (idx.len(), worst)
}

/// [`check_slice`] over each listed block of a parameter set.
pub fn check_blocks(
    params: &mut FieldParams<f64>,
    analytic: &FieldParams<f64>,
    blocks: &[BlockId],
    cfg: &GradCheckConfig,
    mut f: impl FnMut(&FieldParams<f64>) -> f64,
) -> Vec<BlockReport> {
    let mut out = Vec::with_capacity(blocks.len());
    for (bi, b) in blocks.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(bi as u64));
        let idx = pick_indices(analytic.block(*b), cfg.per_block, &mut rng);
        let mut worst = 0.0_f64;
        for i in &idx {
            let orig = params.block(*b)[*i];
            params.block_mut(*b)[*i] = orig + cfg.step;
            let fp = f(params);
            params.block_mut(*b)[*i] = orig - cfg.step;
            let fm = f(params);
            params.block_mut(*b)[*i] = orig;
            worst = worst.max(relative_error(analytic.block(*b)[*i], (fp - fm) / (2.0 * cfg.step)));
        }
        out.push(BlockReport { block: *b, checked: idx.len(), max_rel_error: worst, flagged: false });
    }
    out
}

/// A loss term to verify.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Term {
    Rgb,
    Sky,
    Ground,
    Total,
}

impl Term {
    pub const ALL: [Term; 4] = [Term::Rgb, Term::Sky, Term::Ground, Term::Total];

    pub fn name(self) -> &'static str {
        match self {
            Term::Rgb => "l_rgb",
            Term::Sky => "l_sky",
            Term::Ground => "l_ground",
            Term::Total => "l_total",
        }
    }

    /// Term multipliers; `Total` uses the supplied lambdas.
    pub fn weights(self, lambda_sky: f64, lambda_ground: f64) -> TermWeights {
        match self {
            Term::Rgb => TermWeights { rgb: 1.0, sky: 0.0, ground: 0.0 },
            Term::Sky => TermWeights { rgb: 0.0, sky: 1.0, ground: 0.0 },
            Term::Ground => TermWeights { rgb: 0.0, sky: 0.0, ground: 1.0 },
            Term::Total => TermWeights { rgb: 1.0, sky: lambda_sky, ground: lambda_ground },
        }
    }
}

/// Four labeled rays (sky, building, transient, plain) plus one 2x2 ground
/// patch inside the model's scene box, with arbitrary targets.
pub fn micro_batch(model: &FieldModel, seed: u64) -> RayBatch<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = &model.config.scene_box;
    let c = b.center();
    let e = b.extent();
    let images = model.config.image_count;
    let origin = Vec3::new(b.max.x() - 0.05 * e.x(), c.y(), b.min.z() + 0.6 * e.z());
    let mut batch = RayBatch::new();
    let masks = [
        MaskBits { sky: true, ..Default::default() },
        MaskBits::default(),
        MaskBits { transient: true, sky: true, ..Default::default() },
        MaskBits { ground: true, ..Default::default() },
    ];
    for (i, mask) in masks.into_iter().enumerate() {
        let d = Vec3::new(-1.0, rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.2)).normalized();
        push_clipped(&mut batch, model, origin, d, i % images, mask, &mut rng);
    }
    let start = batch.len();
    let ground = Vec3::new(c.x(), c.y(), b.min.z() + 0.3 * e.z());
    for k in 0..4 {
        let target = ground + Vec3::new(0.15 * e.x() * (k % 2) as f64, 0.1 * e.y() * (k / 2) as f64, 0.0);
        let d = (target - origin).normalized();
        let mask = MaskBits { ground: true, ..Default::default() };
        push_clipped(&mut batch, model, origin, d, k % images, mask, &mut rng);
    }
    batch.patches.push(start..batch.len());
    batch
}

fn push_clipped(batch: &mut RayBatch<f64>, model: &FieldModel, o: Vec3<f64>, d: Vec3<f64>, image: usize, mask: MaskBits, rng: &mut ChaCha8Rng) {
    let (t0, t1) = model.config.scene_box.intersect(&o, &d).expect("micro-batch ray inside the box");
    let ray = Ray { origin: o, direction: d, t_near: t0.max(0.01), t_far: t1, image, row: 0, col: 0, mask };
    let target = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
    batch.push(ray, target);
}

/// Parameters with every block randomized, so that every pathway carries
/// gradient (fresh initialization zeros the output layers and decoder).
pub fn randomized_params(model: &FieldModel, seed: u64) -> FieldParams<f64> {
    let mut p: FieldParams<f64> = model.init_params(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    for v in &mut p.hash {
        *v = rng.random_range(-0.5..0.5);
    }
    for b in [BlockId::MlpDensity, BlockId::MlpColor, BlockId::MlpSky] {
        for v in p.block_mut(b).iter_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    for v in &mut p.appearance_decoder {
        *v = rng.random_range(-0.2..0.2);
    }
    for v in &mut p.appearance_latents {
        *v = rng.random_range(-0.5..0.5);
    }
    p
}

#[derive(Clone, Debug, PartialEq)]
pub struct TermReport {
    pub term: Term,
    pub blocks: Vec<BlockReport>,
}

/// Checks every parameter block against finite differences for each loss
/// term on `batch`, in 64-bit. Sampling is midpoint and marching never
/// stops early, so the objective is a smooth deterministic function.
pub fn gradient_suite(
    model: &FieldModel,
    params: &FieldParams<f64>,
    batch: &RayBatch<f64>,
    samples: usize,
    lambdas: (f64, f64),
    cfg: &GradCheckConfig,
) -> Result<Vec<TermReport>> {
    let mut reports = Vec::new();
    let mut work = params.clone();
    for term in Term::ALL {
        let opts = ObjectiveOptions {
            trace: TraceOptions { samples, stratified: false, cutoff: 0.0 },
            terms: term.weights(lambdas.0, lambdas.1),
            mask_transients: true,
            appearance: true,
            seed: cfg.seed,
            iteration: 0,
        };
        let mut grads = FieldParams::zeros_like(model);
        let partial = Objective::new(model, params, batch, opts).evaluate(Some(&mut grads))?;
        let flag = opts.terms.ground > 0.0 && partial.min_spectral_gap < GAP_FLAG_TOLERANCE;
        let f = |p: &FieldParams<f64>| {
            Objective::new(model, p, batch, opts).evaluate(None).map(|q| q.weighted(&opts.terms)).unwrap_or(f64::NAN)
        };
        let mut blocks = check_blocks(&mut work, &grads, &BlockId::ALL, cfg, f);
        for b in &mut blocks {
            b.flagged = flag;
        }
        reports.push(TermReport { term, blocks });
    }
    Ok(reports)
}
