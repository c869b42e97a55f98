//! The training loop.
//!
//! Each iteration draws its batch and per-ray sampling jitter from streams
//! keyed by `(seed, iteration)`, so resuming from a checkpoint replays the
//! exact same sequence. Work units are assigned round-robin to a fixed
//! number of gradient buffers that are summed in order, which makes a run
//! reproducible for a given thread count.

use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use streetfield_core::batch::{sample_ground_patches, sample_ray_batch, PatchRule, RayBatch};
use streetfield_core::config::TrainConfig;
use streetfield_core::field::{BlockId, FieldModel, FieldParams};
use streetfield_core::loss::{total_loss, LossBreakdown};
use streetfield_core::objective::{trainable_blocks, Objective, ObjectiveOptions, ObjectiveWorkspace, Partial, TermWeights};
use streetfield_core::optim::{adam_step, cosine_lr, AdamState, StepOutcome};
use streetfield_core::scene::SceneDataset;
use streetfield_core::trace::{ray_seed, TraceOptions};

use crate::checkpoint::{self, Checkpoint};
use crate::config::RunConfig;
use crate::error::{io_err, AppError, AppResult};

/// Plain rays per work unit.
const UNIT_RAYS: usize = 32;

/// Worker count from `STREETFIELD_THREADS` (0 or unset: all cores).
pub fn thread_count() -> usize {
    match std::env::var("STREETFIELD_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(n) if n > 0 => n,
        _ => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    }
}

pub fn build_pool(threads: usize) -> AppResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| AppError::Dataset(format!("cannot start worker threads: {e}")))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub iteration: u64,
    pub loss: LossBreakdown,
    pub lr: f64,
    pub degenerate_patches: usize,
    pub skipped: bool,
}

pub struct Trainer<'a> {
    pub ds: &'a SceneDataset,
    pub cfg: TrainConfig,
    pub model: FieldModel,
    pub params: FieldParams<f32>,
    pub adam: AdamState<f32>,
    /// Completed iterations.
    pub iteration: u64,
    pub train_frames: Vec<usize>,
    pool: rayon::ThreadPool,
    groups: Vec<(FieldParams<f32>, ObjectiveWorkspace<f32>)>,
}

impl<'a> Trainer<'a> {
    /// Fresh parameters; the scene box and image count come from `ds`.
    pub fn new(ds: &'a SceneDataset, mut cfg: TrainConfig, threads: usize) -> AppResult<Self> {
        cfg.field.scene_box = ds.scene_box;
        cfg.field.image_count = ds.len();
        cfg.validate()?;
        let model = FieldModel::new(cfg.field.clone())?;
        let params = model.init_params(cfg.seed);
        let adam = AdamState::new(&model);
        Self::assemble(ds, cfg, model, params, adam, 0, threads)
    }

    pub fn resume(ds: &'a SceneDataset, ck: &Checkpoint, threads: usize) -> AppResult<Self> {
        let cfg = ck.config.train.clone();
        if cfg.field.image_count != ds.len() {
            return Err(AppError::Checkpoint(format!(
                "checkpoint has {} image latents, dataset has {} images",
                cfg.field.image_count,
                ds.len()
            )));
        }
        let model = ck.model()?;
        Self::assemble(ds, cfg, model, ck.params.clone(), ck.adam.clone(), ck.iteration, threads)
    }

    fn assemble(
        ds: &'a SceneDataset,
        cfg: TrainConfig,
        model: FieldModel,
        params: FieldParams<f32>,
        adam: AdamState<f32>,
        iteration: u64,
        threads: usize,
    ) -> AppResult<Self> {
        let threads = threads.max(1);
        let groups = (0..threads).map(|_| (FieldParams::zeros_like(&model), ObjectiveWorkspace::new(&model))).collect();
        Ok(Trainer { train_frames: ds.training_indices(), ds, cfg, model, params, adam, iteration, pool: build_pool(threads)?, groups })
    }

    pub fn objective_options(&self) -> ObjectiveOptions {
        ObjectiveOptions {
            trace: TraceOptions { samples: self.cfg.samples, stratified: true, cutoff: self.cfg.transmittance_cutoff },
            terms: TermWeights { rgb: 1.0, sky: self.cfg.lambda_sky, ground: self.cfg.lambda_ground },
            mask_transients: self.cfg.mask_transients,
            appearance: self.cfg.appearance,
            seed: self.cfg.seed,
            iteration: self.iteration,
        }
    }

    /// The batch of the current iteration.
    pub fn batch(&self) -> AppResult<RayBatch<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(ray_seed(self.cfg.seed, self.iteration, u64::MAX));
        let mut batch = RayBatch::new();
        sample_ray_batch(self.ds, &self.train_frames, self.cfg.batch_size, self.cfg.near, &mut rng, &mut batch)?;
        if self.cfg.patches_per_iter > 0 {
            let rule = PatchRule { size: self.cfg.patch_size, min_ground_fraction: self.cfg.patch_ground_fraction, attempts: 64 };
            sample_ground_patches(self.ds, &self.train_frames, self.cfg.patches_per_iter, &rule, self.cfg.near, &mut rng, &mut batch);
        }
        Ok(batch)
    }

    /// One optimization step.
    pub fn step(&mut self) -> AppResult<StepReport> {
        let batch = self.batch()?;
        let opts = self.objective_options();
        let objective = Objective::new(&self.model, &self.params, &batch, opts);
        let units = objective.units(UNIT_RAYS);
        let g = self.groups.len();
        let groups = &mut self.groups;
        let partials: Vec<AppResult<Vec<(usize, Partial)>>> = self.pool.install(|| {
            groups
                .par_iter_mut()
                .enumerate()
                .map(|(gi, (grads, ws))| {
                    grads.fill_zero();
                    let mut out = Vec::new();
                    for (ui, u) in units.iter().enumerate().filter(|(ui, _)| ui % g == gi) {
                        out.push((ui, objective.run_unit(u, Some(grads), ws)?));
                    }
                    Ok(out)
                })
                .collect()
        });
        let mut per_unit = vec![Partial::default(); units.len()];
        for p in partials {
            for (ui, part) in p? {
                per_unit[ui] = part;
            }
        }
        let mut total = Partial::default();
        for p in &per_unit {
            total.add(p);
        }
        let (head, rest) = self.groups.split_at_mut(1);
        for (gr, _) in rest.iter() {
            head[0].0.add_assign(gr);
        }
        let loss = total_loss(total.l_rgb, total.l_sky, total.l_ground, self.cfg.loss_weights())?;
        if !loss.l_total.is_finite() {
            return Err(AppError::Diverged(self.iteration));
        }
        let lr = cosine_lr(self.iteration, self.cfg.max_iters, self.cfg.lr_init, self.cfg.lr_final);
        let blocks: Vec<BlockId> = trainable_blocks(self.cfg.appearance);
        let outcome = adam_step(&mut self.params, &self.groups[0].0, &mut self.adam, lr, &self.cfg.adam, &blocks);
        if outcome == StepOutcome::SkippedNonFinite {
            warn!("iteration {}: non-finite gradient, step skipped", self.iteration);
        }
        let report = StepReport {
            iteration: self.iteration,
            loss,
            lr,
            degenerate_patches: total.degenerate_patches,
            skipped: outcome == StepOutcome::SkippedNonFinite,
        };
        self.iteration += 1;
        Ok(report)
    }

    pub fn checkpoint(&self, run: &RunConfig) -> Checkpoint {
        let mut config = run.clone();
        config.train = self.cfg.clone();
        Checkpoint {
            config,
            params: self.params.clone(),
            adam: self.adam.clone(),
            iteration: self.iteration,
            camera: self.ds.frames.first().map(|f| f.camera.clone()),
        }
    }
}

pub const METRICS_HEADER: &str = "iteration,l_rgb,l_sky,l_ground,l_total,lr";

pub fn metrics_row(r: &StepReport) -> String {
    let l = &r.loss;
    format!("{},{:e},{:e},{:e},{:e},{:e}", r.iteration, l.l_rgb, l.l_sky, l.l_ground, l.l_total, r.lr)
}

/// Appends rows to `metrics.csv`, writing the header for a new file.
pub struct MetricsLog {
    file: File,
}

impl MetricsLog {
    pub fn open(path: &Path) -> AppResult<Self> {
        let fresh = !path.exists();
        let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
        if fresh {
            writeln!(file, "{METRICS_HEADER}").map_err(io_err(path))?;
        }
        Ok(MetricsLog { file })
    }

    pub fn push(&mut self, r: &StepReport) -> std::io::Result<()> {
        writeln!(self.file, "{}", metrics_row(r))
    }
}

pub fn checkpoint_path(out: &Path) -> PathBuf {
    out.join("checkpoint.sgnf")
}

/// Trains until `max_iters`, writing `metrics.csv` and `checkpoint.sgnf`
/// into `out`. On divergence the last good checkpoint stays on disk.
pub fn run_training(trainer: &mut Trainer<'_>, run: &RunConfig, out: &Path) -> AppResult<()> {
    let end = trainer.cfg.max_iters;
    run_training_until(trainer, run, out, end)
}

/// As [`run_training`] but stops after iteration `until` (the learning-rate
/// schedule still spans `max_iters`).
pub fn run_training_until(trainer: &mut Trainer<'_>, run: &RunConfig, out: &Path, until: u64) -> AppResult<()> {
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let metrics_path = out.join("metrics.csv");
    let mut log = MetricsLog::open(&metrics_path)?;
    let ck_path = checkpoint_path(out);
    while trainer.iteration < until.min(trainer.cfg.max_iters) {
        let r = trainer.step()?;
        log.push(&r).map_err(io_err(&metrics_path))?;
        if r.iteration % 100 == 0 {
            info!("iter {:6}  l_rgb {:.5}  l_sky {:+.4}  l_ground {:.4}  lr {:.5}", r.iteration, r.loss.l_rgb, r.loss.l_sky, r.loss.l_ground, r.lr);
        }
        let done = trainer.iteration;
        if trainer.cfg.checkpoint_interval > 0 && done % trainer.cfg.checkpoint_interval == 0 {
            checkpoint::save(&trainer.checkpoint(run), &ck_path)?;
        }
        if trainer.cfg.validation_interval > 0 && done % trainer.cfg.validation_interval == 0 {
            let frames = trainer.ds.validation_indices();
            if !frames.is_empty() {
                let rep = crate::eval::evaluate(trainer.ds, &trainer.model, &trainer.params, &trainer.cfg, &frames, 1)?;
                info!("iter {done:6}  validation PSNR {:.2} dB", rep.overall.psnr());
            }
        }
    }
    checkpoint::save(&trainer.checkpoint(run), &ck_path)
}
