//! Command-line entry point.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use streetfield_core::camera::Camera;
use streetfield_core::field::{AffineColorMap, FieldModel, FieldParams};
use streetfield_core::gradcheck::{gradient_suite, micro_batch, randomized_params, GradCheckConfig};
use streetfield_core::math::{Quat, Vec3};
use streetfield_core::plane::fit_points;
use streetfield_core::scene::SceneDataset;
use streetfield_core::synth::generate_synthetic_scene;
use streetfield_core::trace::TraceOptions;

use crate::checkpoint;
use crate::config::{self, RunConfig};
use crate::error::{io_err, parse_err, AppError, AppResult};
use crate::eval::{evaluate, render_view};
use crate::io::{load_dataset, save_depth, save_image, write_dataset};
use crate::train::{build_pool, checkpoint_path, run_training, run_training_until, thread_count, Trainer};

/// Relative error above which `check-grad` fails.
pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "streetfield", version, about = "Street-scene radiance fields with appearance and ground-plane regularization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the procedural street dataset.
    Synth(SynthArgs),
    /// Train a field; writes checkpoint.sgnf and metrics.csv.
    Train(TrainArgs),
    /// Render views along a camera path.
    Render(RenderArgs),
    /// PSNR on held-out frames, overall and per mask region.
    Eval(EvalArgs),
    /// Fit a plane to an XYZ point file.
    FitPlane(FitPlaneArgs),
    /// Compare analytic gradients with central differences.
    CheckGrad(CheckGradArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Image size as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_resolution)]
    resolution: Option<(usize, usize)>,
    /// Takes the synth_* keys.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run directory.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<u64>,
    /// Resume from this checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// One worker thread, bitwise reproducible.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// One pose per line: qw qx qy qz tx ty tz (world to camera).
    #[arg(long)]
    path: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// WIDTHxHEIGHT; intrinsics scale with it.
    #[arg(long, value_parser = parse_resolution)]
    resolution: Option<(usize, usize)>,
    #[arg(long)]
    deterministic: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Overrides the dataset named in the checkpoint.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also writes renders and the table here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    deterministic: bool,
}

#[derive(Debug, Args)]
struct FitPlaneArgs {
    /// Whitespace-separated x y z values.
    #[arg(long)]
    path: PathBuf,
}

#[derive(Debug, Args)]
struct CheckGradArgs {
    /// Check at these parameters instead of a random initialization.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Model shape and loss weights for a fresh initialization.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_resolution(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad width {w:?}"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad height {h:?}"))?;
    if w == 0 || h == 0 {
        return Err("resolution must be positive".into());
    }
    Ok((w, h))
}

/// Runs the command line `args` (without the program name) and returns the
/// exit code: 0 success, 1 usage error, 2 runtime failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv = std::iter::once(OsString::from("streetfield")).chain(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(report) => {
            print!("{report}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn threads(deterministic: bool) -> usize {
    if deterministic {
        1
    } else {
        thread_count()
    }
}

fn dispatch(cmd: Command) -> AppResult<String> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Render(a) => render(a),
        Command::Eval(a) => eval(a),
        Command::FitPlane(a) => fit_plane(&a.path),
        Command::CheckGrad(a) => check_grad(a),
    }
}

fn synth(a: SynthArgs) -> AppResult<String> {
    let mut cfg = match &a.config {
        Some(p) => config::load(p)?.synth,
        None => Default::default(),
    };
    if let Some((w, h)) = a.resolution {
        cfg.width = w;
        cfg.height = h;
    }
    let ds = generate_synthetic_scene(&cfg, a.seed)?;
    write_dataset(&ds, &a.out)?;
    Ok(format!("wrote {} frames to {}\n", ds.len(), a.out.display()))
}

/// The dataset named by `data`, or the synthetic scene of `run.synth`.
pub fn dataset_for(run: &RunConfig) -> AppResult<SceneDataset> {
    match &run.data {
        Some(d) => load_dataset(d),
        None => Ok(generate_synthetic_scene(&run.synth, run.train.seed)?),
    }
}

fn train(a: TrainArgs) -> AppResult<String> {
    let mut run = config::load(&a.config)?;
    if let Some(s) = a.seed {
        run.train.seed = s;
    }
    if let Some(n) = a.iters {
        run.train.max_iters = n;
    }
    let ds = dataset_for(&run)?;
    let n = threads(a.deterministic);
    info!("training on {} of {} frames", ds.training_indices().len(), ds.len());
    let trainer = match &a.checkpoint {
        // Resuming keeps the stored schedule; `--iters` only moves the stop
        // point, extending the schedule when it lies beyond it.
        Some(p) => {
            let ck = checkpoint::load(p)?;
            let mut t = Trainer::resume(&ds, &ck, n)?;
            let until = a.iters.unwrap_or(t.cfg.max_iters);
            t.cfg.max_iters = t.cfg.max_iters.max(until);
            run_training_until(&mut t, &run, &a.out, until)?;
            t
        }
        None => {
            let mut t = Trainer::new(&ds, run.train.clone(), n)?;
            run_training(&mut t, &run, &a.out)?;
            t
        }
    };
    Ok(format!("checkpoint {} at iteration {}\n", checkpoint_path(&a.out).display(), trainer.iteration))
}

/// Parses a camera path file: 7 numbers per non-comment line.
pub fn parse_camera_path(text: &str, file: &Path) -> AppResult<Vec<(Quat<f64>, Vec3<f64>)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(file, i + 1, format!("bad number {t:?}"))))
            .collect::<AppResult<_>>()?;
        if v.len() != 7 {
            return Err(parse_err(file, i + 1, format!("expected 7 values, found {}", v.len())));
        }
        let q = Quat::new(v[0], v[1], v[2], v[3]);
        if !(q.norm() > 0.0) {
            return Err(parse_err(file, i + 1, "zero quaternion"));
        }
        out.push((q.normalized(), Vec3::new(v[4], v[5], v[6])));
    }
    Ok(out)
}

fn scaled_camera(base: &Camera, res: Option<(usize, usize)>) -> Camera {
    let mut c = base.clone();
    if let Some((w, h)) = res {
        let sx = w as f64 / base.width as f64;
        let sy = h as f64 / base.height as f64;
        c.width = w;
        c.height = h;
        c.fx *= sx;
        c.cx *= sx;
        c.fy *= sy;
        c.cy *= sy;
    }
    c
}

fn render(a: RenderArgs) -> AppResult<String> {
    let ck = checkpoint::load(&a.checkpoint)?;
    let model = ck.model()?;
    let base = ck.camera.clone().ok_or_else(|| AppError::Checkpoint("no camera intrinsics stored".into()))?;
    let base = scaled_camera(&base, a.resolution);
    let text = std::fs::read_to_string(&a.path).map_err(io_err(&a.path))?;
    let poses = parse_camera_path(&text, &a.path)?;
    std::fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    let cfg = &ck.config.train;
    let opts = TraceOptions { samples: cfg.samples, stratified: false, cutoff: cfg.transmittance_cutoff };
    let pool = build_pool(threads(a.deterministic))?;
    // A zero latent decodes to the identity map.
    let map = AffineColorMap::identity();
    for (i, (q, t)) in poses.iter().enumerate() {
        let cam = Camera { rotation: *q, translation: *t, ..base.clone() };
        let img = render_view(&model, &ck.params, &cam, &map, &opts, cfg.near, cfg.seed, &pool)?;
        save_image(&a.out.join(format!("frame_{i:04}.png")), &img.image)?;
        save_depth(&a.out.join(format!("depth_{i:04}.png")), &img.depth)?;
    }
    Ok(format!("rendered {} frames to {}\n", poses.len(), a.out.display()))
}

fn eval(a: EvalArgs) -> AppResult<String> {
    let ck = checkpoint::load(&a.checkpoint)?;
    let mut run = ck.config.clone();
    if let Some(p) = &a.config {
        let over = config::load(p)?;
        run.data = over.data;
        run.synth = over.synth;
    }
    let ds = dataset_for(&run)?;
    let model = ck.model()?;
    let frames = ds.validation_indices();
    if frames.is_empty() {
        return Err(AppError::Dataset("dataset has no held-out frames".into()));
    }
    let n = threads(a.deterministic);
    let rep = evaluate(&ds, &model, &ck.params, &ck.config.train, &frames, n)?;
    let table = rep.table();
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out).map_err(io_err(out))?;
        let p = out.join("eval.txt");
        std::fs::write(&p, &table).map_err(io_err(&p))?;
    }
    Ok(table)
}

/// Reads an XYZ point file and reports the fitted plane.
pub fn fit_plane(path: &Path) -> AppResult<String> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut vals = Vec::new();
    for (i, line) in text.lines().enumerate() {
        for t in line.split('#').next().unwrap_or("").split_whitespace() {
            vals.push(t.parse::<f64>().map_err(|_| parse_err(path, i + 1, format!("bad number {t:?}")))?);
        }
    }
    if vals.len() % 3 != 0 {
        return Err(parse_err(path, text.lines().count(), "value count is not a multiple of 3"));
    }
    let pts: Vec<Vec3<f64>> = vals.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
    let fit = fit_points(&pts)?;
    let (c, n) = (fit.barycenter, fit.normal);
    let mut s = String::new();
    let _ = writeln!(s, "points      {}", pts.len());
    let _ = writeln!(s, "barycenter  {:.9} {:.9} {:.9}", c.x(), c.y(), c.z());
    let _ = writeln!(s, "normal      {:.9} {:.9} {:.9}", n.x(), n.y(), n.z());
    let _ = writeln!(s, "sigma3      {:.9e}", fit.sigma3);
    if fit.indeterminate {
        s.push_str("warning: points are collinear or coincident; the normal is arbitrary\n");
    }
    Ok(s)
}

fn check_grad(a: CheckGradArgs) -> AppResult<String> {
    let (model, params, cfg) = match (&a.checkpoint, &a.config) {
        (Some(p), _) => {
            let ck = checkpoint::load(p)?;
            (ck.model()?, ck.params.cast::<f64>(), ck.config.train)
        }
        (None, cfg_path) => {
            let run = match cfg_path {
                Some(p) => config::load(p)?,
                None => RunConfig::default(),
            };
            let mut cfg = run.train;
            cfg.field.image_count = cfg.field.image_count.max(2);
            let model = FieldModel::new(cfg.field.clone())?;
            let params: FieldParams<f64> = randomized_params(&model, a.seed);
            (model, params, cfg)
        }
    };
    let batch = micro_batch(&model, a.seed);
    let gc = GradCheckConfig { seed: a.seed, ..Default::default() };
    let reports = gradient_suite(&model, &params, &batch, cfg.samples, (cfg.lambda_sky, cfg.lambda_ground), &gc)?;
    let mut s = String::from("term     block                 checked  max_rel_error\n");
    let mut failed = Vec::new();
    for r in &reports {
        for b in &r.blocks {
            let flag = if b.flagged { "  (flagged: near-repeated singular value)" } else { "" };
            let _ = writeln!(s, "{:8} {:20} {:8}  {:.3e}{flag}", r.term.name(), b.block.name(), b.checked, b.max_rel_error);
            if !b.passes(GRAD_TOLERANCE) {
                failed.push(format!("{}/{}", r.term.name(), b.block.name()));
            }
        }
    }
    if failed.is_empty() {
        Ok(s)
    } else {
        print!("{s}");
        Err(AppError::GradientCheck(failed.join(", ")))
    }
}
