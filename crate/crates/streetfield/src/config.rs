//! Flat `key = value` configuration files with `#` comments.
//!
//! Every [`TrainConfig`] field has a key; `data` names the dataset
//! directory (relative paths resolve against the config file) and the
//! `synth_*` keys drive the procedural scene generator.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use streetfield_core::config::TrainConfig;
use streetfield_core::synth::SynthConfig;

use crate::error::{io_err, parse_err, AppResult};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: Option<PathBuf>,
    pub synth: SynthConfig,
}

/// Every key, in the order [`to_text`] writes them.
pub const KEYS: &[&str] = &[
    "data",
    "max_iters",
    "batch_size",
    "lr_init",
    "lr_final",
    "lambda_sky",
    "lambda_ground",
    "samples",
    "seed",
    "checkpoint_interval",
    "validation_interval",
    "patch_size",
    "patches_per_iter",
    "patch_ground_fraction",
    "appearance",
    "mask_transients",
    "probe_pixels",
    "probe_steps",
    "probe_lr",
    "transmittance_cutoff",
    "near",
    "adam_beta1",
    "adam_beta2",
    "adam_epsilon",
    "hash_levels",
    "hash_table_size",
    "hash_features",
    "hash_resolution_min",
    "hash_resolution_max",
    "ipe_levels",
    "density_width",
    "color_width",
    "sky_width",
    "direction_levels",
    "sky_direction_levels",
    "latent_dim",
    "density_bias_init",
    "synth_width",
    "synth_height",
    "synth_frames",
    "synth_jitter",
    "synth_transient",
    "synth_ground_contrast",
    "synth_focal_scale",
];

fn value_of(cfg: &RunConfig, key: &str) -> String {
    let t = &cfg.train;
    let f = &t.field;
    match key {
        "data" => cfg.data.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        "max_iters" => t.max_iters.to_string(),
        "batch_size" => t.batch_size.to_string(),
        "lr_init" => t.lr_init.to_string(),
        "lr_final" => t.lr_final.to_string(),
        "lambda_sky" => t.lambda_sky.to_string(),
        "lambda_ground" => t.lambda_ground.to_string(),
        "samples" => t.samples.to_string(),
        "seed" => t.seed.to_string(),
        "checkpoint_interval" => t.checkpoint_interval.to_string(),
        "validation_interval" => t.validation_interval.to_string(),
        "patch_size" => t.patch_size.to_string(),
        "patches_per_iter" => t.patches_per_iter.to_string(),
        "patch_ground_fraction" => t.patch_ground_fraction.to_string(),
        "appearance" => t.appearance.to_string(),
        "mask_transients" => t.mask_transients.to_string(),
        "probe_pixels" => t.probe_pixels.to_string(),
        "probe_steps" => t.probe_steps.to_string(),
        "probe_lr" => t.probe_lr.to_string(),
        "transmittance_cutoff" => t.transmittance_cutoff.to_string(),
        "near" => t.near.to_string(),
        "adam_beta1" => t.adam.beta1.to_string(),
        "adam_beta2" => t.adam.beta2.to_string(),
        "adam_epsilon" => t.adam.epsilon.to_string(),
        "hash_levels" => f.grid.levels.to_string(),
        "hash_table_size" => f.grid.table_size.to_string(),
        "hash_features" => f.grid.features_per_level.to_string(),
        "hash_resolution_min" => f.grid.resolution_min.to_string(),
        "hash_resolution_max" => f.grid.resolution_max.to_string(),
        "ipe_levels" => f.ipe_levels.to_string(),
        "density_width" => f.density_width.to_string(),
        "color_width" => f.color_width.to_string(),
        "sky_width" => f.sky_width.to_string(),
        "direction_levels" => f.direction_levels.to_string(),
        "sky_direction_levels" => f.sky_direction_levels.to_string(),
        "latent_dim" => f.latent_dim.to_string(),
        "density_bias_init" => f.density_bias_init.to_string(),
        "synth_width" => cfg.synth.width.to_string(),
        "synth_height" => cfg.synth.height.to_string(),
        "synth_frames" => cfg.synth.frames.to_string(),
        "synth_jitter" => cfg.synth.jitter.to_string(),
        "synth_transient" => cfg.synth.transient.to_string(),
        "synth_ground_contrast" => cfg.synth.ground_contrast.to_string(),
        "synth_focal_scale" => cfg.synth.focal_scale.to_string(),
        _ => unreachable!("unknown key {key}"),
    }
}

fn num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?}"))
}

/// Sets one key; the error is a message without location.
pub fn set(cfg: &mut RunConfig, key: &str, v: &str) -> Result<(), String> {
    let t = &mut cfg.train;
    match key {
        "data" => cfg.data = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
        "max_iters" => t.max_iters = num(v)?,
        "batch_size" => t.batch_size = num(v)?,
        "lr_init" => t.lr_init = num(v)?,
        "lr_final" => t.lr_final = num(v)?,
        "lambda_sky" => t.lambda_sky = num(v)?,
        "lambda_ground" => t.lambda_ground = num(v)?,
        "samples" => t.samples = num(v)?,
        "seed" => t.seed = num(v)?,
        "checkpoint_interval" => t.checkpoint_interval = num(v)?,
        "validation_interval" => t.validation_interval = num(v)?,
        "patch_size" => t.patch_size = num(v)?,
        "patches_per_iter" => t.patches_per_iter = num(v)?,
        "patch_ground_fraction" => t.patch_ground_fraction = num(v)?,
        "appearance" => t.appearance = num(v)?,
        "mask_transients" => t.mask_transients = num(v)?,
        "probe_pixels" => t.probe_pixels = num(v)?,
        "probe_steps" => t.probe_steps = num(v)?,
        "probe_lr" => t.probe_lr = num(v)?,
        "transmittance_cutoff" => t.transmittance_cutoff = num(v)?,
        "near" => t.near = num(v)?,
        "adam_beta1" => t.adam.beta1 = num(v)?,
        "adam_beta2" => t.adam.beta2 = num(v)?,
        "adam_epsilon" => t.adam.epsilon = num(v)?,
        "hash_levels" => t.field.grid.levels = num(v)?,
        "hash_table_size" => t.field.grid.table_size = num(v)?,
        "hash_features" => t.field.grid.features_per_level = num(v)?,
        "hash_resolution_min" => t.field.grid.resolution_min = num(v)?,
        "hash_resolution_max" => t.field.grid.resolution_max = num(v)?,
        "ipe_levels" => t.field.ipe_levels = num(v)?,
        "density_width" => t.field.density_width = num(v)?,
        "color_width" => t.field.color_width = num(v)?,
        "sky_width" => t.field.sky_width = num(v)?,
        "direction_levels" => t.field.direction_levels = num(v)?,
        "sky_direction_levels" => t.field.sky_direction_levels = num(v)?,
        "latent_dim" => t.field.latent_dim = num(v)?,
        "density_bias_init" => t.field.density_bias_init = num(v)?,
        "synth_width" => cfg.synth.width = num(v)?,
        "synth_height" => cfg.synth.height = num(v)?,
        "synth_frames" => cfg.synth.frames = num(v)?,
        "synth_jitter" => cfg.synth.jitter = num(v)?,
        "synth_transient" => cfg.synth.transient = num(v)?,
        "synth_ground_contrast" => cfg.synth.ground_contrast = num(v)?,
        "synth_focal_scale" => cfg.synth.focal_scale = num(v)?,
        _ => return Err(format!("unknown key {key:?}")),
    }
    Ok(())
}

pub fn to_text(cfg: &RunConfig) -> String {
    let mut s = String::new();
    for k in KEYS {
        let _ = writeln!(s, "{k} = {}", value_of(cfg, k));
    }
    s
}

/// Parses config text on top of the defaults. `origin` labels errors.
pub fn parse(text: &str, origin: &Path) -> AppResult<RunConfig> {
    let mut cfg = RunConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| parse_err(origin, i + 1, "expected key = value"))?;
        set(&mut cfg, k.trim(), v.trim()).map_err(|m| parse_err(origin, i + 1, m))?;
    }
    Ok(cfg)
}

pub fn load(path: &Path) -> AppResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut cfg = parse(&text, path)?;
    if let (Some(d), Some(parent)) = (&cfg.data, path.parent()) {
        if d.is_relative() {
            cfg.data = Some(parent.join(d));
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.train.seed = 9;
        cfg.train.lambda_sky = 0.25;
        cfg.train.appearance = false;
        cfg.synth.jitter = 0.2;
        cfg.data = Some(PathBuf::from("scene"));
        let back = parse(&to_text(&cfg), Path::new("x")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse("# c\nseed = 3\nbogus = 1\n", Path::new("f.cfg")).unwrap_err();
        assert_eq!(err.to_string(), "f.cfg:3: unknown key \"bogus\"");
        let err = parse("seed 3\n", Path::new("f.cfg")).unwrap_err();
        assert!(err.to_string().starts_with("f.cfg:1:"));
    }
}
