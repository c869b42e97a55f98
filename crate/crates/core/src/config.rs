//! Training configuration.

use crate::field::FieldConfig;
use crate::loss::LossWeights;
use crate::optim::AdamConfig;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub max_iters: u64,
    pub batch_size: usize,
    pub lr_init: f64,
    pub lr_final: f64,
    pub lambda_sky: f64,
    pub lambda_ground: f64,
    /// Samples per ray (K).
    pub samples: usize,
    pub seed: u64,
    /// Iterations between checkpoints; 0 disables periodic checkpoints.
    pub checkpoint_interval: u64,
    /// Iterations between validation PSNR reports; 0 disables them.
    pub validation_interval: u64,
    /// Side length in pixels of a ground patch.
    pub patch_size: usize,
    pub patches_per_iter: usize,
    /// Minimum fraction of ground pixels for a patch to be used.
    pub patch_ground_fraction: f64,
    /// Per-image appearance latents and decoder are trained.
    pub appearance: bool,
    /// Transient rays are dropped from every loss.
    pub mask_transients: bool,
    /// Pixels of a held-out frame used to fit its latent before evaluation.
    pub probe_pixels: usize,
    pub probe_steps: usize,
    pub probe_lr: f64,
    /// Rays stop marching once transmittance falls below this; 0 marches
    /// every sample.
    pub transmittance_cutoff: f64,
    /// Minimum ray start distance from the camera center.
    pub near: f64,
    pub adam: AdamConfig,
    pub field: FieldConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iters: 50_000,
            batch_size: 4096,
            lr_init: 0.01,
            lr_final: 0.001,
            lambda_sky: LossWeights::DEFAULT.sky,
            lambda_ground: LossWeights::DEFAULT.ground,
            samples: 128,
            seed: 0,
            checkpoint_interval: 5000,
            validation_interval: 1000,
            patch_size: 16,
            patches_per_iter: 4,
            patch_ground_fraction: 0.75,
            appearance: true,
            mask_transients: true,
            probe_pixels: 32,
            probe_steps: 100,
            probe_lr: 0.01,
            transmittance_cutoff: 1e-4,
            near: 0.05,
            adam: AdamConfig::default(),
            field: FieldConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights { sky: self.lambda_sky, ground: self.lambda_ground }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss_weights().validate()?;
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1"));
        }
        if self.samples == 0 {
            return Err(Error::ZeroSamples);
        }
        if !(self.lr_final >= 0.0 && self.lr_final <= self.lr_init) || !self.lr_init.is_finite() {
            return Err(Error::InvalidConfig("learning rates need 0 <= lr_final <= lr_init"));
        }
        if self.patches_per_iter > 0 && self.patch_size < 2 {
            return Err(Error::InvalidConfig("patch_size must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.patch_ground_fraction) {
            return Err(Error::InvalidConfig("patch_ground_fraction must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.transmittance_cutoff) {
            return Err(Error::InvalidConfig("transmittance_cutoff must lie in [0, 1)"));
        }
        if !(self.near >= 0.0) {
            return Err(Error::InvalidConfig("near must be nonnegative"));
        }
        self.field.grid.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
        let bad = TrainConfig { lr_final: 0.1, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { lambda_ground: -1.0, ..Default::default() };
        assert_eq!(bad.validate(), Err(Error::NegativeLossWeight("lambda_ground")));
    }
}
