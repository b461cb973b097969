use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stereo::PriorParams;

/// Weights of every loss term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub depth: f64,
    pub normal: f64,
    pub normal_from_depth: f64,
    pub smooth: f64,
    pub feature: f64,
    pub pseudo: f64,
    pub train_align: f64,
    pub scale: f64,
    pub depth_normal: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            depth: 0.05,
            normal: 0.05,
            normal_from_depth: 0.05,
            smooth: 0.05,
            feature: 1.5,
            pseudo: 0.15,
            train_align: 1.5,
            scale: 100.0,
            depth_normal: 0.05,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.depth,
            self.normal,
            self.normal_from_depth,
            self.smooth,
            self.feature,
            self.pseudo,
            self.train_align,
            self.scale,
            self.depth_normal,
        ];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }
}

/// Iteration counts at which each group of terms switches on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub total_iters: usize,
    pub stereo_start: usize,
    pub stereo_period: usize,
    pub pseudo_start: usize,
    pub dn_start: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            total_iters: 7000,
            stereo_start: 500,
            stereo_period: 300,
            pseudo_start: 3000,
            dn_start: 3000,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        let s = self;
        if s.total_iters == 0 || s.stereo_start == 0 || s.stereo_start >= s.pseudo_start {
            return Err(Error::Config(format!(
                "schedule needs total_iters > 0 and 0 < stereo_start < pseudo_start, got {} / {} / {}",
                s.total_iters, s.stereo_start, s.pseudo_start
            )));
        }
        if s.stereo_period == 0 {
            return Err(Error::Config("stereo_period must be positive".into()));
        }
        Ok(())
    }

    /// Same phase boundaries rescaled to `total_iters`.
    pub fn scaled(&self, total_iters: usize) -> Schedule {
        let f = |v: usize| ((v as f64 * total_iters as f64 / self.total_iters as f64).round() as usize).max(1);
        Schedule {
            total_iters,
            stereo_start: f(self.stereo_start),
            stereo_period: f(self.stereo_period),
            pseudo_start: f(self.pseudo_start),
            dn_start: f(self.dn_start),
        }
    }
}

/// Toggles for the regularisers added on top of the base losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    pub stereo: bool,
    pub pseudo: bool,
    pub train_align: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            stereo: true,
            pseudo: true,
            train_align: true,
        }
    }
}

/// Adam hyper-parameters and per-group learning rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Initial position learning rate, in units of the scene radius.
    pub position_lr_init: f64,
    pub position_lr_final: f64,
    pub rotation_lr: f64,
    pub scale_lr: f64,
    pub opacity_lr: f64,
    pub color_lr: f64,
    pub feature_lr: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
            position_lr_init: 1.6e-4,
            position_lr_final: 1.6e-6,
            rotation_lr: 1e-3,
            scale_lr: 5e-3,
            opacity_lr: 5e-2,
            color_lr: 2.5e-3,
            feature_lr: 2.5e-3,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let lrs = [
            self.position_lr_init,
            self.position_lr_final,
            self.rotation_lr,
            self.scale_lr,
            self.opacity_lr,
            self.color_lr,
            self.feature_lr,
        ];
        if lrs.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || self.position_lr_init == 0.0 || self.position_lr_final == 0.0 {
            return Err(Error::Config("learning rates must be finite, non-negative and position rates positive".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0) {
            return Err(Error::Config("betas must lie in [0, 1) and eps must be positive".into()));
        }
        Ok(())
    }
}

/// Clone/split/prune maintenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityConfig {
    pub start: usize,
    pub end: usize,
    pub interval: usize,
    /// Mean screen-space positional gradient above which a primitive is densified.
    pub grad_threshold: f64,
    /// Split instead of clone above this fraction of the scene radius.
    pub split_scale_frac: f64,
    pub split_factor: f64,
    pub prune_opacity: f64,
    pub max_primitives: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            start: 500,
            end: 5000,
            interval: 100,
            grad_threshold: 2e-4,
            split_scale_frac: 0.01,
            split_factor: 1.6,
            prune_opacity: 0.005,
            max_primitives: 200_000,
        }
    }
}

impl DensityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.interval == 0 || self.split_factor <= 1.0 || self.max_primitives == 0 {
            return Err(Error::Config("density interval, split factor (> 1) and cap must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.prune_opacity) || !(self.grad_threshold >= 0.0) {
            return Err(Error::Config("prune opacity must lie in [0, 1) and the gradient threshold be >= 0".into()));
        }
        Ok(())
    }

    pub fn is_control_step(&self, iter: usize) -> bool {
        iter >= self.start && iter <= self.end && iter % self.interval == 0
    }
}

/// Feature consistency parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureParams {
    /// Round-trip threshold on `1 - cos`.
    pub tau: f64,
    pub patch: usize,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self { tau: 0.3, patch: 8 }
    }
}

/// Everything the training loop needs besides data and backends.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub weights: LossWeights,
    pub schedule: Schedule,
    pub ablation: Ablation,
    pub optim: OptimConfig,
    pub density: DensityConfig,
    pub prior: PriorParams,
    pub features: FeatureParams,
    pub background: [f64; 3],
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.schedule.validate()?;
        self.optim.validate()?;
        self.density.validate()?;
        let p = &self.prior;
        if !(p.baseline_frac > 0.0 && p.tau_lr >= 0.0 && p.d_min > 0.0) {
            return Err(Error::Config("prior baseline_frac and d_min must be positive, tau_lr >= 0".into()));
        }
        if !(self.features.tau >= 0.0) || self.features.patch == 0 {
            return Err(Error::Config("feature tau must be >= 0 and patch positive".into()));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Config("background must lie in [0, 1]".into()));
        }
        Ok(())
    }
}
