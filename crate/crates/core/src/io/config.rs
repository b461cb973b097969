//! Top-level run configuration loaded from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::external::{ExternalCommand, FEATURE_CMD_ENV, STEREO_CMD_ENV};
use crate::error::{Error, Result};
use crate::feature::FeatureBackend;
use crate::stereo::{BlockMatcher, StereoBackend};
use crate::train::TrainConfig;

/// Stereo and feature backends. Environment variables take precedence over
/// the commands given here.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub stereo_command: Option<String>,
    pub feature_command: Option<String>,
    pub matcher: BlockMatcher,
}

impl BackendConfig {
    pub fn stereo(&self) -> StereoBackend {
        ExternalCommand::from_env(STEREO_CMD_ENV)
            .or_else(|| self.stereo_command.clone().map(ExternalCommand::new))
            .map_or_else(|| StereoBackend::BuiltIn(self.matcher.clone()), StereoBackend::External)
    }

    pub fn features(&self) -> FeatureBackend {
        ExternalCommand::from_env(FEATURE_CMD_ENV)
            .or_else(|| self.feature_command.clone().map(ExternalCommand::new))
            .map_or(FeatureBackend::BuiltIn, FeatureBackend::External)
    }
}

/// Mesh extraction and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    /// Voxel size as a fraction of the scene radius.
    pub voxel: f64,
    /// Truncation distance in voxels.
    pub truncation_voxels: f64,
    /// Pixels with accumulated alpha at or below this are not fused.
    pub alpha_threshold: f64,
    /// Surface samples per side for Chamfer distance.
    pub samples: usize,
    pub seed: u64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            voxel: 0.002,
            truncation_voxels: 5.0,
            alpha_threshold: 0.5,
            samples: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Checkpoint period in iterations; 0 writes only the final one.
    pub checkpoint_every: usize,
    /// Write PNG previews next to FRAS rasters.
    pub previews: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            checkpoint_every: 1000,
            previews: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub backends: BackendConfig,
    pub mesh: MeshConfig,
    pub output: OutputConfig,
    /// Worker threads; `None` lets the thread pool decide.
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        let m = &self.mesh;
        if !(m.voxel > 0.0 && m.voxel.is_finite()) || !(m.truncation_voxels >= 1.0) || m.samples == 0 {
            return Err(Error::Config("mesh: voxel must be positive, truncation_voxels >= 1 and samples > 0".into()));
        }
        if !(0.0..1.0).contains(&m.alpha_threshold) {
            return Err(Error::Config("mesh: alpha_threshold must lie in [0, 1)".into()));
        }
        let b = &self.backends.matcher;
        if b.window % 2 == 0 || b.window < 3 {
            return Err(Error::Config("backends.matcher: window must be odd and at least 3".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c = RunConfig::from_toml("threads = 1\n[train]\nseed = 7\n[train.weights]\nfeature = 2.0\n[mesh]\nvoxel = 0.004\n").unwrap();
        assert_eq!(c.train.seed, 7);
        assert_eq!(c.train.weights.feature, 2.0);
        assert_eq!(c.train.weights.pseudo, 0.15);
        assert_eq!(c.mesh.voxel, 0.004);
        assert_eq!(c.output.checkpoint_every, 1000);
        let again = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn unknown_keys_and_bad_ranges_are_rejected() {
        assert!(RunConfig::from_toml("[train]\nsed = 1\n").is_err());
        assert!(RunConfig::from_toml("bogus = true\n").is_err());
        assert!(RunConfig::from_toml("[mesh]\nvoxel = -1.0\n").is_err());
        assert!(RunConfig::from_toml("[backends.matcher]\nwindow = 4\n").is_err());
        assert!(RunConfig::from_toml("[train.weights]\nscale = -3.0\n").is_err());
    }

    #[test]
    fn configured_commands_select_external_backends() {
        let c = RunConfig::from_toml("[backends]\nfeature_command = \"extract-features\"\n").unwrap();
        if std::env::var_os(FEATURE_CMD_ENV).is_none() {
            assert!(matches!(c.backends.features(), FeatureBackend::External(_)));
        }
        if std::env::var_os(STEREO_CMD_ENV).is_none() {
            assert!(matches!(c.backends.stereo(), StereoBackend::BuiltIn(_)));
        }
    }
}
