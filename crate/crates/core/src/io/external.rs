//! Invocation of external stereo/feature programs through FRAS files.

use std::path::PathBuf;
use std::process::Command;

use super::fras::{read_fras, write_fras};
use crate::error::{Error, Result};
use crate::image::Raster;

pub const STEREO_CMD_ENV: &str = "SPARSESURF_STEREO_CMD";
pub const FEATURE_CMD_ENV: &str = "SPARSESURF_FEAT_CMD";

/// An external program called as `<cmd> <input.fras>... <output.fras>`.
///
/// `command` is split on whitespace, so fixed leading arguments are allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalCommand {
    pub command: String,
}

impl ExternalCommand {
    pub fn new(command: impl Into<String>) -> Self {
        Self { command: command.into() }
    }

    /// Command from environment variable `var`, if set and non-blank.
    pub fn from_env(var: &str) -> Option<Self> {
        std::env::var(var).ok().filter(|s| !s.trim().is_empty()).map(Self::new)
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::ExternalBackend {
            command: self.command.clone(),
            message: message.into(),
        }
    }

    /// Run on `inputs` and read back an `H×W×channels` raster.
    pub fn run(&self, inputs: &[&Raster], height: usize, width: usize, channels: usize) -> Result<Raster> {
        let mut parts = self.command.split_whitespace();
        let program = parts.next().ok_or_else(|| self.fail("empty command"))?;
        let dir = tempfile::tempdir().map_err(|e| self.fail(format!("temp dir: {e}")))?;
        let mut args: Vec<PathBuf> = Vec::new();
        for (i, r) in inputs.iter().enumerate() {
            let p = dir.path().join(format!("in{i}.fras"));
            write_fras(r, &p)?;
            args.push(p);
        }
        let out = dir.path().join("out.fras");
        let status = Command::new(program)
            .args(parts)
            .args(&args)
            .arg(&out)
            .status()
            .map_err(|e| self.fail(format!("spawn: {e}")))?;
        if !status.success() {
            return Err(self.fail(format!("exit status {status}")));
        }
        let r = read_fras(&out).map_err(|e| self.fail(e.to_string()))?;
        if (r.height(), r.width(), r.channels()) != (height, width, channels) {
            return Err(self.fail(format!("output is {}, expected {height}x{width}x{channels}", r.shape_string())));
        }
        if !r.is_finite() {
            return Err(self.fail("output contains non-finite values"));
        }
        Ok(r)
    }
}
