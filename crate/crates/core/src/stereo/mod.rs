//! Metric depth and normal priors from rendered stereo companions.
//!
//! Each training camera gets a rectified companion translated along its own
//! x-axis towards the nearest other training camera. The training photo and
//! the companion rendered from the current cloud are matched, and the
//! disparity is turned into depth, depth-derived normals and a
//! left-right-consistent validity mask.

mod matcher;

use log::warn;
use serde::{Deserialize, Serialize};

pub use matcher::{consistency_mask, BlockMatcher, Disparity, StereoBackend};

use crate::error::{Error, Result};
use crate::image::{Mask, Raster};
use crate::raster::{normal_from_depth, render, RenderOptions};
use crate::scene::{Camera, GaussianCloud};

/// A training camera and its horizontally translated companion.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoRig {
    pub left: Camera,
    pub right: Camera,
    /// Translation length, world units.
    pub baseline: f64,
    /// `+1` if the companion sits at the left camera's `+x`, `-1` otherwise.
    pub direction: f64,
}

/// Build the companion of `cams[index]` at `baseline_frac · scene_radius`.
pub fn make_stereo_rig(index: usize, cams: &[Camera], scene_radius: f64, baseline_frac: f64) -> Result<StereoRig> {
    if cams.len() < 2 {
        return Err(Error::Precondition(format!("stereo rig needs at least 2 cameras, got {}", cams.len())));
    }
    if !(baseline_frac > 0.0 && baseline_frac <= 0.2) {
        return Err(Error::Precondition(format!("baseline fraction {baseline_frac} outside (0, 0.2]")));
    }
    let left = cams
        .get(index)
        .ok_or_else(|| Error::Precondition(format!("camera index {index} out of range")))?;
    let c = left.center();
    let nearest = cams
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != index)
        .min_by(|a, b| (a.1.center() - c).norm().total_cmp(&(b.1.center() - c).norm()))
        .map(|(_, cam)| cam.center())
        .unwrap();
    let along = (nearest - c).dot(&left.right_axis());
    let direction = if along < 0.0 { -1.0 } else { 1.0 };
    let baseline = baseline_frac * scene_radius;
    let right = left.with_center(c + left.right_axis() * (direction * baseline));
    Ok(StereoRig {
        left: left.clone(),
        right,
        baseline,
        direction,
    })
}

/// `fx · b / d` where `d > d_min`.
pub fn disparity_to_depth(disparity: &Disparity, fx: f64, baseline: f64, d_min: f64) -> (Raster, Mask) {
    let (h, w) = (disparity.values.height(), disparity.values.width());
    let mut depth = Raster::zeros(h, w, 1);
    let mut valid = Mask::new(h, w, false);
    for y in 0..h {
        for x in 0..w {
            let d = disparity.values.get(x, y, 0);
            if disparity.valid.get(x, y) && d > d_min {
                depth.set(x, y, 0, fx * baseline / d);
                valid.set(x, y, true);
            }
        }
    }
    (depth, valid)
}

/// Which image plays the left member of each stereo pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StereoLeft {
    /// The ground-truth training photo.
    #[default]
    Gt,
    /// A rendering of the current cloud at the training camera.
    Rendered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorParams {
    pub baseline_frac: f64,
    /// Left-right check tolerance, pixels.
    pub tau_lr: f64,
    /// Smallest disparity converted to depth, pixels.
    pub d_min: f64,
    pub left: StereoLeft,
}

impl Default for PriorParams {
    fn default() -> Self {
        Self {
            baseline_frac: 0.03,
            tau_lr: 1.0,
            d_min: 0.05,
            left: StereoLeft::Gt,
        }
    }
}

/// Masked metric depth and normal supervision for one training view.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoPrior {
    /// `H×W×1` depth, world units.
    pub depth: Raster,
    /// `H×W×3` camera-frame normals.
    pub normal: Raster,
    /// Where `normal` is defined.
    pub normal_valid: Mask,
    /// Valid depth ∩ left-right consistent ∩ valid normal.
    pub mask: Mask,
    pub disparity: Disparity,
    pub created_at_iter: usize,
}

/// Match a pair and derive the prior. Images are oriented as captured; a
/// companion on the `-x` side is handled by mirroring both images.
pub fn compute_prior(
    left_img: &Raster,
    right_img: &Raster,
    rig: &StereoRig,
    backend: &StereoBackend,
    params: &PriorParams,
    iter: usize,
) -> Result<StereoPrior> {
    let mirrored = rig.direction < 0.0;
    let (dl, lr) = if mirrored {
        let (dl, dr) = backend.disparity_both(&left_img.flip_horizontal(), &right_img.flip_horizontal())?;
        let lr = consistency_mask(&dl, &dr, params.tau_lr);
        (dl.flip_horizontal(), lr.flip_horizontal())
    } else {
        let (dl, dr) = backend.disparity_both(left_img, right_img)?;
        let lr = consistency_mask(&dl, &dr, params.tau_lr);
        (dl, lr)
    };
    let (depth, depth_valid) = disparity_to_depth(&dl, rig.left.fx(), rig.baseline, params.d_min);
    let (normal, normal_valid) = normal_from_depth(&depth, &depth_valid, &rig.left);
    let mask = depth_valid.and(&lr).and(&normal_valid);
    Ok(StereoPrior {
        depth,
        normal,
        normal_valid,
        mask,
        disparity: dl,
        created_at_iter: iter,
    })
}

/// Whether priors are rebuilt at `iter`.
pub fn should_refresh(iter: usize, start: usize, period: usize) -> bool {
    iter >= start && (iter - start) % period.max(1) == 0
}

/// Rebuild the priors of every training view from the current cloud.
///
/// A view whose matcher fails keeps its previous prior; the number of
/// refreshed views is returned.
#[allow(clippy::too_many_arguments)]
pub fn refresh_priors(
    cloud: &GaussianCloud,
    rigs: &[StereoRig],
    images: &[Raster],
    backend: &StereoBackend,
    params: &PriorParams,
    opts: &RenderOptions,
    iter: usize,
    priors: &mut [Option<StereoPrior>],
) -> usize {
    let mut refreshed = 0;
    for ((rig, img), slot) in rigs.iter().zip(images).zip(priors.iter_mut()) {
        let right = render(cloud, &rig.right, opts).color;
        let left = match params.left {
            StereoLeft::Gt => img.clone(),
            StereoLeft::Rendered => render(cloud, &rig.left, opts).color,
        };
        match compute_prior(&left, &right, rig, backend, params, iter) {
            Ok(p) => {
                *slot = Some(p);
                refreshed += 1;
            }
            Err(e) => warn!("stereo prior refresh at iteration {iter} skipped: {e}"),
        }
    }
    refreshed
}
