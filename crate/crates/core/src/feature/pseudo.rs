use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use rand::Rng;

use crate::error::{Error, Result};
use crate::scene::Camera;

/// A virtual camera without a photo, paired with a training view.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoView {
    pub camera: Camera,
    /// Index of the training view the pseudo view is compared against.
    pub reference: usize,
}

/// Interpolate between `cams[i]` and `cams[j]` at `t`, then move the center by
/// `jitter`. Intrinsics come from `cams[i]`; the reference is the nearer endpoint.
pub fn interpolate_view(cams: &[Camera], i: usize, j: usize, t: f64, jitter: Vector3<f64>) -> Result<PseudoView> {
    let (a, b) = (&cams[i], &cams[j]);
    let qa = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*a.rotation()));
    let qb = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*b.rotation()));
    let q = qa.try_slerp(&qb, t, 1e-12).unwrap_or(if t < 0.5 { qa } else { qb });
    let center = a.center() * (1.0 - t) + b.center() * t + jitter;
    let camera = Camera::new(
        a.fx(),
        a.fy(),
        a.cx(),
        a.cy(),
        a.width(),
        a.height(),
        q.to_rotation_matrix().into_inner(),
        center,
    )?;
    let reference = if t <= 0.5 { i } else { j };
    Ok(PseudoView { camera, reference })
}

/// Pick two distinct cameras uniformly, `t ~ U(0.2, 0.8)`, slerp the
/// orientation and jitter the center uniformly inside a ball of
/// `0.02 · scene_radius`.
pub fn sample_pseudo_view<R: Rng>(cams: &[Camera], scene_radius: f64, rng: &mut R) -> Result<PseudoView> {
    if cams.len() < 2 {
        return Err(Error::Precondition(format!("pseudo views need at least 2 cameras, got {}", cams.len())));
    }
    let i = rng.gen_range(0..cams.len());
    let mut j = rng.gen_range(0..cams.len() - 1);
    if j >= i {
        j += 1;
    }
    let t = rng.gen_range(0.2..0.8);
    let jitter = loop {
        let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if v.norm_squared() <= 1.0 {
            break v * (0.02 * scene_radius);
        }
    };
    interpolate_view(cams, i, j, t, jitter)
}
