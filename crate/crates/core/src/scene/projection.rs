use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use super::camera::Camera;
use super::gaussian::{covariance, GaussianPrimitive};

/// Screen-space footprint of one primitive in one view.
#[derive(Debug, Clone)]
pub struct Projection {
    pub mean_2d: Vector2<f64>,
    pub cov_2d: Matrix2<f64>,
    /// Camera-space z of the center.
    pub depth_cam: f64,
    pub(crate) cam_pos: Vector3<f64>,
    pub(crate) jacobian: Matrix2x3<f64>,
    pub(crate) cov_cam: Matrix3<f64>,
}

/// Perspective EWA projection with diagonal dilation `dilation` (px²).
///
/// Returns `None` when the center is not beyond `near`.
pub fn project(g: &GaussianPrimitive, cam: &Camera, near: f64, dilation: f64) -> Option<Projection> {
    let p = cam.world_to_camera(&g.position);
    if !(p.z > near) {
        return None;
    }
    let w = cam.rotation().transpose();
    let cov_cam = w * covariance(g) * w.transpose();
    let jacobian = projection_jacobian(cam, &p);
    let cov_2d = jacobian * cov_cam * jacobian.transpose() + Matrix2::identity() * dilation;
    Some(Projection {
        mean_2d: cam.project_camera(&p),
        cov_2d,
        depth_cam: p.z,
        cam_pos: p,
        jacobian,
        cov_cam,
    })
}

/// Jacobian of the pinhole map at camera-space point `p`.
pub fn projection_jacobian(cam: &Camera, p: &Vector3<f64>) -> Matrix2x3<f64> {
    let iz = 1.0 / p.z;
    let iz2 = iz * iz;
    Matrix2x3::new(
        cam.fx() * iz,
        0.0,
        -cam.fx() * p.x * iz2,
        0.0,
        cam.fy() * iz,
        -cam.fy() * p.y * iz2,
    )
}
