use nalgebra::{Matrix3, Vector3, Vector4};

use super::camera::Camera;
use crate::error::{Error, Result};

/// Length of the distilled per-primitive feature vector.
pub const FEATURE_DIM: usize = 8;

/// Smallest admissible per-axis scale, in world units.
pub const MIN_SCALE: f64 = 1e-7;

pub type Feature = [f64; FEATURE_DIM];

/// One flattened Gaussian. All fields are raw optimizer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive {
    pub position: Vector3<f64>,
    /// Quaternion `(w, x, y, z)`; normalised before use.
    pub rotation: Vector4<f64>,
    pub log_scales: Vector3<f64>,
    pub opacity_logit: f64,
    pub color: Vector3<f64>,
    pub feature: Feature,
}

impl GaussianPrimitive {
    /// Build a primitive from activated values, validating the invariants.
    pub fn new(
        position: Vector3<f64>,
        rotation: Vector4<f64>,
        scales: Vector3<f64>,
        opacity: f64,
        color: Vector3<f64>,
    ) -> Result<Self> {
        if scales.iter().any(|&s| !(s >= MIN_SCALE)) {
            return Err(Error::InvalidPrimitive(format!(
                "scales {scales:?} below floor {MIN_SCALE}"
            )));
        }
        if !(opacity > 0.0 && opacity < 1.0) {
            return Err(Error::InvalidPrimitive(format!("opacity {opacity} outside (0, 1)")));
        }
        let norm = rotation.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidPrimitive("degenerate rotation quaternion".into()));
        }
        Ok(Self {
            position,
            rotation: rotation / norm,
            log_scales: scales.map(f64::ln),
            opacity_logit: logit(opacity),
            color,
            feature: [0.0; FEATURE_DIM],
        })
    }

    pub fn scales(&self) -> Vector3<f64> {
        self.log_scales.map(f64::exp)
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        quat_to_matrix(&self.rotation)
    }

    /// Index of the smallest scale axis; ties resolve to the lowest index.
    pub fn min_scale_axis(&self) -> usize {
        let s = &self.log_scales;
        let mut k = 0;
        for i in 1..3 {
            if s[i] < s[k] {
                k = i;
            }
        }
        k
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.log_scales.iter().all(|v| v.is_finite())
            && self.opacity_logit.is_finite()
            && self.color.iter().all(|v| v.is_finite())
            && self.feature.iter().all(|v| v.is_finite())
    }
}

/// `Σ = R S Sᵀ Rᵀ` with `S = diag(exp(log_scales))`.
pub fn covariance(g: &GaussianPrimitive) -> Matrix3<f64> {
    let r = g.rotation_matrix();
    let s2 = g.scales().map(|s| s * s);
    r * Matrix3::from_diagonal(&s2) * r.transpose()
}

/// Unnormalised Gaussian density `exp(-½ (x-μ)ᵀ Σ⁻¹ (x-μ))`.
pub fn gaussian_eval(g: &GaussianPrimitive, x: &Vector3<f64>) -> f64 {
    // Σ⁻¹ = R S⁻² Rᵀ, avoiding a general inverse
    let r = g.rotation_matrix();
    let local = r.transpose() * (x - g.position);
    let s = g.scales();
    let m = (local.x / s.x).powi(2) + (local.y / s.y).powi(2) + (local.z / s.z).powi(2);
    (-0.5 * m).exp()
}

/// World-space surfel normal: the minimum-scale axis flipped to face `cam`.
pub fn surfel_normal(g: &GaussianPrimitive, cam: &Camera) -> Vector3<f64> {
    surfel_normal_parts(g, cam).0
}

/// Normal together with the chosen axis and the applied sign.
pub(crate) fn surfel_normal_parts(g: &GaussianPrimitive, cam: &Camera) -> (Vector3<f64>, usize, f64) {
    let axis = g.min_scale_axis();
    let n: Vector3<f64> = g.rotation_matrix().column(axis).into_owned();
    let to_cam = cam.center() - g.position;
    let sign = if n.dot(&to_cam) >= 0.0 { 1.0 } else { -1.0 };
    (n * sign, axis, sign)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Rotation matrix of the normalised quaternion `(w, x, y, z)`.
pub fn quat_to_matrix(q: &Vector4<f64>) -> Matrix3<f64> {
    let q = q / q.norm();
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Pull a gradient on the rotation matrix back to the raw (unnormalised) quaternion.
pub fn quat_to_matrix_backward(q_raw: &Vector4<f64>, d_r: &Matrix3<f64>) -> Vector4<f64> {
    let norm = q_raw.norm();
    let q = q_raw / norm;
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let g = |i: usize, j: usize| d_r[(i, j)];
    let dw = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let dx = 2.0
        * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0)
            + w * g(2, 1)
            - 2.0 * x * g(2, 2));
    let dy = 2.0
        * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0)
            + z * g(2, 1)
            - 2.0 * y * g(2, 2));
    let dz = 2.0
        * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1)
            + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1));
    let d_unit = Vector4::new(dw, dx, dy, dz);
    // through q = q_raw / |q_raw|
    (d_unit - q * q.dot(&d_unit)) / norm
}
