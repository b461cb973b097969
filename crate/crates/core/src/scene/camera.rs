use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-6;

/// Pinhole camera with a camera-to-world rotation and a world-space center.
///
/// Camera frame: +x right, +y down, +z forward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraSpec", into = "CameraSpec")]
pub struct Camera {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    rotation: Matrix3<f64>,
    center: Vector3<f64>,
}

/// Plain serialisable form of a [`Camera`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Camera-to-world rotation, row-major.
    pub rotation: [[f64; 3]; 3],
    pub center: [f64; 3],
}

impl TryFrom<CameraSpec> for Camera {
    type Error = Error;

    fn try_from(s: CameraSpec) -> Result<Self> {
        let r = Matrix3::from_fn(|i, j| s.rotation[i][j]);
        Camera::new(s.fx, s.fy, s.cx, s.cy, s.width, s.height, r, Vector3::from(s.center))
    }
}

impl From<Camera> for CameraSpec {
    fn from(c: Camera) -> Self {
        CameraSpec {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            rotation: std::array::from_fn(|i| std::array::from_fn(|j| c.rotation[(i, j)])),
            center: [c.center.x, c.center.y, c.center.z],
        }
    }
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        rotation: Matrix3<f64>,
        center: Vector3<f64>,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidCamera(format!("focal lengths must be positive ({fx}, {fy})")));
        }
        if width < 8 || height < 8 {
            return Err(Error::InvalidCamera(format!("image {width}x{height} smaller than 8x8")));
        }
        let gram = rotation.transpose() * rotation;
        if (gram - Matrix3::identity()).abs().max() > ORTHONORMAL_TOL {
            return Err(Error::InvalidCamera("rotation is not orthonormal".into()));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidCamera(format!("rotation determinant {det:.6} != +1")));
        }
        if !center.iter().all(|v| v.is_finite()) || ![cx, cy].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidCamera("non-finite center or principal point".into()));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation,
            center,
        })
    }

    /// Camera at `eye` looking at `target`, with image-down roughly along `-up`.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        fx: f64,
        fy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let z = (target - eye).normalize();
        let x = (-up).cross(&z);
        if x.norm() < 1e-9 {
            return Err(Error::InvalidCamera("up vector parallel to viewing direction".into()));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let r = Matrix3::from_columns(&[x, y, z]);
        Camera::new(
            fx,
            fy,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
            r,
            eye,
        )
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }

    /// Camera-to-world rotation `R_c`.
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    /// World-space camera center `T_c`.
    pub fn center(&self) -> Vector3<f64> {
        self.center
    }

    /// Unit x-axis of the camera frame, in world coordinates.
    pub fn right_axis(&self) -> Vector3<f64> {
        self.rotation.column(0).into_owned()
    }

    pub fn forward_axis(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.center)
    }

    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.center
    }

    /// Project a camera-frame point to pixel coordinates (no depth check).
    pub fn project_camera(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Camera-frame ray through pixel `(u, v)` scaled to unit depth (`z = 1`).
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Camera-frame point at pixel `(u, v)` with z-depth `depth`.
    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        self.pixel_ray(u, v) * depth
    }

    /// Copy with the same intrinsics and orientation at a new center.
    pub fn with_center(&self, center: Vector3<f64>) -> Self {
        Self { center, ..self.clone() }
    }

    pub fn same_intrinsics(&self, other: &Camera) -> bool {
        self.fx == other.fx
            && self.fy == other.fy
            && self.cx == other.cx
            && self.cy == other.cy
            && self.width == other.width
            && self.height == other.height
    }
}
