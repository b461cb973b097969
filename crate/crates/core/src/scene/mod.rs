//! Gaussian primitives, cameras and projection.

mod camera;
mod cloud;
mod gaussian;
mod projection;

pub use camera::{Camera, CameraSpec};
pub use cloud::{bounding_radius, GaussianCloud, INIT_OPACITY};
pub use gaussian::{
    covariance, gaussian_eval, logit, quat_to_matrix, quat_to_matrix_backward, sigmoid, surfel_normal,
    Feature, GaussianPrimitive, FEATURE_DIM, MIN_SCALE,
};
pub(crate) use gaussian::surfel_normal_parts;
pub use projection::{project, projection_jacobian, Projection};
