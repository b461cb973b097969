use nalgebra::{Vector3, Vector4};

use super::gaussian::{GaussianPrimitive, MIN_SCALE};
use crate::error::{Error, Result};
use crate::spatial::KdTree;

/// Opacity given to primitives seeded from an initial point cloud.
pub const INIT_OPACITY: f64 = 0.1;

/// The optimisable set of primitives plus the scene scale they live in.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCloud {
    pub primitives: Vec<GaussianPrimitive>,
    scene_radius: f64,
}

impl GaussianCloud {
    pub fn new(primitives: Vec<GaussianPrimitive>, scene_radius: f64) -> Result<Self> {
        if primitives.is_empty() {
            return Err(Error::Precondition("cloud must contain at least one primitive".into()));
        }
        if !(scene_radius > 0.0 && scene_radius.is_finite()) {
            return Err(Error::Precondition(format!("scene radius {scene_radius} must be positive")));
        }
        Ok(Self {
            primitives,
            scene_radius,
        })
    }

    /// Seed one isotropic primitive per point.
    ///
    /// Scale is the distance to the third nearest neighbour, color falls back
    /// to mid-gray, rotation is identity and features start at zero.
    pub fn from_points(points: &[Vector3<f64>], colors: Option<&[Vector3<f64>]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        if let Some(c) = colors {
            if c.len() != points.len() {
                return Err(Error::DimensionMismatch {
                    expected: format!("{} colors", points.len()),
                    actual: c.len().to_string(),
                });
            }
        }
        let radius = bounding_radius(points);
        let tree = KdTree::build(points);
        let fallback = (radius * 0.01).max(MIN_SCALE);
        let primitives = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                // neighbours include the point itself at distance 0
                let knn = tree.k_nearest(p, 4);
                let scale = knn
                    .get(3)
                    .map(|&(_, d2)| d2.sqrt())
                    .filter(|s| *s >= MIN_SCALE)
                    .unwrap_or(fallback);
                let color = colors.map(|c| c[i]).unwrap_or_else(|| Vector3::repeat(0.5));
                GaussianPrimitive::new(
                    *p,
                    Vector4::new(1.0, 0.0, 0.0, 0.0),
                    Vector3::repeat(scale),
                    INIT_OPACITY,
                    color,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(primitives, radius.max(MIN_SCALE))
    }

    pub fn scene_radius(&self) -> f64 {
        self.scene_radius
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.primitives.iter().map(|g| g.position).collect()
    }
}

/// Radius of the centroid-centred sphere enclosing all points.
pub fn bounding_radius(points: &[Vector3<f64>]) -> f64 {
    let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    points.iter().map(|p| (p - centroid).norm()).fold(0.0, f64::max)
}
