//! Depth-sorted alpha blending of every per-pixel channel, and its adjoint.
//!
//! Primitives are sorted once per view by camera-space depth of their center
//! (ties by index) and binned into square tiles. Each pixel blends the
//! primitives whose 2-D footprint weight reaches `g_min`, front to back, until
//! transmittance drops below `t_min`. Color, normal, plane distance and feature
//! channels all use the same weights `T_i α_i`.

mod backward;
mod forward;
pub mod geometry;
#[cfg(test)]
mod tests;

use nalgebra::{Matrix2, Vector2, Vector3, Vector4};

pub use backward::backward;
pub use forward::render;
pub use geometry::{normal_from_depth, normal_from_depth_backward, plane_distance, unbiased_depth, GRAZING_EPS};

use crate::image::{Mask, Raster};
use crate::scene::{Feature, GaussianCloud, FEATURE_DIM};

/// Tunables of the rasterizer.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub background: [f64; 3],
    /// Minimum 2-D Gaussian weight for a primitive to touch a pixel.
    pub g_min: f64,
    /// Early termination threshold on transmittance.
    pub t_min: f64,
    /// Accumulated alpha above which geometry channels are valid.
    pub alpha_valid: f64,
    /// Near plane as a fraction of the scene radius.
    pub near_fraction: f64,
    /// Screen-space dilation added to the projected covariance diagonal (px²).
    pub dilation: f64,
    pub grazing_eps: f64,
    pub tile_size: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            background: [0.0; 3],
            g_min: 1.0 / 255.0,
            t_min: 1e-4,
            alpha_valid: 0.5,
            near_fraction: 0.01,
            dilation: 0.3,
            grazing_eps: GRAZING_EPS,
            tile_size: 16,
        }
    }
}

impl RenderOptions {
    pub fn near(&self, cloud: &GaussianCloud) -> f64 {
        self.near_fraction * cloud.scene_radius()
    }
}

/// Rendered rasters of one view.
#[derive(Debug, Clone)]
pub struct RasterBundle {
    /// `H×W×3` blended color including background.
    pub color: Raster,
    /// `H×W×1` accumulated opacity `1 - T_final`.
    pub alpha: Raster,
    /// `H×W×3` camera-frame rendered normal, unit length where `geometry_valid`.
    pub normal: Raster,
    /// `H×W×1` blended plane distance.
    pub distance: Raster,
    /// `H×W×1` unbiased depth (ray/plane intersection), valid where `depth_valid`.
    pub depth: Raster,
    /// `H×W×8` blended features.
    pub feature: Raster,
    /// `H×W×3` normals derived from `depth`, valid where `depth_normal_valid`.
    pub depth_normal: Raster,
    /// `H×W×1` alpha-normalised blend of center depths; diagnostic only, not differentiated.
    pub mean_depth: Raster,
    pub geometry_valid: Mask,
    pub depth_valid: Mask,
    pub depth_normal_valid: Mask,
    pub(crate) cache: RenderCache,
}

impl RasterBundle {
    pub fn height(&self) -> usize {
        self.color.height()
    }

    pub fn width(&self) -> usize {
        self.color.width()
    }

    /// Blend weights and transmittances `(primitive, α_i, T_i)` of one pixel,
    /// in blend order, plus the final transmittance.
    pub fn contributors(&self, x: usize, y: usize) -> (Vec<(usize, f64, f64)>, f64) {
        let c = &self.cache;
        let (tile, local) = c.locate(x, y);
        let t = &c.tiles[tile];
        let range = t.offsets[local] as usize..t.offsets[local + 1] as usize;
        let list = t.contribs[range]
            .iter()
            .map(|k| (c.splats[t.splats[k.local as usize] as usize].index, k.alpha, k.transmittance))
            .collect();
        (list, t.final_t[local])
    }

    /// Number of primitives that contributed to at least one pixel.
    pub fn visible_count(&self) -> usize {
        self.cache.visible().iter().filter(|&&v| v).count()
    }
}

/// Upstream gradients with respect to every rendered channel. Unused
/// channels may stay zero.
#[derive(Debug, Clone)]
pub struct RasterGrads {
    pub color: Raster,
    pub alpha: Raster,
    pub normal: Raster,
    pub distance: Raster,
    pub depth: Raster,
    pub feature: Raster,
    pub depth_normal: Raster,
}

impl RasterGrads {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            color: Raster::zeros(height, width, 3),
            alpha: Raster::zeros(height, width, 1),
            normal: Raster::zeros(height, width, 3),
            distance: Raster::zeros(height, width, 1),
            depth: Raster::zeros(height, width, 1),
            feature: Raster::zeros(height, width, FEATURE_DIM),
            depth_normal: Raster::zeros(height, width, 3),
        }
    }

    pub fn for_bundle(bundle: &RasterBundle) -> Self {
        Self::zeros(bundle.height(), bundle.width())
    }
}

/// Gradient of the loss with respect to one primitive's raw parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrimitiveGrad {
    pub position: Vector3<f64>,
    pub rotation: Vector4<f64>,
    pub log_scales: Vector3<f64>,
    pub opacity_logit: f64,
    pub color: Vector3<f64>,
    pub feature: Feature,
}

impl PrimitiveGrad {
    pub fn add_assign(&mut self, o: &PrimitiveGrad) {
        self.position += o.position;
        self.rotation += o.rotation;
        self.log_scales += o.log_scales;
        self.opacity_logit += o.opacity_logit;
        self.color += o.color;
        for (a, b) in self.feature.iter_mut().zip(&o.feature) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.log_scales.iter().all(|v| v.is_finite())
            && self.opacity_logit.is_finite()
            && self.color.iter().all(|v| v.is_finite())
            && self.feature.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        *self == PrimitiveGrad::default()
    }
}

/// Per-primitive gradients from one or more backward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderGradients {
    pub primitives: Vec<PrimitiveGrad>,
    /// Norm of the screen-space mean gradient in normalised device units, per view.
    pub screen_grad: Vec<f64>,
    /// Number of views in which each primitive contributed to some pixel.
    pub visible_views: Vec<u32>,
}

impl RenderGradients {
    pub fn zeros(n: usize) -> Self {
        Self {
            primitives: vec![PrimitiveGrad::default(); n],
            screen_grad: vec![0.0; n],
            visible_views: vec![0; n],
        }
    }

    pub fn accumulate(&mut self, other: &RenderGradients) {
        for (a, b) in self.primitives.iter_mut().zip(&other.primitives) {
            a.add_assign(b);
        }
        for (a, b) in self.screen_grad.iter_mut().zip(&other.screen_grad) {
            *a += b;
        }
        for (a, b) in self.visible_views.iter_mut().zip(&other.visible_views) {
            *a += b;
        }
    }

    /// Index of the first primitive with a non-finite gradient.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.primitives.iter().position(|g| !g.is_finite())
    }
}

/// Per-view preprocessed primitive.
#[derive(Debug, Clone)]
pub(crate) struct Splat {
    pub index: usize,
    pub mean: Vector2<f64>,
    pub conic: Matrix2<f64>,
    pub opacity: f64,
    pub color: Vector3<f64>,
    pub normal_cam: Vector3<f64>,
    pub distance: f64,
    pub feature: Feature,
    pub depth: f64,
    pub proj: crate::scene::Projection,
    pub axis: usize,
    pub sign: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Contrib {
    /// Index into the tile's splat list.
    pub local: u32,
    pub gauss: f64,
    pub alpha: f64,
    pub transmittance: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct TileCache {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    /// Indices into `RenderCache::splats`, in blend order.
    pub splats: Vec<u32>,
    pub offsets: Vec<u32>,
    pub contribs: Vec<Contrib>,
    pub final_t: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct RenderCache {
    pub camera: crate::scene::Camera,
    pub splats: Vec<Splat>,
    pub tiles: Vec<TileCache>,
    pub tiles_x: usize,
    pub tile_size: usize,
    pub primitive_count: usize,
    pub background: [f64; 3],
    /// Raw blended normal and distance, before normalisation.
    pub normal_raw: Raster,
    pub distance_raw: Raster,
}

impl RenderCache {
    pub fn locate(&self, x: usize, y: usize) -> (usize, usize) {
        let tile = (y / self.tile_size) * self.tiles_x + x / self.tile_size;
        let t = &self.tiles[tile];
        (tile, (y - t.y0) * (t.x1 - t.x0) + (x - t.x0))
    }

    pub fn visible(&self) -> Vec<bool> {
        let mut v = vec![false; self.primitive_count];
        for t in &self.tiles {
            for c in &t.contribs {
                v[self.splats[t.splats[c.local as usize] as usize].index] = true;
            }
        }
        v
    }
}
