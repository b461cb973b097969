//! Sparse-view surface reconstruction with flattened Gaussian surfels.
//!
//! The crate is organised bottom-up:
//!
//! - [`scene`]: Gaussian primitives, cameras and projection math.
//! - [`raster`]: depth-sorted alpha blending of color, normal, plane distance,
//!   unbiased depth and feature channels, with an exact reverse-mode pass.
//! - [`stereo`]: synthetic stereo rigs, block matching and metric depth/normal priors.
//! - [`feature`]: per-view feature extraction, depth-based warping and the
//!   feature consistency losses used on training and pseudo views.
//! - [`train`]: loss assembly, schedules, the adaptive-moment optimizer and
//!   density control.
//! - [`mesh`]: TSDF fusion, marching cubes, Chamfer distance, PSNR and SSIM.
//! - [`io`]: FRAS rasters, PLY, scene manifests, synthetic scenes and run configuration.

pub mod error;
pub mod feature;
pub mod image;
pub mod io;
pub mod mesh;
pub mod pipeline;
pub mod raster;
pub mod scene;
pub mod spatial;
pub mod stereo;
pub mod train;

pub use error::{Error, Result};
pub use image::{Mask, Raster};
pub use raster::{render, RasterBundle, RasterGrads, RenderOptions};
pub use scene::{Camera, GaussianCloud, GaussianPrimitive, FEATURE_DIM};
