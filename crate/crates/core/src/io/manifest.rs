//! Scene manifests: posed photographs plus an initial point cloud, or a
//! generated synthetic scene with ground truth.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::ply::read_points;
use super::synthetic::{SyntheticScene, SyntheticSpec};
use crate::error::{Error, Result};
use crate::image::{Mask, Raster};
use crate::mesh::TriangleMesh;
use crate::scene::{Camera, GaussianCloud};

/// File name looked up when a directory is given.
pub const MANIFEST_NAME: &str = "scene.toml";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEntry {
    /// PNG or PPM, relative to the manifest.
    pub image: PathBuf,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Camera-to-world rotation, row-major.
    pub rotation: [[f64; 3]; 3],
    pub center: [f64; 3],
    #[serde(default)]
    pub split: Split,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub views: Vec<ViewEntry>,
    pub init_points: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
}

/// Oracle data available for generated scenes, indexed like the dataset views.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub scene: SyntheticScene,
    pub depths: Vec<Raster>,
    pub valid: Vec<Mask>,
    pub normals: Vec<Raster>,
    /// Dense samples of the surface seen by the training views.
    pub reference_points: Vec<Vector3<f64>>,
    pub mesh: TriangleMesh,
}

#[derive(Debug, Clone)]
pub struct SceneDataset {
    pub images: Vec<Raster>,
    pub cameras: Vec<Camera>,
    pub init_points: Vec<Vector3<f64>>,
    pub init_colors: Option<Vec<Vector3<f64>>>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub ground_truth: Option<GroundTruth>,
}

impl SceneDataset {
    pub fn train_images(&self) -> Vec<Raster> {
        self.train.iter().map(|&i| self.images[i].clone()).collect()
    }

    pub fn train_cameras(&self) -> Vec<Camera> {
        self.train.iter().map(|&i| self.cameras[i].clone()).collect()
    }

    /// Primitives seeded from the initial points.
    pub fn init_cloud(&self) -> Result<GaussianCloud> {
        GaussianCloud::from_points(&self.init_points, self.init_colors.as_deref())
    }

    /// Build a dataset from generated synthetic data. Training views come first.
    pub fn from_synthetic(spec: &SyntheticSpec) -> Result<Self> {
        let d = spec.generate()?;
        let n_train = d.train_cameras.len();
        let views: Vec<_> = d.train_views.into_iter().chain(d.test_views).collect();
        let cameras: Vec<_> = d.train_cameras.into_iter().chain(d.test_cameras).collect();
        let mesh = d.scene.mesh();
        Ok(Self {
            images: views.iter().map(|v| v.image.clone()).collect(),
            train: (0..n_train).collect(),
            test: (n_train..cameras.len()).collect(),
            cameras,
            init_points: d.init_points,
            init_colors: Some(d.init_colors),
            ground_truth: Some(GroundTruth {
                depths: views.iter().map(|v| v.depth.clone()).collect(),
                valid: views.iter().map(|v| v.valid.clone()).collect(),
                normals: views.iter().map(|v| v.normal.clone()).collect(),
                reference_points: d.reference_points,
                scene: d.scene,
                mesh,
            }),
        })
    }
}

/// Read a PNG or PPM as an `H×W×3` raster in `[0, 1]`.
pub fn read_image(path: &Path) -> Result<Raster> {
    let img = image::open(path)?.into_rgb32f();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Raster::from_vec(h, w, 3, img.into_raw().into_iter().map(f64::from).collect())
}

/// Write a 1- or 3-channel raster as an 8-bit PNG, clamping to `[0, 1]`.
pub fn write_png(raster: &Raster, path: &Path) -> Result<()> {
    let (h, w, c) = (raster.height(), raster.width(), raster.channels());
    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let bytes: Vec<u8> = raster.data().iter().map(|&v| q(v)).collect();
    let (wu, hu) = (w as u32, h as u32);
    match c {
        1 => image::GrayImage::from_raw(wu, hu, bytes).map(|i| i.save(path)),
        3 => image::RgbImage::from_raw(wu, hu, bytes).map(|i| i.save(path)),
        _ => {
            return Err(Error::DimensionMismatch {
                expected: "1 or 3 channels".into(),
                actual: raster.shape_string(),
            })
        }
    }
    .expect("buffer size matches dimensions")?;
    Ok(())
}

fn view_error(i: usize, entry: Option<&ViewEntry>, message: impl ToString) -> Error {
    let view = match entry {
        Some(e) => format!("view {i} ({})", e.image.display()),
        None => format!("view {i}"),
    };
    Error::SceneLoad {
        view,
        message: message.to_string(),
    }
}

/// Load a manifest file, or `scene.toml` inside a directory.
pub fn load_scene(path: &Path) -> Result<SceneDataset> {
    let file = if path.is_dir() { path.join(MANIFEST_NAME) } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::SceneLoad {
        view: "manifest".into(),
        message: format!("{}: {e}", file.display()),
    })?;
    let base = file.parent().unwrap_or(Path::new("."));
    load_manifest(&manifest, base)
}

/// Resolve a parsed manifest with relative paths taken from `base`.
pub fn load_manifest(manifest: &Manifest, base: &Path) -> Result<SceneDataset> {
    let manifest_error = |m: &str| Error::SceneLoad {
        view: "manifest".into(),
        message: m.into(),
    };
    if let Some(spec) = &manifest.synthetic {
        if !manifest.views.is_empty() || manifest.init_points.is_some() {
            return Err(manifest_error("a synthetic scene cannot also list views or init_points"));
        }
        return SceneDataset::from_synthetic(spec);
    }
    if manifest.views.len() < 2 {
        return Err(manifest_error(&format!("at least 2 cameras are required, found {}", manifest.views.len())));
    }
    let mut images = Vec::new();
    let mut cameras = Vec::new();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, v) in manifest.views.iter().enumerate() {
        let img = read_image(&base.join(&v.image)).map_err(|e| view_error(i, Some(v), e))?;
        if let Some(first) = images.first() {
            img.ensure_same_shape(first).map_err(|e| view_error(i, Some(v), e))?;
        }
        let r = Matrix3::from_fn(|a, b| v.rotation[a][b]);
        let cam = Camera::new(v.fx, v.fy, v.cx, v.cy, img.width(), img.height(), r, Vector3::from(v.center))
            .map_err(|e| view_error(i, Some(v), e))?;
        match v.split {
            Split::Train => train.push(i),
            Split::Test => test.push(i),
        }
        images.push(img);
        cameras.push(cam);
    }
    if train.len() < 2 {
        return Err(manifest_error("at least 2 training views are required"));
    }
    let ply = manifest.init_points.as_ref().ok_or_else(|| manifest_error("missing init_points"))?;
    let (init_points, init_colors) = read_points(&base.join(ply))?;
    if init_points.is_empty() {
        return Err(manifest_error("init_points is empty"));
    }
    Ok(SceneDataset {
        images,
        cameras,
        init_points,
        init_colors,
        train,
        test,
        ground_truth: None,
    })
}
