//! End-to-end operations shared by the command-line tool and the tests.

use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::{Mask, Raster};
use crate::io::{
    load_scene, read_fras, read_image, read_mesh, save_checkpoint, write_fras, write_png, MeshConfig, RunConfig, SceneDataset,
    MANIFEST_NAME,
};
use crate::mesh::{chamfer, fuse_depths, psnr, ssim, Chamfer, TriangleMesh};
use crate::raster::{render, RenderOptions};
use crate::scene::{Camera, GaussianCloud};
use crate::stereo::{compute_prior, make_stereo_rig, StereoLeft};
use crate::train::{Trainer, CSV_HEADER};

pub const LOSS_CSV: &str = "losses.csv";
pub const FINAL_CHECKPOINT: &str = "final.ply";

pub fn checkpoint_name(iter: usize) -> String {
    format!("checkpoint_{iter:06}.ply")
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Build a trainer for the training split of `dataset`.
pub fn make_trainer(dataset: &SceneDataset, cfg: &RunConfig) -> Result<Trainer> {
    cfg.validate()?;
    Trainer::new(
        dataset.init_cloud()?,
        dataset.train_images(),
        dataset.train_cameras(),
        cfg.train.clone(),
        cfg.backends.stereo(),
        &cfg.backends.features(),
    )
}

/// Train to completion, streaming the loss CSV and writing periodic and
/// final checkpoints into `out`.
pub fn train_to_dir(dataset: &SceneDataset, cfg: &RunConfig, out: &Path) -> Result<Trainer> {
    create_dir(out)?;
    let mut trainer = make_trainer(dataset, cfg)?;
    let cfg_path = out.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml()?).map_err(|e| Error::io(&cfg_path, e))?;
    let csv_path = out.join(LOSS_CSV);
    let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut csv = std::io::BufWriter::new(file);
    writeln!(csv, "{CSV_HEADER}").map_err(|e| Error::io(&csv_path, e))?;
    let every = cfg.output.checkpoint_every;
    while !trainer.is_done() {
        let report = trainer.step()?;
        writeln!(csv, "{}", report.csv_row()).map_err(|e| Error::io(&csv_path, e))?;
        let done = trainer.iter;
        if every > 0 && done % every == 0 && !trainer.is_done() {
            save_checkpoint(&out.join(checkpoint_name(done)), &trainer.cloud, done, Some(&trainer.adam))?;
            info!("iteration {done}: {} primitives, total loss {:.5}", trainer.cloud.len(), report.total);
        }
    }
    csv.flush().map_err(|e| Error::io(&csv_path, e))?;
    save_checkpoint(&out.join(FINAL_CHECKPOINT), &trainer.cloud, trainer.iter, Some(&trainer.adam))?;
    Ok(trainer)
}

fn depth_preview(depth: &Raster, valid: &Mask) -> Raster {
    let vals: Vec<f64> = (0..depth.height())
        .flat_map(|y| (0..depth.width()).map(move |x| (x, y)))
        .filter(|&(x, y)| valid.get(x, y))
        .map(|(x, y)| depth.get(x, y, 0))
        .collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    Raster::from_fn(depth.height(), depth.width(), 1, |x, y, _| {
        if valid.get(x, y) {
            1.0 - 0.9 * (depth.get(x, y, 0) - lo) / span
        } else {
            0.0
        }
    })
}

/// Render `cam` and write color, depth, normal and alpha rasters.
pub fn render_to_dir(cloud: &GaussianCloud, cam: &Camera, opts: &RenderOptions, out: &Path, previews: bool) -> Result<()> {
    create_dir(out)?;
    let b = render(cloud, cam, opts);
    write_fras(&b.color, out.join("color.fras"))?;
    write_fras(&b.depth, out.join("depth.fras"))?;
    write_fras(&b.normal, out.join("normal.fras"))?;
    write_fras(&b.alpha, out.join("alpha.fras"))?;
    if previews {
        write_png(&b.color, &out.join("color.png"))?;
        write_png(&depth_preview(&b.depth, &b.depth_valid), &out.join("depth.png"))?;
        write_png(&b.normal.map(|v| 0.5 * (1.0 - v)), &out.join("normal.png"))?;
    }
    Ok(())
}

/// Compute one stereo prior per training view and write depth, normal and
/// mask rasters as `prior_<view>_{depth,normal,mask}.fras`. Returns how many
/// views produced a prior.
pub fn priors_to_dir(cloud: &GaussianCloud, dataset: &SceneDataset, cfg: &RunConfig, out: &Path) -> Result<usize> {
    create_dir(out)?;
    let cams = dataset.train_cameras();
    let images = dataset.train_images();
    let opts = RenderOptions {
        background: cfg.train.background,
        ..Default::default()
    };
    let backend = cfg.backends.stereo();
    let params = &cfg.train.prior;
    let mut written = 0;
    for (k, (&view, img)) in dataset.train.iter().zip(&images).enumerate() {
        let rig = make_stereo_rig(k, &cams, cloud.scene_radius(), params.baseline_frac)?;
        let right = render(cloud, &rig.right, &opts).color;
        let left = match params.left {
            StereoLeft::Gt => img.clone(),
            StereoLeft::Rendered => render(cloud, &rig.left, &opts).color,
        };
        match compute_prior(&left, &right, &rig, &backend, params, 0) {
            Ok(p) => {
                write_fras(&p.depth, out.join(format!("prior_{view}_depth.fras")))?;
                write_fras(&p.normal, out.join(format!("prior_{view}_normal.fras")))?;
                write_fras(&p.mask.to_raster(), out.join(format!("prior_{view}_mask.fras")))?;
                written += 1;
            }
            Err(e) => log::warn!("view {view}: no prior: {e}"),
        }
    }
    Ok(written)
}

/// Fuse rendered depths at `cams` into a mesh. The voxel size in `cfg` is a
/// fraction of the scene radius.
pub fn extract_mesh(cloud: &GaussianCloud, cams: &[Camera], opts: &RenderOptions, cfg: &MeshConfig) -> TriangleMesh {
    let renders: Vec<_> = cams
        .iter()
        .map(|cam| {
            let b = render(cloud, cam, opts);
            let valid = Mask::from_fn(cam.height(), cam.width(), |x, y| {
                b.depth_valid.get(x, y) && b.alpha.get(x, y, 0) > cfg.alpha_threshold
            });
            (b.depth, valid)
        })
        .collect();
    let views: Vec<_> = renders.iter().zip(cams).map(|((d, v), c)| (d, v, c)).collect();
    let voxel = cfg.voxel * cloud.scene_radius();
    fuse_depths(&views, voxel, cfg.truncation_voxels).1
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ChamferReport {
    pub accuracy: f64,
    pub completion: f64,
    pub average: f64,
}

impl From<Chamfer> for ChamferReport {
    fn from(c: Chamfer) -> Self {
        Self {
            accuracy: c.accuracy,
            completion: c.completion,
            average: c.average,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ViewReport {
    pub view: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ImageReport {
    pub views: Vec<ViewReport>,
    pub psnr: f64,
    pub ssim: f64,
}

fn is_scene(path: &Path) -> bool {
    if path.is_dir() {
        path.join(MANIFEST_NAME).is_file()
    } else {
        path.extension().is_some_and(|e| e == "toml")
    }
}

/// Chamfer distance of a mesh against a reference mesh (both sampled with the
/// same seed) or against the analytic surface of a synthetic scene.
pub fn eval_mesh(mesh: &TriangleMesh, ground_truth: &Path, cfg: &MeshConfig) -> Result<ChamferReport> {
    let samples = |m: &TriangleMesh| m.sample_surface(cfg.samples, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let recon = samples(mesh)?;
    if is_scene(ground_truth) {
        let ds = load_scene(ground_truth)?;
        let gt = ds.ground_truth.as_ref().ok_or_else(|| {
            Error::Precondition(format!("{} has no analytic ground truth; pass a mesh instead", ground_truth.display()))
        })?;
        Ok(gt.scene.chamfer(&recon, &gt.reference_points)?.into())
    } else {
        let reference = samples(&read_mesh(ground_truth)?)?;
        Ok(chamfer(&recon, &reference)?.into())
    }
}

fn read_any_image(path: &Path) -> Result<Raster> {
    if path.extension().is_some_and(|e| e == "fras") {
        read_fras(path)
    } else {
        read_image(path)
    }
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "png" || e == "ppm" || e == "fras"))
        .collect();
    out.sort();
    Ok(out)
}

fn compare(view: String, a: &Raster, b: &Raster) -> Result<ViewReport> {
    Ok(ViewReport {
        view,
        psnr: psnr(a, b)?,
        ssim: ssim(a, b)?,
    })
}

/// PSNR and SSIM of rendered images. With a directory as ground truth, files
/// are paired by name; with a scene, `view_<k>.*` is compared to image `k`.
pub fn eval_renders(renders: &Path, ground_truth: &Path) -> Result<ImageReport> {
    let mut views = Vec::new();
    let scene = if is_scene(ground_truth) { Some(load_scene(ground_truth)?) } else { None };
    for file in image_files(renders)? {
        let name = file.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let img = read_any_image(&file)?;
        if img.channels() != 3 {
            continue;
        }
        let reference = match &scene {
            Some(ds) => {
                let stem = file.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                let k: Option<usize> = stem.strip_prefix("view_").and_then(|s| s.parse().ok());
                match k.and_then(|k| ds.images.get(k)) {
                    Some(r) => r.clone(),
                    None => continue,
                }
            }
            None => {
                let other = ground_truth.join(&name);
                if !other.is_file() {
                    continue;
                }
                read_any_image(&other)?
            }
        };
        views.push(compare(name, &img, &reference)?);
    }
    if views.is_empty() {
        return Err(Error::Precondition(format!("no comparable images in {}", renders.display())));
    }
    let n = views.len() as f64;
    Ok(ImageReport {
        psnr: views.iter().map(|v| v.psnr).sum::<f64>() / n,
        ssim: views.iter().map(|v| v.ssim).sum::<f64>() / n,
        views,
    })
}

/// Mean PSNR of `cloud` rendered at `cams` against `images`.
pub fn mean_psnr(cloud: &GaussianCloud, cams: &[Camera], images: &[Raster], opts: &RenderOptions) -> Result<f64> {
    let mut acc = 0.0;
    for (cam, img) in cams.iter().zip(images) {
        acc += psnr(&render(cloud, cam, opts).color, img)?;
    }
    Ok(acc / cams.len().max(1) as f64)
}

