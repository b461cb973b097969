//! C interface to the reconstruction pipeline.
//!
//! Objects are opaque handles created by `ss_*_new`/`ss_*_load` and released
//! with the matching `ss_*_free`. Every fallible call returns an [`SsStatus`];
//! on failure the message is available from [`ss_last_error`] until the next
//! failing call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use sparsesurf::io::{load_checkpoint, load_scene, save_checkpoint, write_mesh, PlyFormat, RunConfig, SceneDataset};
use sparsesurf::mesh::TriangleMesh;
use sparsesurf::pipeline::{extract_mesh, make_trainer};
use sparsesurf::train::Trainer;
use sparsesurf::{render, Error, GaussianCloud, RenderOptions};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Config = 4,
    SceneLoad = 5,
    InvalidCamera = 6,
    Format = 7,
    Numerical = 8,
    Backend = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

pub struct SsScene(SceneDataset);
pub struct SsCloud(GaussianCloud);
pub struct SsMesh(TriangleMesh);
pub struct SsTrainer {
    trainer: Trainer,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SsStatus {
    match e {
        Error::Io { .. } => SsStatus::Io,
        Error::Config(_) => SsStatus::Config,
        Error::SceneLoad { .. } => SsStatus::SceneLoad,
        Error::InvalidCamera(_) => SsStatus::InvalidCamera,
        Error::Fras(_) | Error::Ply(_) | Error::Image(_) => SsStatus::Format,
        Error::NonFiniteGradient { .. } => SsStatus::Numerical,
        Error::ExternalBackend { .. } => SsStatus::Backend,
        Error::InvalidPrimitive(_) | Error::Precondition(_) | Error::DimensionMismatch { .. } | Error::EmptyPointSet => {
            SsStatus::InvalidArgument
        }
    }
}

struct Failure(SsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SsStatus::NullArgument, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SsStatus::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            SsStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure(SsStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn obj_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn ss_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Static NUL-terminated version string.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load a scene directory or manifest.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_scene_load(path: *const c_char, out: *mut *mut SsScene) -> SsStatus {
    guard(|| put(out, SsScene(load_scene(&path_arg(path, "path")?)?)))
}

/// # Safety
/// `scene` must be null or a handle from [`ss_scene_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ss_scene_free(scene: *mut SsScene) {
    free(scene)
}

/// Number of views and how many of them are training views.
///
/// # Safety
/// `scene` must be a live handle; the outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn ss_scene_view_count(scene: *const SsScene, views: *mut usize, train: *mut usize) -> SsStatus {
    guard(|| {
        let s = &obj(scene, "scene")?.0;
        if let Some(v) = views.as_mut() {
            *v = s.images.len();
        }
        if let Some(t) = train.as_mut() {
            *t = s.train.len();
        }
        Ok(())
    })
}

/// Image size of view `view`.
///
/// # Safety
/// `scene` must be a live handle; `width` and `height` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ss_scene_image_size(scene: *const SsScene, view: usize, width: *mut usize, height: *mut usize) -> SsStatus {
    guard(|| {
        let s = &obj(scene, "scene")?.0;
        let cam = s
            .cameras
            .get(view)
            .ok_or_else(|| Failure(SsStatus::InvalidArgument, format!("view {view} out of range")))?;
        *obj_mut(width, "width")? = cam.width();
        *obj_mut(height, "height")? = cam.height();
        Ok(())
    })
}

/// Create a trainer on the training views of `scene`. `config_path` may be
/// null for defaults.
///
/// # Safety
/// `scene` must be a live handle, `config_path` null or NUL-terminated, and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_trainer_new(scene: *const SsScene, config_path: *const c_char, out: *mut *mut SsTrainer) -> SsStatus {
    guard(|| {
        let s = &obj(scene, "scene")?.0;
        let cfg = if config_path.is_null() {
            RunConfig::default()
        } else {
            RunConfig::load(&path_arg(config_path, "config_path")?)?
        };
        put(out, SsTrainer { trainer: make_trainer(s, &cfg)? })
    })
}

/// # Safety
/// `trainer` must be null or a handle from [`ss_trainer_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ss_trainer_free(trainer: *mut SsTrainer) {
    free(trainer)
}

/// Run up to `iterations` steps, stopping early when training is complete.
/// `total_loss` (nullable) receives the loss of the last step taken.
///
/// # Safety
/// `trainer` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_trainer_step(trainer: *mut SsTrainer, iterations: usize, total_loss: *mut f64) -> SsStatus {
    guard(|| {
        let t = &mut obj_mut(trainer, "trainer")?.trainer;
        for _ in 0..iterations {
            if t.is_done() {
                break;
            }
            let r = t.step()?;
            if let Some(l) = total_loss.as_mut() {
                *l = r.total;
            }
        }
        Ok(())
    })
}

/// Completed iterations, total iterations and current primitive count.
///
/// # Safety
/// `trainer` must be a live handle; the outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn ss_trainer_progress(trainer: *const SsTrainer, iter: *mut usize, total: *mut usize, primitives: *mut usize) -> SsStatus {
    guard(|| {
        let t = &obj(trainer, "trainer")?.trainer;
        if let Some(v) = iter.as_mut() {
            *v = t.iter;
        }
        if let Some(v) = total.as_mut() {
            *v = t.config.schedule.total_iters;
        }
        if let Some(v) = primitives.as_mut() {
            *v = t.cloud.len();
        }
        Ok(())
    })
}

/// Copy of the trainer's current primitives.
///
/// # Safety
/// `trainer` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_trainer_cloud(trainer: *const SsTrainer, out: *mut *mut SsCloud) -> SsStatus {
    guard(|| put(out, SsCloud(obj(trainer, "trainer")?.trainer.cloud.clone())))
}

/// Write a checkpoint of the trainer, including optimizer state.
///
/// # Safety
/// `trainer` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ss_trainer_save(trainer: *const SsTrainer, path: *const c_char) -> SsStatus {
    guard(|| {
        let t = &obj(trainer, "trainer")?.trainer;
        save_checkpoint(&path_arg(path, "path")?, &t.cloud, t.iter, Some(&t.adam))?;
        Ok(())
    })
}

/// Load the primitives of a checkpoint.
///
/// # Safety
/// `path` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_cloud_load(path: *const c_char, out: *mut *mut SsCloud) -> SsStatus {
    guard(|| put(out, SsCloud(load_checkpoint(&path_arg(path, "path")?)?.cloud)))
}

/// # Safety
/// `cloud` must be null or a live handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ss_cloud_free(cloud: *mut SsCloud) {
    free(cloud)
}

/// Number of primitives.
///
/// # Safety
/// `cloud` must be a live handle and `len` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_cloud_len(cloud: *const SsCloud, len: *mut usize) -> SsStatus {
    guard(|| {
        *obj_mut(len, "len")? = obj(cloud, "cloud")?.0.len();
        Ok(())
    })
}

/// Render `cloud` at camera `view` of `scene` into `rgb`, row-major
/// `height × width × 3`. `capacity` is the length of `rgb` in elements.
///
/// # Safety
/// Handles must be live and `rgb` must point to `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ss_cloud_render(
    cloud: *const SsCloud,
    scene: *const SsScene,
    view: usize,
    rgb: *mut f64,
    capacity: usize,
) -> SsStatus {
    guard(|| {
        let c = &obj(cloud, "cloud")?.0;
        let s = &obj(scene, "scene")?.0;
        let cam = s
            .cameras
            .get(view)
            .ok_or_else(|| Failure(SsStatus::InvalidArgument, format!("view {view} out of range")))?;
        let need = cam.width() * cam.height() * 3;
        if capacity < need {
            return Err(Failure(SsStatus::BufferTooSmall, format!("need {need} doubles, got {capacity}")));
        }
        if rgb.is_null() {
            return Err(null("rgb"));
        }
        let img = render(c, cam, &RenderOptions::default()).color;
        std::slice::from_raw_parts_mut(rgb, need).copy_from_slice(img.data());
        Ok(())
    })
}

/// Fuse depths rendered at the training views into a mesh. `voxel` is a
/// fraction of the scene radius; pass 0 for the default.
///
/// # Safety
/// Handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_mesh_extract(cloud: *const SsCloud, scene: *const SsScene, voxel: f64, out: *mut *mut SsMesh) -> SsStatus {
    guard(|| {
        let c = &obj(cloud, "cloud")?.0;
        let s = &obj(scene, "scene")?.0;
        let mut cfg = RunConfig::default();
        if voxel != 0.0 {
            cfg.mesh.voxel = voxel;
            cfg.validate()?;
        }
        put(out, SsMesh(extract_mesh(c, &s.train_cameras(), &RenderOptions::default(), &cfg.mesh)))
    })
}

/// # Safety
/// `mesh` must be null or a live handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ss_mesh_free(mesh: *mut SsMesh) {
    free(mesh)
}

/// Vertex and triangle counts.
///
/// # Safety
/// `mesh` must be a live handle; the outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn ss_mesh_counts(mesh: *const SsMesh, vertices: *mut usize, triangles: *mut usize) -> SsStatus {
    guard(|| {
        let m = &obj(mesh, "mesh")?.0;
        if let Some(v) = vertices.as_mut() {
            *v = m.vertices.len();
        }
        if let Some(t) = triangles.as_mut() {
            *t = m.triangles.len();
        }
        Ok(())
    })
}

/// Write the mesh as PLY, binary little-endian unless `ascii` is true.
///
/// # Safety
/// `mesh` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ss_mesh_write_ply(mesh: *const SsMesh, path: *const c_char, ascii: bool) -> SsStatus {
    guard(|| {
        let fmt = if ascii { PlyFormat::Ascii } else { PlyFormat::BinaryLittleEndian };
        write_mesh(&path_arg(path, "path")?, &obj(mesh, "mesh")?.0, fmt)?;
        Ok(())
    })
}
