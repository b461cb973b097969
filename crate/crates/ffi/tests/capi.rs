use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use sparsesurf_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = ss_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn synthetic_scene(dir: &Path) -> *mut SsScene {
    std::fs::write(
        dir.join("scene.toml"),
        "[synthetic]\npreset = \"cube\"\nviews = 3\nwidth = 24\nheight = 24\ninit_points = 200\nreference_density = 1\n",
    )
    .unwrap();
    let mut scene = ptr::null_mut();
    assert_eq!(unsafe { ss_scene_load(cstr(dir).as_ptr(), &mut scene) }, SsStatus::Ok);
    assert!(!scene.is_null());
    scene
}

#[test]
fn train_render_mesh_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synthetic_scene(dir.path());
    unsafe {
        let (mut views, mut train) = (0, 0);
        assert_eq!(ss_scene_view_count(scene, &mut views, &mut train), SsStatus::Ok);
        assert_eq!((views, train), (5, 3));
        let (mut w, mut h) = (0, 0);
        assert_eq!(ss_scene_image_size(scene, 0, &mut w, &mut h), SsStatus::Ok);
        assert_eq!((w, h), (24, 24));

        let mut trainer = ptr::null_mut();
        assert_eq!(ss_trainer_new(scene, ptr::null(), &mut trainer), SsStatus::Ok);
        let mut loss = f64::NAN;
        assert_eq!(ss_trainer_step(trainer, 5, &mut loss), SsStatus::Ok);
        assert!(loss.is_finite() && loss > 0.0);
        let (mut iter, mut total, mut prims) = (0, 0, 0);
        assert_eq!(ss_trainer_progress(trainer, &mut iter, &mut total, &mut prims), SsStatus::Ok);
        assert_eq!(iter, 5);
        assert!(total > iter && prims > 0);

        let ck = dir.path().join("ck.ply");
        assert_eq!(ss_trainer_save(trainer, cstr(&ck).as_ptr()), SsStatus::Ok);
        let mut cloud = ptr::null_mut();
        assert_eq!(ss_cloud_load(cstr(&ck).as_ptr(), &mut cloud), SsStatus::Ok);
        let mut len = 0;
        assert_eq!(ss_cloud_len(cloud, &mut len), SsStatus::Ok);
        assert_eq!(len, prims);

        let mut small = vec![0.0; 10];
        assert_eq!(ss_cloud_render(cloud, scene, 0, small.as_mut_ptr(), small.len()), SsStatus::BufferTooSmall);
        let mut rgb = vec![-1.0; w * h * 3];
        assert_eq!(ss_cloud_render(cloud, scene, 0, rgb.as_mut_ptr(), rgb.len()), SsStatus::Ok);
        assert!(rgb.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert_eq!(ss_cloud_render(cloud, scene, 99, rgb.as_mut_ptr(), rgb.len()), SsStatus::InvalidArgument);
        assert!(last_error().contains("99"));

        let mut mesh = ptr::null_mut();
        assert_eq!(ss_mesh_extract(cloud, scene, 0.02, &mut mesh), SsStatus::Ok);
        let (mut nv, mut nt) = (0, 0);
        assert_eq!(ss_mesh_counts(mesh, &mut nv, &mut nt), SsStatus::Ok);
        let out = dir.path().join("mesh.ply");
        assert_eq!(ss_mesh_write_ply(mesh, cstr(&out).as_ptr(), true), SsStatus::Ok);
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.contains(&format!("element vertex {nv}")));
        assert!(text.contains(&format!("element face {nt}")));

        ss_mesh_free(mesh);
        ss_cloud_free(cloud);
        ss_trainer_free(trainer);
        ss_scene_free(scene);
    }
}

#[test]
fn errors_are_reported_with_codes() {
    unsafe {
        let mut scene = ptr::null_mut();
        assert_eq!(ss_scene_load(ptr::null(), &mut scene), SsStatus::NullArgument);
        assert!(scene.is_null());
        let missing = CString::new("/nonexistent/scene.toml").unwrap();
        assert_ne!(ss_scene_load(missing.as_ptr(), &mut scene), SsStatus::Ok);
        assert!(!last_error().is_empty());
        let mut len = 0;
        assert_eq!(ss_cloud_len(ptr::null(), &mut len), SsStatus::NullArgument);
        assert!(last_error().contains("cloud"));

        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.toml");
        std::fs::write(&bad, "[mesh]\nvoxel = -1.0\n").unwrap();
        let scene = synthetic_scene(dir.path());
        let mut trainer = ptr::null_mut();
        assert_eq!(ss_trainer_new(scene, cstr(&bad).as_ptr(), &mut trainer), SsStatus::Config);
        assert!(trainer.is_null());
        ss_scene_free(scene);
        ss_scene_free(ptr::null_mut());
    }
}

#[test]
fn version_and_header() {
    let v = unsafe { CStr::from_ptr(ss_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/sparsesurf.h")).unwrap();
    for name in ["ss_scene_load", "ss_trainer_step", "ss_mesh_write_ply", "SS_STATUS_BUFFER_TOO_SMALL", "typedef struct SsCloud SsCloud"] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
