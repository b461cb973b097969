//! Per-primitive plane geometry and depth-derived normals.

use nalgebra::Vector3;

use crate::image::{Mask, Raster};
use crate::scene::{surfel_normal, Camera, GaussianPrimitive};

/// Default threshold on `|n·r|` below which a ray is considered grazing.
pub const GRAZING_EPS: f64 = 1e-4;

/// Distance from the camera center to the plane of a camera-facing surfel.
///
/// With `n` the camera-facing normal in the camera frame and `p` the
/// camera-frame center, the supporting plane is `{x : n·x = n·p}`; the
/// returned value is `-(n·p)`, non-negative for surfels in front of the
/// camera.
pub fn plane_distance(g: &GaussianPrimitive, cam: &Camera) -> f64 {
    let w = cam.rotation().transpose();
    let n_cam = w * surfel_normal(g, cam);
    let p_cam = cam.world_to_camera(&g.position);
    -p_cam.dot(&n_cam)
}

/// Camera-space z of the intersection of `ray` with `{p : normal·p = distance}`.
///
/// Returns `None` for grazing rays (`|normal·ray| ≤ eps` after
/// normalisation) and for intersections behind the camera.
pub fn unbiased_depth(distance: f64, normal: &Vector3<f64>, ray: &Vector3<f64>, eps: f64) -> Option<f64> {
    let nn = normal.norm();
    let rn = ray.norm();
    if nn == 0.0 || rn == 0.0 {
        return None;
    }
    let denom = normal.dot(ray);
    if (denom / (nn * rn)).abs() <= eps {
        return None;
    }
    let z = distance * ray.z / denom;
    (z > 0.0 && z.is_finite()).then_some(z)
}

/// Normals from a z-depth map by crossing central-difference tangents of the
/// back-projected points, oriented towards the camera.
///
/// A pixel is valid only if it is not on the border and it and its four
/// neighbours all have valid depth.
pub fn normal_from_depth(depth: &Raster, valid: &Mask, cam: &Camera) -> (Raster, Mask) {
    let (h, w) = (depth.height(), depth.width());
    let mut normals = Raster::zeros(h, w, 3);
    let mut ok = Mask::new(h, w, false);
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            if let Some(n) = depth_normal_at(depth, valid, cam, x, y) {
                normals.pixel_mut(x, y).copy_from_slice(n.0.as_slice());
                ok.set(x, y, true);
            }
        }
    }
    (normals, ok)
}

struct DepthNormal(Vector3<f64>, Vector3<f64>, Vector3<f64>, f64, f64);

fn point(depth: &Raster, cam: &Camera, x: usize, y: usize) -> Vector3<f64> {
    cam.backproject(x as f64, y as f64, depth.get(x, y, 0))
}

/// Returns `(normal, tangent_x, tangent_y, sign, |cross|)`.
fn depth_normal_at(depth: &Raster, valid: &Mask, cam: &Camera, x: usize, y: usize) -> Option<DepthNormal> {
    let neighbours = [(x, y), (x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)];
    if neighbours.iter().any(|&(i, j)| !valid.get(i, j)) {
        return None;
    }
    let tx = point(depth, cam, x + 1, y) - point(depth, cam, x - 1, y);
    let ty = point(depth, cam, x, y + 1) - point(depth, cam, x, y - 1);
    let m = tx.cross(&ty);
    let len = m.norm();
    if !(len > 0.0) || !len.is_finite() {
        return None;
    }
    let p = point(depth, cam, x, y);
    let sign = if m.dot(&p) <= 0.0 { 1.0 } else { -1.0 };
    Some(DepthNormal(m * (sign / len), tx, ty, sign, len))
}

/// Adjoint of [`normal_from_depth`]: accumulates `dL/d depth` into `d_depth`.
pub fn normal_from_depth_backward(
    depth: &Raster,
    valid: &Mask,
    cam: &Camera,
    d_normal: &Raster,
    d_depth: &mut Raster,
) {
    let (h, w) = (depth.height(), depth.width());
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let g = Vector3::from_column_slice(d_normal.pixel(x, y));
            if g == Vector3::zeros() {
                continue;
            }
            let Some(DepthNormal(n, tx, ty, sign, len)) = depth_normal_at(depth, valid, cam, x, y) else {
                continue;
            };
            // n = sign * m / |m|, m = tx × ty
            let dm = (g - n * n.dot(&g)) * (sign / len);
            let dtx = ty.cross(&dm);
            let dty = dm.cross(&tx);
            let mut push = |i: usize, j: usize, dp: Vector3<f64>| {
                let ray = cam.pixel_ray(i as f64, j as f64);
                d_depth.add(i, j, 0, dp.dot(&ray));
            };
            push(x + 1, y, dtx);
            push(x - 1, y, -dtx);
            push(x, y + 1, dty);
            push(x, y - 1, -dty);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector4};

    fn cam_at(center: Vector3<f64>) -> Camera {
        Camera::new(100.0, 100.0, 32.0, 32.0, 64, 64, Matrix3::identity(), center).unwrap()
    }

    fn flat(pos: Vector3<f64>, scales: Vector3<f64>) -> GaussianPrimitive {
        GaussianPrimitive::new(pos, Vector4::new(1.0, 0.0, 0.0, 0.0), scales, 0.5, Vector3::zeros()).unwrap()
    }

    #[test]
    fn plane_distance_examples() {
        let g = flat(Vector3::new(0.0, 0.0, 5.0), Vector3::new(1.0, 1.0, 0.01));
        assert_eq!(plane_distance(&g, &cam_at(Vector3::zeros())), 5.0);
        assert_eq!(plane_distance(&g, &cam_at(Vector3::new(0.0, 0.0, 1.0))), 4.0);
        let g = flat(Vector3::new(3.0, 0.0, 4.0), Vector3::new(1.0, 1.0, 0.01));
        assert_eq!(plane_distance(&g, &cam_at(Vector3::zeros())), 4.0);
    }

    #[test]
    fn unbiased_depth_examples() {
        let n = Vector3::new(0.0, 0.0, 1.0);
        assert_eq!(unbiased_depth(5.0, &n, &Vector3::new(0.0, 0.0, 1.0), GRAZING_EPS), Some(5.0));
        let z = unbiased_depth(5.0, &n, &Vector3::new(0.6, 0.0, 0.8), GRAZING_EPS).unwrap();
        assert!((z - 5.0).abs() < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = unbiased_depth(2.0, &Vector3::new(0.0, s, s), &Vector3::new(0.0, 0.0, 1.0), GRAZING_EPS).unwrap();
        assert!((z - 2.0 / s).abs() < 1e-12);
        assert!((z - 2.828427).abs() < 1e-6);
        assert_eq!(unbiased_depth(5.0, &n, &Vector3::new(1.0, 0.0, 0.0), GRAZING_EPS), None);
    }

    #[test]
    fn fronto_parallel_depth_gives_camera_facing_normal() {
        let cam = cam_at(Vector3::zeros());
        let depth = Raster::filled(64, 64, 1, 3.0);
        let valid = Mask::new(64, 64, true);
        let (n, ok) = normal_from_depth(&depth, &valid, &cam);
        assert!(!ok.get(0, 10) && !ok.get(63, 10) && !ok.get(10, 0) && !ok.get(10, 63));
        for y in 1..63 {
            for x in 1..63 {
                assert!(ok.get(x, y));
                let v = n.pixel(x, y);
                assert!(v[0].abs() < 1e-12 && v[1].abs() < 1e-12 && (v[2] + 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tilted_plane_normal_matches_analytic() {
        // camera-space plane z = 2 + 0.1 X, i.e. -0.1 X + Z = 2
        let cam = cam_at(Vector3::zeros());
        let depth = Raster::from_fn(64, 64, 1, |x, _, _| {
            let rx = (x as f64 - cam.cx()) / cam.fx();
            2.0 / (1.0 - 0.1 * rx)
        });
        let valid = Mask::new(64, 64, true);
        let (n, ok) = normal_from_depth(&depth, &valid, &cam);
        let analytic = -Vector3::new(-0.1, 0.0, 1.0).normalize();
        for y in 1..63 {
            for x in 1..63 {
                assert!(ok.get(x, y));
                let v = Vector3::from_column_slice(n.pixel(x, y));
                assert!((v - analytic).norm() < 1e-3);
            }
        }
    }

    #[test]
    fn invalid_neighbour_invalidates_pixel() {
        let cam = cam_at(Vector3::zeros());
        let depth = Raster::filled(16, 16, 1, 3.0);
        let mut valid = Mask::new(16, 16, true);
        valid.set(5, 5, false);
        let (_, ok) = normal_from_depth(&depth, &valid, &cam);
        for (x, y) in [(5, 5), (4, 5), (6, 5), (5, 4), (5, 6)] {
            assert!(!ok.get(x, y));
        }
        assert!(ok.get(4, 4));
    }

    #[test]
    fn depth_normal_backward_matches_finite_differences() {
        let cam = Camera::new(20.0, 22.0, 5.5, 4.5, 12, 10, Matrix3::identity(), Vector3::zeros()).unwrap();
        let depth = Raster::from_fn(10, 12, 1, |x, y, _| 2.0 + 0.1 * x as f64 + 0.05 * ((x * y) as f64).sin());
        let valid = Mask::new(10, 12, true);
        let weights = Raster::from_fn(10, 12, 3, |x, y, c| ((x * 7 + y * 3 + c * 5) % 11) as f64 / 11.0 - 0.4);
        let loss = |d: &Raster| {
            let (n, ok) = normal_from_depth(d, &valid, &cam);
            let mut s = 0.0;
            for y in 0..10 {
                for x in 0..12 {
                    if ok.get(x, y) {
                        for c in 0..3 {
                            s += n.get(x, y, c) * weights.get(x, y, c);
                        }
                    }
                }
            }
            s
        };
        let mut grad = Raster::zeros(10, 12, 1);
        normal_from_depth_backward(&depth, &valid, &cam, &weights, &mut grad);
        let h = 1e-6;
        for y in 0..10 {
            for x in 0..12 {
                let mut p = depth.clone();
                p.add(x, y, 0, h);
                let mut m = depth.clone();
                m.add(x, y, 0, -h);
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                assert!((fd - grad.get(x, y, 0)).abs() < 1e-6, "({x},{y}): {fd} vs {}", grad.get(x, y, 0));
            }
        }
    }
}
