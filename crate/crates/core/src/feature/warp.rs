use nalgebra::{Vector2, Vector3};

use crate::image::{bilinear_taps, Mask, Raster};
use crate::scene::Camera;

/// Per-pixel lookup positions of a depth-driven warp into a destination view,
/// with their derivative with respect to the destination depth.
#[derive(Debug, Clone)]
pub struct WarpField {
    height: usize,
    width: usize,
    src_width: usize,
    src_height: usize,
    coords: Vec<Option<Vector2<f64>>>,
    d_coords: Vec<Vector2<f64>>,
}

/// Coordinates within this distance of an integer are snapped onto it.
const SNAP: f64 = 1e-9;

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

impl WarpField {
    /// Back-project each `dst` pixel with `depth`, transform into `src` and
    /// project. Pixels with invalid depth, behind `src`, or projecting
    /// outside it are invalid.
    pub fn new(depth: &Raster, valid: &Mask, dst: &Camera, src: &Camera) -> Self {
        let (h, w) = (depth.height(), depth.width());
        let rel = src.rotation().transpose() * dst.rotation();
        let offset = src.rotation().transpose() * (dst.center() - src.center());
        let mut coords = Vec::with_capacity(h * w);
        let mut d_coords = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let mut c = None;
                let mut dc = Vector2::zeros();
                if valid.get(x, y) {
                    let z = depth.get(x, y, 0);
                    let ray = dst.pixel_ray(x as f64, y as f64);
                    let dir = rel * ray;
                    let p = dir * z + offset;
                    if p.z > 0.0 {
                        let u = snap(src.fx() * p.x / p.z + src.cx());
                        let v = snap(src.fy() * p.y / p.z + src.cy());
                        if u >= 0.0 && v >= 0.0 && u <= (src.width() - 1) as f64 && v <= (src.height() - 1) as f64 {
                            c = Some(Vector2::new(u, v));
                            dc = projection_derivative(src, &p, &dir);
                        }
                    }
                }
                coords.push(c);
                d_coords.push(dc);
            }
        }
        Self {
            height: h,
            width: w,
            src_width: src.width(),
            src_height: src.height(),
            coords,
            d_coords,
        }
    }

    pub fn coord(&self, x: usize, y: usize) -> Option<Vector2<f64>> {
        self.coords[y * self.width + x]
    }

    pub fn valid(&self) -> Mask {
        Mask::from_fn(self.height, self.width, |x, y| self.coord(x, y).is_some())
    }

    /// Bilinearly sample `src` at every valid position.
    pub fn sample(&self, src: &Raster) -> (Raster, Mask) {
        self.sample_where(src, None)
    }

    /// As [`WarpField::sample`], also requiring every contributing tap to be
    /// valid in `src_valid`.
    pub fn sample_masked(&self, src: &Raster, src_valid: &Mask) -> (Raster, Mask) {
        self.sample_where(src, Some(src_valid))
    }

    fn sample_where(&self, src: &Raster, src_valid: Option<&Mask>) -> (Raster, Mask) {
        debug_assert_eq!((src.height(), src.width()), (self.src_height, self.src_width));
        let c = src.channels();
        let mut out = Raster::zeros(self.height, self.width, c);
        let mut ok = Mask::new(self.height, self.width, false);
        for y in 0..self.height {
            for x in 0..self.width {
                let Some(q) = self.coord(x, y) else { continue };
                let taps = bilinear_taps(q.x, q.y, self.src_width, self.src_height).unwrap();
                if let Some(m) = src_valid {
                    if taps.iter().any(|&(i, j, wt)| wt > 0.0 && !m.get(i, j)) {
                        continue;
                    }
                }
                let o = out.pixel_mut(x, y);
                for (i, j, wt) in taps {
                    if wt == 0.0 {
                        continue;
                    }
                    for (a, s) in o.iter_mut().zip(src.pixel(i, j)) {
                        *a += wt * s;
                    }
                }
                ok.set(x, y, true);
            }
        }
        (out, ok)
    }

    /// Adjoint of [`WarpField::sample`]: gradients with respect to the
    /// sampled map and to the destination depth.
    pub fn backward(&self, src: &Raster, d_out: &Raster) -> (Raster, Raster) {
        let c = src.channels();
        let mut d_src = Raster::zeros(self.src_height, self.src_width, c);
        let mut d_depth = Raster::zeros(self.height, self.width, 1);
        for y in 0..self.height {
            for x in 0..self.width {
                let Some(q) = self.coord(x, y) else { continue };
                let g = d_out.pixel(x, y);
                if g.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let taps = bilinear_taps(q.x, q.y, self.src_width, self.src_height).unwrap();
                for &(i, j, wt) in &taps {
                    if wt != 0.0 {
                        for (d, gv) in d_src.pixel_mut(i, j).iter_mut().zip(g) {
                            *d += wt * gv;
                        }
                    }
                }
                // taps are ordered (x0,y0), (x1,y0), (x0,y1), (x1,y1)
                let a = q.x - q.x.floor().min((self.src_width - 1) as f64);
                let b = q.y - q.y.floor().min((self.src_height - 1) as f64);
                let f = |k: usize| src.pixel(taps[k].0, taps[k].1);
                let mut du = 0.0;
                let mut dv = 0.0;
                for ch in 0..c {
                    let (f00, f10, f01, f11) = (f(0)[ch], f(1)[ch], f(2)[ch], f(3)[ch]);
                    let su = (1.0 - b) * (f10 - f00) + b * (f11 - f01);
                    let sv = (1.0 - a) * (f01 - f00) + a * (f11 - f10);
                    du += g[ch] * su;
                    dv += g[ch] * sv;
                }
                let dc = self.d_coords[y * self.width + x];
                d_depth.set(x, y, 0, du * dc.x + dv * dc.y);
            }
        }
        (d_src, d_depth)
    }
}

/// `d(u, v)/dz` for a source-frame point `p = dir·z + offset`.
fn projection_derivative(src: &Camera, p: &Vector3<f64>, dir: &Vector3<f64>) -> Vector2<f64> {
    let iz = 1.0 / p.z;
    let du = src.fx() * (dir.x * iz - p.x * dir.z * iz * iz);
    let dv = src.fy() * (dir.y * iz - p.y * dir.z * iz * iz);
    Vector2::new(du, dv)
}

/// Warp `src_map` (seen by `src_cam`) into `dst_cam` using the destination depth.
pub fn warp(src_map: &Raster, depth: &Raster, depth_valid: &Mask, src_cam: &Camera, dst_cam: &Camera) -> (Raster, Mask) {
    WarpField::new(depth, depth_valid, dst_cam, src_cam).sample(src_map)
}

/// Pixel displacement after mapping each `t` pixel into `p` with `depth_t`
/// and back into `t` with the bilinearly sampled `depth_p`.
pub fn roundtrip_displacement(
    depth_t: &Raster,
    valid_t: &Mask,
    depth_p: &Raster,
    valid_p: &Mask,
    cam_t: &Camera,
    cam_p: &Camera,
) -> (Raster, Mask) {
    let field = WarpField::new(depth_t, valid_t, cam_t, cam_p);
    let (dp, ok) = field.sample_masked(depth_p, valid_p);
    let (h, w) = (depth_t.height(), depth_t.width());
    let mut disp = Raster::zeros(h, w, 1);
    let mut valid = Mask::new(h, w, false);
    for y in 0..h {
        for x in 0..w {
            if !ok.get(x, y) {
                continue;
            }
            let q = field.coord(x, y).unwrap();
            let world = cam_p.camera_to_world(&cam_p.backproject(q.x, q.y, dp.get(x, y, 0)));
            let back = cam_t.world_to_camera(&world);
            if back.z <= 0.0 {
                continue;
            }
            let uv = cam_t.project_camera(&back);
            disp.set(x, y, 0, (uv - Vector2::new(x as f64, y as f64)).norm());
            valid.set(x, y, true);
        }
    }
    (disp, valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    fn cam(c: Vector3<f64>) -> Camera {
        Camera::new(40.0, 40.0, 15.5, 11.5, 32, 24, Matrix3::identity(), c).unwrap()
    }

    fn pattern(h: usize, w: usize) -> Raster {
        Raster::from_fn(h, w, 2, |x, y, c| ((x as f64) * 0.37 + (y as f64) * 0.21 + c as f64).sin())
    }

    #[test]
    fn identity_pose_is_identity_warp() {
        let c = cam(Vector3::new(0.2, -0.1, 0.0));
        let depth = Raster::from_fn(24, 32, 1, |x, y, _| 2.0 + 0.01 * (x + y) as f64);
        let valid = Mask::new(24, 32, true);
        let src = pattern(24, 32);
        let (out, ok) = warp(&src, &depth, &valid, &c, &c);
        assert_eq!(ok.count(), 24 * 32);
        for (a, b) in out.data().iter().zip(src.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn translation_shifts_by_disparity() {
        let (z, tx) = (4.0, 0.5);
        let dst = cam(Vector3::zeros());
        let src = cam(Vector3::new(tx, 0.0, 0.0));
        let depth = Raster::filled(24, 32, 1, z);
        let field = WarpField::new(&depth, &Mask::new(24, 32, true), &dst, &src);
        let shift = 40.0 * tx / z;
        for y in 0..24 {
            for x in 0..32 {
                match field.coord(x, y) {
                    Some(q) => {
                        assert!((q.x - (x as f64 - shift)).abs() < 1e-12);
                        assert!((q.y - y as f64).abs() < 1e-12);
                    }
                    None => assert!((x as f64) < shift),
                }
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let dst = cam(Vector3::zeros());
        let src = Camera::new(
            38.0,
            41.0,
            15.0,
            12.0,
            32,
            24,
            nalgebra::Rotation3::from_euler_angles(0.02, -0.05, 0.01).into_inner(),
            Vector3::new(0.3, 0.05, -0.1),
        )
        .unwrap();
        let depth = Raster::from_fn(24, 32, 1, |x, y, _| 3.0 + 0.013 * x as f64 + 0.007 * y as f64);
        let valid = Mask::new(24, 32, true);
        let src_map = pattern(24, 32);
        let weights = Raster::from_fn(24, 32, 2, |x, y, c| (((x * 3 + y * 5 + c) % 7) as f64 - 3.0) / 3.0);
        let loss = |d: &Raster, m: &Raster| {
            let (out, _) = warp(m, d, &valid, &src, &dst);
            out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let field = WarpField::new(&depth, &valid, &dst, &src);
        let (d_src, d_depth) = field.backward(&src_map, &weights);
        let h = 1e-6;
        for (x, y) in [(5, 5), (10, 7), (20, 12), (27, 3), (16, 18)] {
            let mut p = depth.clone();
            p.add(x, y, 0, h);
            let mut m = depth.clone();
            m.add(x, y, 0, -h);
            let fd = (loss(&p, &src_map) - loss(&m, &src_map)) / (2.0 * h);
            assert!((fd - d_depth.get(x, y, 0)).abs() < 1e-5, "depth ({x},{y}) {fd} vs {}", d_depth.get(x, y, 0));
        }
        // linear in the map: compare with a one-hot probe
        for (x, y, c) in [(4, 4, 0), (12, 9, 1), (30, 20, 0)] {
            let mut probe = Raster::zeros(24, 32, 2);
            probe.set(x, y, c, 1.0);
            let fd = loss(&depth, &probe);
            assert!((fd - d_src.get(x, y, c)).abs() < 1e-12);
        }
    }

    #[test]
    fn roundtrip_is_exact_for_consistent_depths() {
        let a = cam(Vector3::zeros());
        let b = cam(Vector3::new(0.4, 0.0, 0.0));
        let depth = Raster::filled(24, 32, 1, 3.0);
        let valid = Mask::new(24, 32, true);
        let (disp, ok) = roundtrip_displacement(&depth, &valid, &depth, &valid, &a, &b);
        assert!(ok.count() > 300);
        for y in 0..24 {
            for x in 0..32 {
                if ok.get(x, y) {
                    assert!(disp.get(x, y, 0) < 1e-9);
                }
            }
        }
    }
}
