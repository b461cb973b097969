//! Analytic ray-traced scenes used as ground truth.
//!
//! Objects are rectangles, spheres and oriented cubes carrying a solid
//! sinusoidal texture. Nothing here touches the splatting renderer.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Mask, Raster};
use crate::mesh::{Chamfer, TriangleMesh};
use crate::scene::Camera;
use crate::spatial::KdTree;

/// Solid texture: a sum of random plane waves per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    waves: Vec<(Vector3<f64>, f64, f64, usize)>,
}

impl Texture {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut waves = Vec::new();
        for c in 0..3 {
            for _ in 0..5 {
                let dir: Vector3<f64> = Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
                let freq = rng.gen_range(4.0..22.0);
                waves.push((dir.normalize() * freq, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.04..0.09), c));
            }
        }
        Self { waves }
    }

    pub fn color(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let mut c = Vector3::repeat(0.5);
        for (w, phase, amp, ch) in &self.waves {
            c[*ch] += amp * (w.dot(p) + phase).sin();
        }
        c.map(|v| v.clamp(0.0, 1.0))
    }
}

/// Analytic surface.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Two-sided rectangle spanned by unit axes `u`, `v` around `center`.
    Rect {
        center: Vector3<f64>,
        u: Vector3<f64>,
        v: Vector3<f64>,
        half_u: f64,
        half_v: f64,
    },
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    /// Cube with local-to-world rotation `rotation`.
    Cube {
        center: Vector3<f64>,
        half: f64,
        rotation: Matrix3<f64>,
    },
}

impl Shape {
    /// Nearest hit `(t, normal)` with `t > t_min` along `o + t d`.
    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>, t_min: f64) -> Option<(f64, Vector3<f64>)> {
        match self {
            Shape::Rect { center, u, v, half_u, half_v } => {
                let n = u.cross(v);
                let denom = n.dot(d);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = n.dot(&(center - o)) / denom;
                let q = o + d * t - center;
                (t > t_min && q.dot(u).abs() <= *half_u && q.dot(v).abs() <= *half_v).then_some((t, n))
            }
            Shape::Sphere { center, radius } => {
                let oc = o - center;
                let a = d.norm_squared();
                let b = oc.dot(d);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                [(-b - s) / a, (-b + s) / a]
                    .into_iter()
                    .find(|&t| t > t_min)
                    .map(|t| (t, (o + d * t - center) / *radius))
            }
            Shape::Cube { center, half, rotation } => {
                let lo = rotation.transpose() * (o - center);
                let ld = rotation.transpose() * d;
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                let (mut ax0, mut ax1) = (0, 0);
                for k in 0..3 {
                    if ld[k].abs() < 1e-15 {
                        if lo[k].abs() > *half {
                            return None;
                        }
                        continue;
                    }
                    let (a, b) = ((-half - lo[k]) / ld[k], (half - lo[k]) / ld[k]);
                    let (near, far) = if a < b { (a, b) } else { (b, a) };
                    if near > t0 {
                        t0 = near;
                        ax0 = k;
                    }
                    if far < t1 {
                        t1 = far;
                        ax1 = k;
                    }
                }
                if t0 > t1 {
                    return None;
                }
                let (t, k) = if t0 > t_min {
                    (t0, ax0)
                } else if t1 > t_min {
                    (t1, ax1)
                } else {
                    return None;
                };
                let mut n = Vector3::zeros();
                n[k] = (lo[k] + ld[k] * t).signum();
                Some((t, rotation * n))
            }
        }
    }

    /// Unsigned distance from `p` to the surface.
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        match self {
            Shape::Rect { center, u, v, half_u, half_v } => {
                let q = p - center;
                let a = q.dot(u).clamp(-half_u, *half_u);
                let b = q.dot(v).clamp(-half_v, *half_v);
                (q - u * a - v * b).norm()
            }
            Shape::Sphere { center, radius } => ((p - center).norm() - radius).abs(),
            Shape::Cube { center, half, rotation } => {
                let q = (rotation.transpose() * (p - center)).map(|c| c.abs());
                let outside = q.map(|c| (c - half).max(0.0)).norm();
                if outside > 0.0 {
                    outside
                } else {
                    q.iter().map(|c| half - c).fold(f64::INFINITY, f64::min)
                }
            }
        }
    }

    /// Triangulated surface; spheres use a latitude-longitude grid.
    pub fn mesh(&self) -> TriangleMesh {
        match self {
            Shape::Rect { center, u, v, half_u, half_v } => TriangleMesh {
                vertices: [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
                    .iter()
                    .map(|(a, b)| center + u * (a * half_u) + v * (b * half_v))
                    .collect(),
                triangles: vec![[0, 1, 2], [0, 2, 3]],
            },
            Shape::Sphere { center, radius } => {
                let (rings, segs) = (64u32, 128u32);
                let mut vertices = Vec::new();
                for i in 0..=rings {
                    let th = std::f64::consts::PI * i as f64 / rings as f64;
                    for j in 0..segs {
                        let ph = std::f64::consts::TAU * j as f64 / segs as f64;
                        vertices.push(center + Vector3::new(th.sin() * ph.cos(), th.cos(), th.sin() * ph.sin()) * *radius);
                    }
                }
                let mut triangles = Vec::new();
                for i in 0..rings {
                    for j in 0..segs {
                        let a = i * segs + j;
                        let b = i * segs + (j + 1) % segs;
                        let (c, d) = (a + segs, b + segs);
                        if i > 0 {
                            triangles.push([a, b, c]);
                        }
                        if i + 1 < rings {
                            triangles.push([b, d, c]);
                        }
                    }
                }
                TriangleMesh { vertices, triangles }
            }
            Shape::Cube { center, half, rotation } => {
                let vertices = (0..8)
                    .map(|i| {
                        let s = Vector3::new(
                            if i & 1 == 0 { -1.0 } else { 1.0 },
                            if i & 2 == 0 { -1.0 } else { 1.0 },
                            if i & 4 == 0 { -1.0 } else { 1.0 },
                        );
                        center + rotation * (s * *half)
                    })
                    .collect();
                let faces = [[0, 4, 6, 2], [1, 3, 7, 5], [0, 1, 5, 4], [2, 6, 7, 3], [0, 2, 3, 1], [4, 5, 7, 6]];
                let triangles = faces.iter().flat_map(|f| [[f[0], f[1], f[2]], [f[0], f[2], f[3]]]).collect();
                TriangleMesh { vertices, triangles }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub shape: Shape,
    pub texture: Texture,
}

/// Ray hit: world point, camera-independent unit normal and object index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub object: usize,
}

/// Ground-truth rendering of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticView {
    pub image: Raster,
    /// z-depth of the pixel-center ray.
    pub depth: Raster,
    pub valid: Mask,
    /// Camera-frame normal facing the camera.
    pub normal: Raster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Plane,
    Sphere,
    Cube,
    TwoPlanes,
}

/// A set of textured analytic objects on a black background.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub objects: Vec<SceneObject>,
}

const SUPERSAMPLE: usize = 3;

impl SyntheticScene {
    pub fn preset(preset: Preset, seed: u64) -> Self {
        let (ex, ey) = (Vector3::x(), Vector3::y());
        let obj = |shape, k: u64| SceneObject {
            shape,
            texture: Texture::random(seed.wrapping_mul(31).wrapping_add(k)),
        };
        let rect = |z: f64, half: f64| Shape::Rect {
            center: Vector3::new(0.0, 0.0, z),
            u: ex,
            v: ey,
            half_u: half,
            half_v: half,
        };
        let objects = match preset {
            Preset::Plane => vec![obj(rect(0.0, 1.0), 0)],
            Preset::Sphere => vec![obj(Shape::Sphere { center: Vector3::zeros(), radius: 0.6 }, 0)],
            Preset::Cube => vec![obj(
                Shape::Cube {
                    center: Vector3::zeros(),
                    half: 0.45,
                    rotation: *Rotation3::from_axis_angle(&Vector3::y_axis(), 30f64.to_radians()).matrix(),
                },
                0,
            )],
            Preset::TwoPlanes => vec![obj(rect(0.0, 1.0), 0), obj(rect(0.6, 0.3), 1)],
        };
        Self { objects }
    }

    /// Nearest hit along `o + t d` with `t > t_min`.
    pub fn trace(&self, o: &Vector3<f64>, d: &Vector3<f64>, t_min: f64) -> Option<Hit> {
        self.objects
            .iter()
            .enumerate()
            .filter_map(|(k, ob)| ob.shape.intersect(o, d, t_min).map(|(t, n)| (k, t, n)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(object, t, normal)| Hit {
                t,
                point: o + d * t,
                normal,
                object,
            })
    }

    /// Hit of the ray through pixel `(u, v)`; `t` is the z-depth.
    pub fn trace_pixel(&self, cam: &Camera, u: f64, v: f64) -> Option<Hit> {
        let d = cam.rotation() * cam.pixel_ray(u, v);
        self.trace(&cam.center(), &d, 1e-9)
    }

    fn shade(&self, hit: &Hit) -> Vector3<f64> {
        self.objects[hit.object].texture.color(&hit.point)
    }

    /// Render color (3×3 supersampled), depth, validity and normals.
    pub fn render(&self, cam: &Camera) -> SyntheticView {
        let (h, w) = (cam.height(), cam.width());
        let rows: Vec<Vec<(Vector3<f64>, Option<(f64, Vector3<f64>)>)>> = (0..h)
            .into_par_iter()
            .map(|y| {
                (0..w)
                    .map(|x| {
                        let mut c = Vector3::zeros();
                        for sy in 0..SUPERSAMPLE {
                            for sx in 0..SUPERSAMPLE {
                                let off = |s: usize| (s as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                                if let Some(hit) = self.trace_pixel(cam, x as f64 + off(sx), y as f64 + off(sy)) {
                                    c += self.shade(&hit);
                                }
                            }
                        }
                        c /= (SUPERSAMPLE * SUPERSAMPLE) as f64;
                        let geo = self.trace_pixel(cam, x as f64, y as f64).map(|hit| {
                            let mut n = cam.rotation().transpose() * hit.normal;
                            if n.z > 0.0 {
                                n = -n;
                            }
                            (hit.t, n)
                        });
                        (c, geo)
                    })
                    .collect()
            })
            .collect();
        let mut image = Raster::zeros(h, w, 3);
        let mut depth = Raster::zeros(h, w, 1);
        let mut normal = Raster::zeros(h, w, 3);
        let mut valid = Mask::new(h, w, false);
        for (y, row) in rows.iter().enumerate() {
            for (x, (c, geo)) in row.iter().enumerate() {
                image.pixel_mut(x, y).copy_from_slice(c.as_slice());
                if let Some((t, n)) = geo {
                    depth.set(x, y, 0, *t);
                    normal.pixel_mut(x, y).copy_from_slice(n.as_slice());
                    valid.set(x, y, true);
                }
            }
        }
        SyntheticView { image, depth, valid, normal }
    }

    /// Unsigned distance to the nearest object surface.
    pub fn surface_distance(&self, p: &Vector3<f64>) -> f64 {
        self.objects.iter().map(|o| o.shape.distance(p)).fold(f64::INFINITY, f64::min)
    }

    /// Union of the object meshes.
    pub fn mesh(&self) -> TriangleMesh {
        let mut out = TriangleMesh::default();
        for o in &self.objects {
            let m = o.shape.mesh();
            let base = out.vertices.len() as u32;
            out.vertices.extend(m.vertices);
            out.triangles.extend(m.triangles.iter().map(|t| t.map(|i| i + base)));
        }
        out
    }

    /// Surface points hit by an `s × s` grid of rays in every pixel of every
    /// camera: a dense sampling of the observed surface.
    pub fn visible_points(&self, cams: &[Camera], s: usize) -> Vec<Vector3<f64>> {
        cams.iter()
            .flat_map(|cam| {
                (0..cam.height() * s)
                    .into_par_iter()
                    .flat_map_iter(|yy| {
                        (0..cam.width() * s).filter_map(move |xx| {
                            let u = (xx as f64 + 0.5) / s as f64 - 0.5;
                            let v = (yy as f64 + 0.5) / s as f64 - 0.5;
                            self.trace_pixel(cam, u, v).map(|h| h.point)
                        })
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    /// `n` noisy surface points with their true colors, drawn from random
    /// pixels of random cameras. Noise is isotropic with deviation `sigma`.
    pub fn sample_points<R: Rng>(
        &self,
        cams: &[Camera],
        n: usize,
        sigma: f64,
        rng: &mut R,
    ) -> Result<(Vec<Vector3<f64>>, Vec<Vector3<f64>>)> {
        let (mut pts, mut cols) = (Vec::with_capacity(n), Vec::with_capacity(n));
        let mut misses = 0usize;
        while pts.len() < n {
            let cam = &cams[rng.gen_range(0..cams.len())];
            let u = rng.gen_range(-0.5..cam.width() as f64 - 0.5);
            let v = rng.gen_range(-0.5..cam.height() as f64 - 0.5);
            match self.trace_pixel(cam, u, v) {
                Some(hit) => {
                    let z: Vector3<f64> = Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
                    pts.push(hit.point + z * sigma);
                    cols.push(self.shade(&hit));
                }
                None => {
                    misses += 1;
                    if misses > 100 * n.max(1000) {
                        return Err(Error::EmptyPointSet);
                    }
                }
            }
        }
        Ok((pts, cols))
    }

    /// Chamfer of reconstructed surface samples against a dense observed
    /// reference, with accuracy measured exactly against the analytic surface.
    pub fn chamfer(&self, reconstruction: &[Vector3<f64>], reference: &[Vector3<f64>]) -> Result<Chamfer> {
        if reconstruction.is_empty() || reference.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        let accuracy = reconstruction.par_iter().map(|p| self.surface_distance(p)).sum::<f64>() / reconstruction.len() as f64;
        let tree = KdTree::build(reconstruction);
        let completion = reference
            .par_iter()
            .map(|p| tree.nearest(p).map_or(0.0, |(_, d2)| d2.sqrt()))
            .sum::<f64>()
            / reference.len() as f64;
        Ok(Chamfer {
            accuracy,
            completion,
            average: 0.5 * (accuracy + completion),
        })
    }
}

/// Cameras on a ring around the origin looking at it.
///
/// Azimuth is measured from +z about +y, elevation above the xz-plane.
pub fn ring_cameras(azimuths_deg: &[f64], elevation_deg: f64, distance: f64, focal: f64, width: usize, height: usize) -> Result<Vec<Camera>> {
    let el = elevation_deg.to_radians();
    azimuths_deg
        .iter()
        .map(|a| {
            let a = a.to_radians();
            let eye = Vector3::new(el.cos() * a.sin(), el.sin(), el.cos() * a.cos()) * distance;
            Camera::look_at(eye, Vector3::zeros(), Vector3::y(), focal, focal, width, height)
        })
        .collect()
}

/// Manifest description of a generated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub preset: Preset,
    /// Training views.
    pub views: usize,
    /// Add held-out views halfway between neighbouring training azimuths.
    pub test_views: bool,
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels; defaults to `1.2 · width`.
    pub focal: Option<f64>,
    pub distance: f64,
    pub elevation_deg: f64,
    pub azimuth_span_deg: f64,
    pub init_points: usize,
    /// Standard deviation of the initial point noise, world units.
    pub init_noise: f64,
    /// Rays per pixel side when sampling the observed reference surface.
    pub reference_density: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            preset: Preset::Cube,
            views: 3,
            test_views: true,
            width: 64,
            height: 64,
            focal: None,
            distance: 3.0,
            elevation_deg: 20.0,
            azimuth_span_deg: 60.0,
            init_points: 1500,
            init_noise: 0.03,
            reference_density: 4,
            seed: 0,
        }
    }
}

/// Everything a generated scene provides.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub scene: SyntheticScene,
    pub train_cameras: Vec<Camera>,
    pub test_cameras: Vec<Camera>,
    pub train_views: Vec<SyntheticView>,
    pub test_views: Vec<SyntheticView>,
    pub init_points: Vec<Vector3<f64>>,
    pub init_colors: Vec<Vector3<f64>>,
    /// Dense samples of the surface observed by the training views.
    pub reference_points: Vec<Vector3<f64>>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic: {m}")));
        if self.views < 2 {
            return bad("at least 2 views are needed");
        }
        if self.width < 8 || self.height < 8 {
            return bad("images must be at least 8x8");
        }
        if !(self.distance > 0.0) || self.focal.is_some_and(|f| !(f > 0.0)) {
            return bad("distance and focal must be positive");
        }
        if !(self.init_noise >= 0.0) || self.init_points == 0 || self.reference_density == 0 {
            return bad("init_points, init_noise and reference_density must be positive");
        }
        Ok(())
    }

    pub fn azimuths(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.views;
        let step = self.azimuth_span_deg / (n - 1) as f64;
        let train: Vec<f64> = (0..n).map(|i| -0.5 * self.azimuth_span_deg + step * i as f64).collect();
        let test = if self.test_views { train.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect() } else { Vec::new() };
        (train, test)
    }

    pub fn generate(&self) -> Result<SyntheticData> {
        self.validate()?;
        let scene = SyntheticScene::preset(self.preset, self.seed);
        let focal = self.focal.unwrap_or(1.2 * self.width as f64);
        let (ta, va) = self.azimuths();
        let ring = |a: &[f64]| ring_cameras(a, self.elevation_deg, self.distance, focal, self.width, self.height);
        let train_cameras = ring(&ta)?;
        let test_cameras = ring(&va)?;
        let train_views: Vec<_> = train_cameras.iter().map(|c| scene.render(c)).collect();
        let test_views: Vec<_> = test_cameras.iter().map(|c| scene.render(c)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed);
        let (init_points, init_colors) = scene.sample_points(&train_cameras, self.init_points, self.init_noise, &mut rng)?;
        let reference_points = scene.visible_points(&train_cameras, self.reference_density);
        Ok(SyntheticData {
            scene,
            train_cameras,
            test_cameras,
            train_views,
            test_views,
            init_points,
            init_colors,
            reference_points,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn front_cam(w: usize) -> Camera {
        Camera::look_at(Vector3::new(0.0, 0.0, 3.0), Vector3::zeros(), Vector3::y(), 50.0, 50.0, w, w).unwrap()
    }

    #[test]
    fn plane_depth_is_exact() {
        let s = SyntheticScene::preset(Preset::Plane, 1);
        let v = s.render(&front_cam(16));
        assert_eq!(v.valid.count(), 256);
        assert!(v.depth.data().iter().all(|&d| close(d, 3.0, 1e-12)));
        // normal faces the camera: -z in the camera frame
        assert!(close(v.normal.get(5, 5, 2), -1.0, 1e-12));
    }

    #[test]
    fn sphere_center_depth_and_normal() {
        let s = SyntheticScene::preset(Preset::Sphere, 1);
        let v = s.render(&front_cam(17));
        assert!(close(v.depth.get(8, 8, 0), 2.4, 1e-12));
        assert!(!v.valid.get(0, 0));
        assert_eq!(v.image.pixel(0, 0), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn cube_hits_lie_on_surface() {
        let s = SyntheticScene::preset(Preset::Cube, 2);
        let cams = ring_cameras(&[-30.0, 10.0, 40.0], 20.0, 3.0, 60.0, 24, 24).unwrap();
        let pts = s.visible_points(&cams, 1);
        assert!(pts.len() > 300);
        assert!(pts.iter().all(|p| s.surface_distance(p) < 1e-9));
    }

    #[test]
    fn front_plane_occludes_back_plane() {
        let s = SyntheticScene::preset(Preset::TwoPlanes, 0);
        let v = s.render(&front_cam(16));
        let c = (v.depth.get(7, 7, 0), v.depth.get(0, 0, 0));
        assert!(close(c.0, 2.4, 1e-12) && close(c.1, 3.0, 1e-12));
    }

    #[test]
    fn cube_mesh_is_closed_and_outward() {
        let m = SyntheticScene::preset(Preset::Cube, 0).mesh();
        assert!(close(m.signed_volume(), 0.9f64.powi(3), 1e-12));
        assert!(close(m.area(), 6.0 * 0.81, 1e-12));
    }

    #[test]
    fn distances_match_geometry() {
        let sphere = Shape::Sphere { center: Vector3::zeros(), radius: 1.0 };
        assert!(close(sphere.distance(&Vector3::new(0.0, 3.0, 0.0)), 2.0, 1e-15));
        let cube = Shape::Cube { center: Vector3::zeros(), half: 1.0, rotation: Matrix3::identity() };
        assert!(close(cube.distance(&Vector3::new(0.2, 0.5, 0.0)), 0.5, 1e-15));
        assert!(close(cube.distance(&Vector3::new(2.0, 2.0, 0.5)), 2f64.sqrt(), 1e-15));
        let rect = SyntheticScene::preset(Preset::Plane, 0).objects[0].shape.clone();
        assert!(close(rect.distance(&Vector3::new(2.0, 0.0, 1.0)), 2f64.sqrt(), 1e-15));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec {
            width: 16,
            height: 16,
            init_points: 50,
            reference_density: 1,
            ..Default::default()
        };
        let (a, b) = (spec.generate().unwrap(), spec.generate().unwrap());
        assert_eq!(a.init_points, b.init_points);
        assert_eq!(a.train_views, b.train_views);
        assert_eq!(a.test_cameras.len(), 2);
    }

    #[test]
    fn synthetic_chamfer_of_exact_samples_is_small() {
        let spec = SyntheticSpec {
            width: 24,
            height: 24,
            init_points: 3000,
            init_noise: 0.0,
            reference_density: 1,
            ..Default::default()
        };
        let d = spec.generate().unwrap();
        let c = d.scene.chamfer(&d.init_points, &d.reference_points).unwrap();
        assert!(c.accuracy < 1e-9);
        assert!(c.completion < 0.05);
    }
}
