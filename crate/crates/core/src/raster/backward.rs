use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use super::geometry::normal_from_depth_backward;
use super::{PrimitiveGrad, RasterBundle, RasterGrads, RenderGradients, Splat};
use crate::error::{Error, Result};
use crate::image::Raster;
use crate::scene::{quat_to_matrix_backward, Camera, GaussianCloud, GaussianPrimitive, FEATURE_DIM};

/// Gradient accumulated in screen space for one splat.
#[derive(Debug, Clone, Default)]
struct SplatAcc {
    mean: Vector2<f64>,
    conic: Matrix2<f64>,
    opacity: f64,
    color: Vector3<f64>,
    normal: Vector3<f64>,
    distance: f64,
    feature: [f64; FEATURE_DIM],
}

impl SplatAcc {
    fn add(&mut self, o: &SplatAcc) {
        self.mean += o.mean;
        self.conic += o.conic;
        self.opacity += o.opacity;
        self.color += o.color;
        self.normal += o.normal;
        self.distance += o.distance;
        for (a, b) in self.feature.iter_mut().zip(&o.feature) {
            *a += b;
        }
    }
}

/// Exact reverse-mode pass from raster gradients down to primitive parameters.
///
/// `bundle` must come from [`super::render`] on the same `cloud`. Gradients
/// from all pixels are merged in fixed tile order, so results do not depend
/// on the thread count.
pub fn backward(cloud: &GaussianCloud, bundle: &RasterBundle, upstream: &RasterGrads) -> Result<RenderGradients> {
    let cache = &bundle.cache;
    let cam = &cache.camera;
    let (h, w) = (bundle.height(), bundle.width());

    // depth-derived normals feed back into depth
    let mut d_depth = upstream.depth.clone();
    normal_from_depth_backward(&bundle.depth, &bundle.depth_valid, cam, &upstream.depth_normal, &mut d_depth);

    // normalisation and ray/plane intersection feed back into the raw blends
    let mut d_normal_raw = Raster::zeros(h, w, 3);
    let mut d_distance_raw = upstream.distance.clone();
    for y in 0..h {
        for x in 0..w {
            let nr = Vector3::from_column_slice(cache.normal_raw.pixel(x, y));
            let mut dn = Vector3::zeros();
            if bundle.geometry_valid.get(x, y) {
                let len = nr.norm();
                let n = nr / len;
                let g = Vector3::from_column_slice(upstream.normal.pixel(x, y));
                dn += (g - n * n.dot(&g)) / len;
            }
            if bundle.depth_valid.get(x, y) {
                let dz = d_depth.get(x, y, 0);
                if dz != 0.0 {
                    let ray = cam.pixel_ray(x as f64, y as f64);
                    let s = nr.dot(&ray);
                    let dist = cache.distance_raw.get(x, y, 0);
                    d_distance_raw.add(x, y, 0, -dz / s);
                    dn += ray * (dz * dist / (s * s));
                }
            }
            d_normal_raw.pixel_mut(x, y).copy_from_slice(dn.as_slice());
        }
    }

    let partials: Vec<Result<Vec<SplatAcc>>> = cache
        .tiles
        .par_iter()
        .map(|tile| {
            let mut acc = vec![SplatAcc::default(); tile.splats.len()];
            let tw = tile.x1 - tile.x0;
            for local in 0..tile.final_t.len() {
                let (x, y) = (tile.x0 + local % tw, tile.y0 + local / tw);
                let range = tile.offsets[local] as usize..tile.offsets[local + 1] as usize;
                if range.is_empty() {
                    continue;
                }
                let gc = Vector3::from_column_slice(upstream.color.pixel(x, y));
                let ga = upstream.alpha.get(x, y, 0);
                let gn = Vector3::from_column_slice(d_normal_raw.pixel(x, y));
                let gd = d_distance_raw.get(x, y, 0);
                let gf = upstream.feature.pixel(x, y);
                let bg = Vector3::from(cache.background);
                // R_i: gradient-weighted value of everything behind contributor i
                let mut behind = gc.dot(&bg);
                for k in tile.contribs[range].iter().rev() {
                    let s = &cache.splats[tile.splats[k.local as usize] as usize];
                    let gv = gc.dot(&s.color)
                        + ga
                        + gn.dot(&s.normal_cam)
                        + gd * s.distance
                        + gf.iter().zip(&s.feature).map(|(a, b)| a * b).sum::<f64>();
                    let d_alpha = k.transmittance * (gv - behind);
                    behind = k.alpha * gv + (1.0 - k.alpha) * behind;
                    if !d_alpha.is_finite() {
                        return Err(Error::NonFiniteGradient {
                            primitive: s.index,
                            pixel: Some((x, y)),
                            what: "blend weight".into(),
                        });
                    }

                    let wgt = k.transmittance * k.alpha;
                    let a = &mut acc[k.local as usize];
                    a.color += gc * wgt;
                    a.normal += gn * wgt;
                    a.distance += gd * wgt;
                    for (af, g) in a.feature.iter_mut().zip(gf) {
                        *af += wgt * g;
                    }
                    a.opacity += k.gauss * d_alpha;
                    let d_power = k.gauss * s.opacity * d_alpha;
                    let delta = Vector2::new(x as f64 - s.mean.x, y as f64 - s.mean.y);
                    a.mean += s.conic * delta * d_power;
                    a.conic += delta * delta.transpose() * (-0.5 * d_power);
                }
            }
            Ok(acc)
        })
        .collect();

    let mut per_splat = vec![SplatAcc::default(); cache.splats.len()];
    for (tile, part) in cache.tiles.iter().zip(partials) {
        for (&si, a) in tile.splats.iter().zip(part?) {
            per_splat[si as usize].add(&a);
        }
    }

    let mut out = RenderGradients::zeros(cloud.len());
    for (vis, v) in out.visible_views.iter_mut().zip(cache.visible()) {
        *vis = v as u32;
    }
    for (s, a) in cache.splats.iter().zip(&per_splat) {
        let g = &cloud.primitives[s.index];
        let pg = splat_backward(g, s, cam, a);
        if !pg.is_finite() {
            return Err(Error::NonFiniteGradient {
                primitive: s.index,
                pixel: None,
                what: "parameter chain".into(),
            });
        }
        out.primitives[s.index] = pg;
        out.screen_grad[s.index] = Vector2::new(a.mean.x * 0.5 * w as f64, a.mean.y * 0.5 * h as f64).norm();
    }
    Ok(out)
}

fn splat_backward(g: &GaussianPrimitive, s: &Splat, cam: &Camera, a: &SplatAcc) -> PrimitiveGrad {
    let rc = cam.rotation();
    let p = s.proj.cam_pos;
    let o = s.opacity;

    // plane distance d = -(p · n)
    let mut dp = -s.normal_cam * a.distance;
    let dn_cam = a.normal - p * a.distance;

    // n_cam = W (sign · R[:, axis]), W = R_cᵀ
    let mut d_rot = Matrix3::zeros();
    let dn_world = rc * dn_cam * s.sign;
    for i in 0..3 {
        d_rot[(i, s.axis)] += dn_world[i];
    }

    // conic = cov⁻¹
    let q = s.conic;
    let d_cov2 = -(q * a.conic * q);
    // cov2 = J Σc Jᵀ + εI
    let j = s.proj.jacobian;
    let sc = s.proj.cov_cam;
    let d_sigma_cam = j.transpose() * d_cov2 * j;
    let d_j = (d_cov2 + d_cov2.transpose()) * j * sc;
    // Σc = W Σ Wᵀ
    let d_sigma = rc * d_sigma_cam * rc.transpose();
    // Σ = M Mᵀ, M = R S
    let r = g.rotation_matrix();
    let scales = g.scales();
    let m = r * Matrix3::from_diagonal(&scales);
    let d_m = (d_sigma + d_sigma.transpose()) * m;
    let mut d_log_scales = Vector3::zeros();
    for k in 0..3 {
        let col = d_m.column(k);
        for i in 0..3 {
            d_rot[(i, k)] += col[i] * scales[k];
        }
        d_log_scales[k] = col.dot(&r.column(k)) * scales[k];
    }

    // Jacobian and mean depend on the camera-space center
    let (fx, fy) = (cam.fx(), cam.fy());
    let iz = 1.0 / p.z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    dp.x += d_j[(0, 2)] * (-fx * iz2);
    dp.y += d_j[(1, 2)] * (-fy * iz2);
    dp.z += d_j[(0, 0)] * (-fx * iz2)
        + d_j[(0, 2)] * (2.0 * fx * p.x * iz3)
        + d_j[(1, 1)] * (-fy * iz2)
        + d_j[(1, 2)] * (2.0 * fy * p.y * iz3);
    dp.x += a.mean.x * fx * iz;
    dp.y += a.mean.y * fy * iz;
    dp.z += -a.mean.x * fx * p.x * iz2 - a.mean.y * fy * p.y * iz2;

    PrimitiveGrad {
        position: rc * dp,
        rotation: quat_to_matrix_backward(&g.rotation, &d_rot),
        log_scales: d_log_scales,
        opacity_logit: a.opacity * o * (1.0 - o),
        color: a.color,
        feature: a.feature,
    }
}
