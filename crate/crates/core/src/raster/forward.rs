use nalgebra::Vector3;
use rayon::prelude::*;

use super::geometry::{normal_from_depth, unbiased_depth};
use super::{Contrib, RasterBundle, RenderCache, RenderOptions, Splat, TileCache};
use crate::image::{Mask, Raster};
use crate::scene::{project, surfel_normal_parts, Camera, GaussianCloud, FEATURE_DIM};

/// Per-pixel accumulator layout: color(3), alpha, normal(3), distance, depth sum, feature(8).
const ACC: usize = 9 + FEATURE_DIM;

pub(crate) fn preprocess(cloud: &GaussianCloud, cam: &Camera, opts: &RenderOptions) -> Vec<Splat> {
    let near = opts.near(cloud);
    let w = cam.rotation().transpose();
    let mut splats: Vec<Splat> = cloud
        .primitives
        .par_iter()
        .enumerate()
        .filter_map(|(index, g)| {
            let proj = project(g, cam, near, opts.dilation)?;
            let det = proj.cov_2d.determinant();
            if !(det > 0.0) {
                return None;
            }
            let conic = proj.cov_2d.try_inverse()?;
            let (n_world, axis, sign) = surfel_normal_parts(g, cam);
            let normal_cam = w * n_world;
            let distance = -proj.cam_pos.dot(&normal_cam);
            Some(Splat {
                index,
                mean: proj.mean_2d,
                conic,
                opacity: g.opacity(),
                color: g.color,
                normal_cam,
                distance,
                feature: g.feature,
                depth: proj.depth_cam,
                proj,
                axis,
                sign,
            })
        })
        .collect();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    splats
}

/// Render every channel of `cloud` as seen from `cam`.
pub fn render(cloud: &GaussianCloud, cam: &Camera, opts: &RenderOptions) -> RasterBundle {
    let (h, w) = (cam.height(), cam.width());
    let ts = opts.tile_size.max(1);
    let tiles_x = w.div_ceil(ts);
    let tiles_y = h.div_ceil(ts);
    let splats = preprocess(cloud, cam, opts);

    // bin splats (already in blend order) into tiles
    let k = 2.0 * (1.0 / opts.g_min).ln();
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (si, s) in splats.iter().enumerate() {
        let rx = (k * s.proj.cov_2d[(0, 0)]).sqrt();
        let ry = (k * s.proj.cov_2d[(1, 1)]).sqrt();
        let x_lo = (s.mean.x - rx).ceil().max(0.0);
        let x_hi = (s.mean.x + rx).floor().min(w as f64 - 1.0);
        let y_lo = (s.mean.y - ry).ceil().max(0.0);
        let y_hi = (s.mean.y + ry).floor().min(h as f64 - 1.0);
        if !(x_lo <= x_hi && y_lo <= y_hi) {
            continue;
        }
        let (tx0, tx1) = (x_lo as usize / ts, x_hi as usize / ts);
        let (ty0, ty1) = (y_lo as usize / ts, y_hi as usize / ts);
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                bins[ty * tiles_x + tx].push(si as u32);
            }
        }
    }

    let tiles: Vec<(TileCache, Vec<[f64; ACC]>)> = bins
        .into_par_iter()
        .enumerate()
        .map(|(ti, list)| {
            let x0 = (ti % tiles_x) * ts;
            let y0 = (ti / tiles_x) * ts;
            let x1 = (x0 + ts).min(w);
            let y1 = (y0 + ts).min(h);
            blend_tile(&splats, list, (x0, y0, x1, y1), opts)
        })
        .collect();

    let mut color = Raster::zeros(h, w, 3);
    let mut alpha = Raster::zeros(h, w, 1);
    let mut normal_raw = Raster::zeros(h, w, 3);
    let mut distance_raw = Raster::zeros(h, w, 1);
    let mut feature = Raster::zeros(h, w, FEATURE_DIM);
    let mut mean_depth = Raster::zeros(h, w, 1);
    for (t, acc) in &tiles {
        let tw = t.x1 - t.x0;
        for (local, a) in acc.iter().enumerate() {
            let (x, y) = (t.x0 + local % tw, t.y0 + local / tw);
            let tf = t.final_t[local];
            for c in 0..3 {
                color.set(x, y, c, a[c] + tf * opts.background[c]);
                normal_raw.set(x, y, c, a[4 + c]);
            }
            alpha.set(x, y, 0, 1.0 - tf);
            distance_raw.set(x, y, 0, a[7]);
            if a[3] > 0.0 {
                mean_depth.set(x, y, 0, a[8] / a[3]);
            }
            feature.pixel_mut(x, y).copy_from_slice(&a[9..]);
        }
    }

    let mut normal = Raster::zeros(h, w, 3);
    let mut depth = Raster::zeros(h, w, 1);
    let mut geometry_valid = Mask::new(h, w, false);
    let mut depth_valid = Mask::new(h, w, false);
    for y in 0..h {
        for x in 0..w {
            let nr = Vector3::from_column_slice(normal_raw.pixel(x, y));
            let len = nr.norm();
            if !(alpha.get(x, y, 0) > opts.alpha_valid && len > 0.0) {
                continue;
            }
            geometry_valid.set(x, y, true);
            normal.pixel_mut(x, y).copy_from_slice((nr / len).as_slice());
            let ray = cam.pixel_ray(x as f64, y as f64);
            if let Some(z) = unbiased_depth(distance_raw.get(x, y, 0), &(-nr), &ray, opts.grazing_eps) {
                depth.set(x, y, 0, z);
                depth_valid.set(x, y, true);
            }
        }
    }
    let (depth_normal, depth_normal_valid) = normal_from_depth(&depth, &depth_valid, cam);

    let cache = RenderCache {
        camera: cam.clone(),
        splats,
        tiles: tiles.into_iter().map(|(t, _)| t).collect(),
        tiles_x,
        tile_size: ts,
        primitive_count: cloud.len(),
        background: opts.background,
        normal_raw,
        distance_raw: distance_raw.clone(),
    };
    RasterBundle {
        color,
        alpha,
        normal,
        distance: distance_raw,
        depth,
        feature,
        depth_normal,
        mean_depth,
        geometry_valid,
        depth_valid,
        depth_normal_valid,
        cache,
    }
}

fn blend_tile(
    splats: &[Splat],
    list: Vec<u32>,
    (x0, y0, x1, y1): (usize, usize, usize, usize),
    opts: &RenderOptions,
) -> (TileCache, Vec<[f64; ACC]>) {
    let n_pix = (x1 - x0) * (y1 - y0);
    let mut offsets = Vec::with_capacity(n_pix + 1);
    let mut contribs = Vec::new();
    let mut final_t = Vec::with_capacity(n_pix);
    let mut acc = Vec::with_capacity(n_pix);
    offsets.push(0u32);
    for y in y0..y1 {
        for x in x0..x1 {
            let mut a = [0.0; ACC];
            let mut t = 1.0;
            for (local, &si) in list.iter().enumerate() {
                let s = &splats[si as usize];
                let dx = x as f64 - s.mean.x;
                let dy = y as f64 - s.mean.y;
                let power = -0.5 * (s.conic[(0, 0)] * dx * dx + 2.0 * s.conic[(0, 1)] * dx * dy + s.conic[(1, 1)] * dy * dy);
                let g = power.exp();
                if g < opts.g_min {
                    continue;
                }
                let alpha = s.opacity * g;
                let wgt = t * alpha;
                for c in 0..3 {
                    a[c] += wgt * s.color[c];
                    a[4 + c] += wgt * s.normal_cam[c];
                }
                a[3] += wgt;
                a[7] += wgt * s.distance;
                a[8] += wgt * s.depth;
                for (c, f) in s.feature.iter().enumerate() {
                    a[9 + c] += wgt * f;
                }
                contribs.push(Contrib {
                    local: local as u32,
                    gauss: g,
                    alpha,
                    transmittance: t,
                });
                t *= 1.0 - alpha;
                if t < opts.t_min {
                    break;
                }
            }
            offsets.push(contribs.len() as u32);
            final_t.push(t);
            acc.push(a);
        }
    }
    (
        TileCache {
            x0,
            y0,
            x1,
            splats: list,
            offsets,
            contribs,
            final_t,
        },
        acc,
    )
}
