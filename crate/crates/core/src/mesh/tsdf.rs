use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::image::{bilinear_taps, Mask, Raster};
use crate::scene::Camera;

/// Voxels per block side.
pub const BLOCK: i32 = 8;
const BLOCK_VOXELS: usize = (BLOCK * BLOCK * BLOCK) as usize;

#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub tsdf: Box<[f32; BLOCK_VOXELS]>,
    pub weight: Box<[f32; BLOCK_VOXELS]>,
}

impl Block {
    fn new() -> Self {
        Self {
            tsdf: Box::new([1.0; BLOCK_VOXELS]),
            weight: Box::new([0.0; BLOCK_VOXELS]),
        }
    }
}

pub(crate) fn local_index(l: [i32; 3]) -> usize {
    (l[0] + BLOCK * (l[1] + BLOCK * l[2])) as usize
}

pub(crate) fn split_voxel(v: [i32; 3]) -> ([i32; 3], [i32; 3]) {
    let b = [v[0].div_euclid(BLOCK), v[1].div_euclid(BLOCK), v[2].div_euclid(BLOCK)];
    let l = [v[0].rem_euclid(BLOCK), v[1].rem_euclid(BLOCK), v[2].rem_euclid(BLOCK)];
    (b, l)
}

/// Sparse truncated signed distance volume.
///
/// Voxel `(i, j, k)` is centred at `origin + voxel_size · (i, j, k)`; storage
/// is allocated in `8³` blocks near observed surfaces only. Values are signed
/// distances divided by the truncation distance, positive in observed free
/// space and negative behind surfaces.
#[derive(Debug, Clone)]
pub struct TsdfVolume {
    pub origin: Vector3<f64>,
    pub voxel_size: f64,
    /// Truncation distance, world units.
    pub truncation: f64,
    pub(crate) blocks: HashMap<[i32; 3], Block>,
}

impl TsdfVolume {
    /// Volume with truncation `trunc_voxels · voxel_size`.
    pub fn new(origin: Vector3<f64>, voxel_size: f64, trunc_voxels: f64) -> Self {
        assert!(voxel_size > 0.0 && trunc_voxels > 0.0);
        Self {
            origin,
            voxel_size,
            truncation: trunc_voxels * voxel_size,
            blocks: HashMap::new(),
        }
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn voxel_center(&self, v: [i32; 3]) -> Vector3<f64> {
        self.origin + Vector3::new(v[0] as f64, v[1] as f64, v[2] as f64) * self.voxel_size
    }

    fn voxel_of(&self, p: &Vector3<f64>) -> [i32; 3] {
        let q = (p - self.origin) / self.voxel_size;
        [q.x.round() as i32, q.y.round() as i32, q.z.round() as i32]
    }

    /// `(tsdf, weight)` of an allocated voxel.
    pub fn get(&self, v: [i32; 3]) -> Option<(f32, f32)> {
        let (b, l) = split_voxel(v);
        self.blocks.get(&b).map(|blk| {
            let i = local_index(l);
            (blk.tsdf[i], blk.weight[i])
        })
    }

    /// Overwrite one voxel, allocating its block.
    pub fn set(&mut self, v: [i32; 3], tsdf: f32, weight: f32) {
        let (b, l) = split_voxel(v);
        let blk = self.blocks.entry(b).or_insert_with(Block::new);
        let i = local_index(l);
        blk.tsdf[i] = tsdf;
        blk.weight[i] = weight;
    }

    /// Every allocated voxel with positive weight, in key order.
    pub fn observed_voxels(&self) -> Vec<([i32; 3], f32, f32)> {
        let mut keys: Vec<_> = self.blocks.keys().copied().collect();
        keys.sort();
        let mut out = Vec::new();
        for b in keys {
            let blk = &self.blocks[&b];
            for z in 0..BLOCK {
                for y in 0..BLOCK {
                    for x in 0..BLOCK {
                        let i = local_index([x, y, z]);
                        if blk.weight[i] > 0.0 {
                            out.push(([b[0] * BLOCK + x, b[1] * BLOCK + y, b[2] * BLOCK + z], blk.tsdf[i], blk.weight[i]));
                        }
                    }
                }
            }
        }
        out
    }

    /// Fuse one depth map.
    ///
    /// Blocks within the truncation band of every valid pixel (sampled below
    /// block resolution) are allocated first. Each voxel of an allocated block
    /// that projects where all bilinear taps have valid depth receives
    /// `sdf = depth(u) - z_voxel`; voxels more than the truncation distance
    /// behind the surface are left untouched.
    pub fn integrate(&mut self, depth: &Raster, valid: &Mask, cam: &Camera) {
        self.allocate(depth, valid, cam);
        let trunc = self.truncation;
        let (vs, origin) = (self.voxel_size, self.origin);
        let (w, h) = (cam.width(), cam.height());
        self.blocks.par_iter_mut().for_each(|(key, blk)| {
            for z in 0..BLOCK {
                for y in 0..BLOCK {
                    for x in 0..BLOCK {
                        let v = [key[0] * BLOCK + x, key[1] * BLOCK + y, key[2] * BLOCK + z];
                        let p = origin + Vector3::new(v[0] as f64, v[1] as f64, v[2] as f64) * vs;
                        let pc = cam.world_to_camera(&p);
                        if pc.z <= 0.0 {
                            continue;
                        }
                        let uv = cam.project_camera(&pc);
                        let Some(taps) = bilinear_taps(uv.x, uv.y, w, h) else { continue };
                        if taps.iter().any(|&(i, j, wt)| wt > 0.0 && !valid.get(i, j)) {
                            continue;
                        }
                        let d: f64 = taps.iter().map(|&(i, j, wt)| if wt > 0.0 { wt * depth.get(i, j, 0) } else { 0.0 }).sum();
                        let sdf = d - pc.z;
                        if sdf < -trunc {
                            continue;
                        }
                        let t = (sdf / trunc).min(1.0);
                        let i = local_index([x, y, z]);
                        let w0 = blk.weight[i] as f64;
                        blk.tsdf[i] = ((blk.tsdf[i] as f64 * w0 + t) / (w0 + 1.0)) as f32;
                        blk.weight[i] = (w0 + 1.0) as f32;
                    }
                }
            }
        });
    }

    fn allocate(&mut self, depth: &Raster, valid: &Mask, cam: &Camera) {
        let block_size = BLOCK as f64 * self.voxel_size;
        let (w, h) = (cam.width(), cam.height());
        let mut keys = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if !valid.get(x, y) {
                    continue;
                }
                let z = depth.get(x, y, 0);
                let footprint = z / cam.fx().min(cam.fy());
                let sub = ((2.0 * footprint / block_size).ceil() as usize).clamp(1, 64);
                let steps = ((2.0 * self.truncation / (0.5 * block_size)).ceil() as usize).max(1);
                for sy in 0..sub {
                    for sx in 0..sub {
                        let u = x as f64 + (sx as f64 + 0.5) / sub as f64 - 0.5;
                        let v = y as f64 + (sy as f64 + 0.5) / sub as f64 - 0.5;
                        let d = interpolated_depth(depth, valid, u, v).unwrap_or(z);
                        for s in 0..=steps {
                            let zz = d - self.truncation + 2.0 * self.truncation * s as f64 / steps as f64;
                            if zz <= 0.0 {
                                continue;
                            }
                            let p = cam.camera_to_world(&cam.backproject(u, v, zz));
                            let (b, _) = split_voxel(self.voxel_of(&p));
                            keys.push(b);
                        }
                    }
                }
            }
        }
        for b in keys {
            self.blocks.entry(b).or_insert_with(Block::new);
        }
    }
}

fn interpolated_depth(depth: &Raster, valid: &Mask, u: f64, v: f64) -> Option<f64> {
    let taps = bilinear_taps(u, v, depth.width(), depth.height())?;
    if taps.iter().any(|&(i, j, wt)| wt > 0.0 && !valid.get(i, j)) {
        return None;
    }
    Some(taps.iter().map(|&(i, j, wt)| if wt > 0.0 { wt * depth.get(i, j, 0) } else { 0.0 }).sum())
}
