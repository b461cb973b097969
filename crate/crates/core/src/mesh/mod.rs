//! Surface extraction and evaluation: TSDF fusion of rendered depths,
//! marching cubes, Chamfer distance and image metrics.

mod marching;
mod metrics;
mod tsdf;

use nalgebra::Vector3;
use rand::Rng;

pub use marching::marching_cubes;
pub use metrics::{psnr, ssim, ssim_with_grad, PSNR_CAP};
pub use tsdf::{TsdfVolume, BLOCK};

use crate::error::{Error, Result};
use crate::image::{Mask, Raster};
use crate::scene::Camera;
use crate::spatial::KdTree;

/// Indexed triangle mesh.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    fn corners(&self, t: &[u32; 3]) -> [Vector3<f64>; 3] {
        t.map(|i| self.vertices[i as usize])
    }

    pub fn triangle_area(&self, k: usize) -> f64 {
        let [a, b, c] = self.corners(&self.triangles[k]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|k| self.triangle_area(k)).sum()
    }

    /// Volume enclosed by a closed mesh; positive when triangles face outward.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = self.corners(t);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// `n` points distributed uniformly by area.
    pub fn sample_surface<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Vec<Vector3<f64>>> {
        let mut cdf = Vec::with_capacity(self.triangles.len());
        let mut acc = 0.0;
        for k in 0..self.triangles.len() {
            acc += self.triangle_area(k);
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::EmptyPointSet);
        }
        Ok((0..n)
            .map(|_| {
                let r = rng.gen_range(0.0..acc);
                let k = cdf.partition_point(|&c| c <= r).min(cdf.len() - 1);
                let [a, b, c] = self.corners(&self.triangles[k]);
                let (s, t): (f64, f64) = (rng.gen(), rng.gen());
                let su = s.sqrt();
                a * (1.0 - su) + b * (su * (1.0 - t)) + c * (su * t)
            })
            .collect())
    }
}

/// Fuse depth maps into a fresh volume and extract its surface.
pub fn fuse_depths(
    views: &[(&Raster, &Mask, &Camera)],
    voxel_size: f64,
    trunc_voxels: f64,
) -> (TsdfVolume, TriangleMesh) {
    let mut vol = TsdfVolume::new(Vector3::zeros(), voxel_size, trunc_voxels);
    for (depth, valid, cam) in views {
        vol.integrate(depth, valid, cam);
    }
    let mesh = marching_cubes(&vol);
    (vol, mesh)
}

/// Symmetric nearest-neighbour distances between two point sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chamfer {
    /// Mean distance from the reconstruction to the reference.
    pub accuracy: f64,
    /// Mean distance from the reference to the reconstruction.
    pub completion: f64,
    /// `(accuracy + completion) / 2`.
    pub average: f64,
}

/// Chamfer distance between `reconstruction` and `reference` point sets.
pub fn chamfer(reconstruction: &[Vector3<f64>], reference: &[Vector3<f64>]) -> Result<Chamfer> {
    if reconstruction.is_empty() || reference.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let one_way = |from: &[Vector3<f64>], to: &[Vector3<f64>]| {
        let tree = KdTree::build(to);
        from.iter().map(|p| tree.nearest(p).map(|(_, d2)| d2.sqrt()).unwrap_or(0.0)).sum::<f64>() / from.len() as f64
    };
    let accuracy = one_way(reconstruction, reference);
    let completion = one_way(reference, reconstruction);
    Ok(Chamfer {
        accuracy,
        completion,
        average: 0.5 * (accuracy + completion),
    })
}

/// Sample `n` points on the mesh and compare them with `reference`.
pub fn mesh_chamfer<R: Rng>(mesh: &TriangleMesh, reference: &[Vector3<f64>], n: usize, rng: &mut R) -> Result<Chamfer> {
    let pts = mesh.sample_surface(n, rng)?;
    chamfer(&pts, reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(seed: u64, n: usize) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Vector3::new(rng.gen(), rng.gen(), rng.gen())).collect()
    }

    #[test]
    fn chamfer_of_identical_sets_is_zero() {
        let a = cloud(1, 200);
        assert_eq!(chamfer(&a, &a).unwrap().average, 0.0);
    }

    #[test]
    fn chamfer_of_translated_plane() {
        let a: Vec<_> = (0..30).flat_map(|i| (0..30).map(move |j| Vector3::new(i as f64 * 0.1, j as f64 * 0.1, 0.0))).collect();
        let b: Vec<_> = a.iter().map(|p| p + Vector3::new(0.0, 0.0, 0.25)).collect();
        let c = chamfer(&a, &b).unwrap();
        assert!((c.accuracy - 0.25).abs() < 1e-12 && (c.completion - 0.25).abs() < 1e-12);
    }

    #[test]
    fn empty_sets_are_rejected() {
        assert!(chamfer(&[], &cloud(0, 3)).is_err());
        assert!(TriangleMesh::default().sample_surface(10, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn surface_samples_lie_on_triangles() {
        let mesh = TriangleMesh {
            vertices: vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0), Vector3::new(0.0, 0.0, 3.0)],
            triangles: vec![[0, 1, 2], [0, 1, 3]],
        };
        let pts = mesh.sample_surface(4000, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let on_second = pts.iter().filter(|p| p.z > 1e-12).count() as f64 / 4000.0;
        // the second triangle has three times the area
        assert!((on_second - 0.75).abs() < 0.03);
        assert!(pts.iter().all(|p| p.z.abs() < 1e-12 || p.y.abs() < 1e-12));
    }

    proptest! {
        #[test]
        fn chamfer_is_symmetric_and_nonnegative(s1 in 0u64..50, s2 in 0u64..50) {
            let (a, b) = (cloud(s1, 40), cloud(s2 + 100, 55));
            let ab = chamfer(&a, &b).unwrap();
            let ba = chamfer(&b, &a).unwrap();
            prop_assert!(ab.average >= 0.0);
            prop_assert!((ab.average - ba.average).abs() < 1e-12);
        }
    }
}
