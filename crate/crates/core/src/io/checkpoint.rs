//! Training checkpoints: primitives as a binary PLY plus an optimizer sidecar.

use std::path::{Path, PathBuf};

use nalgebra::{Vector3, Vector4};

use super::ply::{read_ply, write_binary_table};
use crate::error::{Error, Result};
use crate::scene::{GaussianCloud, GaussianPrimitive, FEATURE_DIM};
use crate::train::{Adam, OptimConfig, PARAMS};

const SIDECAR_MAGIC: &[u8; 4] = b"SSOP";
const SIDECAR_VERSION: u32 = 1;

fn columns() -> Vec<String> {
    let mut c: Vec<String> = ["x", "y", "z", "rot_0", "rot_1", "rot_2", "rot_3", "scale_0", "scale_1", "scale_2", "opacity", "red", "green", "blue"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    c.extend((0..FEATURE_DIM).map(|k| format!("feat_{k}")));
    c
}

/// Path of the optimizer sidecar that accompanies checkpoint `ply`.
pub fn sidecar_path(ply: &Path) -> PathBuf {
    ply.with_extension("optim")
}

/// Primitives, scene radius and iteration restored from a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub cloud: GaussianCloud,
    pub iter: usize,
}

/// Write the primitives (raw parameters, doubles) and, if given, the
/// optimizer moments next to them.
pub fn save_checkpoint(path: &Path, cloud: &GaussianCloud, iter: usize, adam: Option<&Adam>) -> Result<()> {
    let rows: Vec<Vec<f64>> = cloud
        .primitives
        .iter()
        .map(|g| {
            let mut r = Vec::with_capacity(14 + FEATURE_DIM);
            r.extend(g.position.iter());
            r.extend(g.rotation.iter());
            r.extend(g.log_scales.iter());
            r.push(g.opacity_logit);
            r.extend(g.color.iter());
            r.extend(g.feature.iter());
            r
        })
        .collect();
    let comments = vec![format!("scene_radius {:e}", cloud.scene_radius()), format!("iteration {iter}")];
    write_binary_table(path, "vertex", &columns(), &rows, &comments)?;
    if let Some(a) = adam {
        let side = sidecar_path(path);
        std::fs::write(&side, encode_moments(a)).map_err(|e| Error::io(&side, e))?;
    }
    Ok(())
}

fn comment_value<T: std::str::FromStr>(comments: &[String], key: &str) -> Option<T> {
    comments.iter().find_map(|c| {
        let mut it = c.split_whitespace();
        (it.next() == Some(key)).then(|| it.next()?.parse().ok()).flatten()
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let ply = read_ply(path)?;
    let cols = columns()
        .iter()
        .map(|c| ply.column("vertex", c))
        .collect::<Result<Vec<_>>>()?;
    let n = cols[0].len();
    let primitives = (0..n)
        .map(|i| {
            let v = |k: usize| cols[k][i];
            let mut feature = [0.0; FEATURE_DIM];
            for (k, f) in feature.iter_mut().enumerate() {
                *f = v(14 + k);
            }
            let g = GaussianPrimitive {
                position: Vector3::new(v(0), v(1), v(2)),
                rotation: Vector4::new(v(3), v(4), v(5), v(6)),
                log_scales: Vector3::new(v(7), v(8), v(9)),
                opacity_logit: v(10),
                color: Vector3::new(v(11), v(12), v(13)),
                feature,
            };
            if g.is_finite() && g.rotation.norm() > 0.0 {
                Ok(g)
            } else {
                Err(Error::Ply(format!("{}: primitive {i} is invalid", path.display())))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let radius = comment_value::<f64>(&ply.comments, "scene_radius")
        .ok_or_else(|| Error::Ply(format!("{}: missing scene_radius comment", path.display())))?;
    let iter = comment_value::<usize>(&ply.comments, "iteration").unwrap_or(0);
    Ok(Checkpoint {
        cloud: GaussianCloud::new(primitives, radius)?,
        iter,
    })
}

fn encode_moments(a: &Adam) -> Vec<u8> {
    let n = a.first.len();
    let mut b = Vec::with_capacity(32 + n * PARAMS * 16);
    b.extend_from_slice(SIDECAR_MAGIC);
    b.extend_from_slice(&SIDECAR_VERSION.to_le_bytes());
    b.extend_from_slice(&a.step.to_le_bytes());
    b.extend_from_slice(&a.skipped.to_le_bytes());
    b.extend_from_slice(&(n as u64).to_le_bytes());
    for buf in [&a.first, &a.second] {
        for row in buf.iter() {
            for v in row {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    b
}

/// Restore optimizer state written by [`save_checkpoint`].
pub fn load_optimizer(path: &Path, config: OptimConfig) -> Result<Adam> {
    let side = sidecar_path(path);
    let bytes = std::fs::read(&side).map_err(|e| Error::io(&side, e))?;
    let bad = |m: &str| Error::Ply(format!("{}: {m}", side.display()));
    if bytes.len() < 32 || &bytes[..4] != SIDECAR_MAGIC {
        return Err(bad("not an optimizer sidecar"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    if u32_at(4) != SIDECAR_VERSION {
        return Err(bad("unsupported sidecar version"));
    }
    let n = u64_at(24) as usize;
    if bytes.len() != 32 + n * PARAMS * 16 {
        return Err(bad("truncated sidecar"));
    }
    let mut adam = Adam::new(config, n);
    adam.step = u64_at(8);
    adam.skipped = u64_at(16);
    let mut o = 32;
    for buf in [&mut adam.first, &mut adam.second] {
        for row in buf.iter_mut() {
            for v in row.iter_mut() {
                *v = f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
                o += 8;
            }
        }
    }
    Ok(adam)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> GaussianCloud {
        let mut g = GaussianPrimitive::new(Vector3::new(0.1, -0.2, 3.0), Vector4::new(0.9, 0.1, 0.2, 0.3), Vector3::new(0.1, 0.2, 1e-6), 0.4, Vector3::new(0.2, 0.5, 0.7)).unwrap();
        g.feature = [1.0, -2.0, 0.5, 0.0, -0.0, 1e-300, 3.0, 4.0];
        let mut h = g.clone();
        h.position.x = -7.5;
        GaussianCloud::new(vec![g, h], 2.5).unwrap()
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ply");
        let c = cloud();
        let mut adam = Adam::new(OptimConfig::default(), 2);
        adam.first[1][3] = 0.25;
        adam.second[0][21] = 1e-20;
        adam.step = 17;
        adam.skipped = 2;
        save_checkpoint(&p, &c, 1234, Some(&adam)).unwrap();
        let back = load_checkpoint(&p).unwrap();
        assert_eq!(back.cloud, c);
        assert_eq!(back.iter, 1234);
        assert_eq!(load_optimizer(&p, OptimConfig::default()).unwrap(), adam);
    }

    #[test]
    fn missing_sidecar_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ply");
        save_checkpoint(&p, &cloud(), 0, None).unwrap();
        assert!(load_checkpoint(&p).is_ok());
        assert!(load_optimizer(&p, OptimConfig::default()).is_err());
    }
}
