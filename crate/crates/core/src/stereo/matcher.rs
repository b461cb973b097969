use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::image::{Mask, Raster};
use crate::io::ExternalCommand;

/// Left-view disparity in pixels with its validity.
#[derive(Debug, Clone, PartialEq)]
pub struct Disparity {
    pub values: Raster,
    pub valid: Mask,
}

impl Disparity {
    pub fn flip_horizontal(&self) -> Disparity {
        Disparity {
            values: self.values.flip_horizontal(),
            valid: self.valid.flip_horizontal(),
        }
    }

    fn from_values(values: Raster) -> Disparity {
        let valid = Mask::from_fn(values.height(), values.width(), |x, y| {
            let v = values.get(x, y, 0);
            v.is_finite() && v >= 0.0
        });
        Disparity { values, valid }
    }
}

/// Zero-mean NCC block matcher for a rectified pair whose right camera sits
/// at `+x` of the left one, so a left pixel `u` matches right pixel `u - d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlockMatcher {
    /// Odd window side length.
    pub window: usize,
    /// Largest disparity searched; `None` means a quarter of the image width.
    pub max_disparity: Option<usize>,
    /// Windows with luma variance below this are rejected as textureless.
    pub min_variance: f64,
    /// Best scores below this are rejected.
    pub min_score: f64,
}

impl Default for BlockMatcher {
    fn default() -> Self {
        Self {
            window: 9,
            max_disparity: None,
            min_variance: 1e-6,
            min_score: 0.5,
        }
    }
}

struct WindowStats {
    mean: Vec<f64>,
    std: Vec<f64>,
}

fn window_stats(img: &Raster, r: usize) -> WindowStats {
    let (h, w) = (img.height(), img.width());
    let n = ((2 * r + 1) * (2 * r + 1)) as f64;
    let mut mean = vec![f64::NAN; h * w];
    let mut std = vec![0.0; h * w];
    for y in r..h.saturating_sub(r) {
        for x in r..w.saturating_sub(r) {
            let (mut s, mut s2) = (0.0, 0.0);
            for j in y - r..=y + r {
                for i in x - r..=x + r {
                    let v = img.get(i, j, 0);
                    s += v;
                    s2 += v * v;
                }
            }
            let m = s / n;
            mean[y * w + x] = m;
            std[y * w + x] = (s2 / n - m * m).max(0.0).sqrt();
        }
    }
    WindowStats { mean, std }
}

impl BlockMatcher {
    pub fn match_pair(&self, left: &Raster, right: &Raster) -> Disparity {
        let (l, r) = (left.luma(), right.luma());
        let (h, w) = (l.height(), l.width());
        let rad = self.window / 2;
        let dmax = self.max_disparity.unwrap_or(w / 4);
        let ls = window_stats(&l, rad);
        let rs = window_stats(&r, rad);
        let n = ((2 * rad + 1) * (2 * rad + 1)) as f64;
        let min_std = self.min_variance.sqrt();

        let rows: Vec<Vec<Option<f64>>> = (0..h)
            .into_par_iter()
            .map(|y| {
                let mut row = vec![None; w];
                if y < rad || y + rad >= h {
                    return row;
                }
                for x in rad..w.saturating_sub(rad) {
                    let i = y * w + x;
                    if ls.std[i] < min_std {
                        continue;
                    }
                    let local_max = dmax.min(x - rad);
                    let scores: Vec<f64> = (0..=local_max)
                        .map(|d| {
                            let xr = x - d;
                            let j = y * w + xr;
                            if rs.std[j] < min_std {
                                return -1.0;
                            }
                            let mut acc = 0.0;
                            for dy in 0..=2 * rad {
                                let yy = y + dy - rad;
                                for dx in 0..=2 * rad {
                                    acc += (l.get(x + dx - rad, yy, 0) - ls.mean[i])
                                        * (r.get(xr + dx - rad, yy, 0) - rs.mean[j]);
                                }
                            }
                            acc / (n * ls.std[i] * rs.std[j])
                        })
                        .collect();
                    let (best, &score) = scores
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                        .unwrap();
                    // the true match may lie beyond a range truncated by the border
                    if score < self.min_score || (best == local_max && local_max < dmax) {
                        continue;
                    }
                    let mut d = best as f64;
                    if best > 0 && best < local_max {
                        let (sm, sp) = (scores[best - 1], scores[best + 1]);
                        let curv = sm - 2.0 * score + sp;
                        if curv < 0.0 {
                            d += (0.5 * (sm - sp) / curv).clamp(-0.5, 0.5);
                        }
                    }
                    row[x] = Some(d.max(0.0));
                }
                row
            })
            .collect();

        let mut values = Raster::zeros(h, w, 1);
        let mut valid = Mask::new(h, w, false);
        for (y, row) in rows.iter().enumerate() {
            for (x, d) in row.iter().enumerate() {
                if let Some(d) = d {
                    values.set(x, y, 0, *d);
                    valid.set(x, y, true);
                }
            }
        }
        Disparity { values, valid }
    }
}

/// Source of disparity maps.
#[derive(Debug, Clone, PartialEq)]
pub enum StereoBackend {
    BuiltIn(BlockMatcher),
    /// `<cmd> <left.fras> <right.fras> <out_disparity.fras>`.
    External(ExternalCommand),
}

impl Default for StereoBackend {
    fn default() -> Self {
        StereoBackend::BuiltIn(BlockMatcher::default())
    }
}

impl StereoBackend {
    /// Left-view disparity of a rectified pair (right camera at `+x`).
    pub fn disparity(&self, left: &Raster, right: &Raster) -> Result<Disparity> {
        left.ensure_same_shape(right)?;
        match self {
            StereoBackend::BuiltIn(m) => Ok(m.match_pair(left, right)),
            StereoBackend::External(cmd) => {
                let values = cmd.run(&[left, right], left.height(), left.width(), 1)?;
                Ok(Disparity::from_values(values))
            }
        }
    }

    /// Disparities of both views; the right one comes from matching the
    /// mirrored pair with roles swapped.
    pub fn disparity_both(&self, left: &Raster, right: &Raster) -> Result<(Disparity, Disparity)> {
        let dl = self.disparity(left, right)?;
        let dr = self
            .disparity(&right.flip_horizontal(), &left.flip_horizontal())?
            .flip_horizontal();
        Ok((dl, dr))
    }
}

/// Left-right check: `|d_l(u) - d_r(u - d_l(u))| ≤ tau`, with linear
/// interpolation on the right map and in-bounds reprojection.
pub fn consistency_mask(left: &Disparity, right: &Disparity, tau: f64) -> Mask {
    let (h, w) = (left.values.height(), left.values.width());
    Mask::from_fn(h, w, |x, y| {
        if !left.valid.get(x, y) {
            return false;
        }
        let d = left.values.get(x, y, 0);
        let u = x as f64 - d;
        if !(u >= 0.0 && u <= (w - 1) as f64) {
            return false;
        }
        let x0 = u.floor() as usize;
        let x1 = (x0 + 1).min(w - 1);
        let t = u - x0 as f64;
        let taps = [(x0, 1.0 - t), (x1, t)];
        if taps.iter().any(|&(xi, wt)| wt > 0.0 && !right.valid.get(xi, y)) {
            return false;
        }
        let dr: f64 = taps.iter().map(|&(xi, wt)| if wt > 0.0 { wt * right.values.get(xi, y, 0) } else { 0.0 }).sum();
        (d - dr).abs() <= tau
    })
}
