//! Dense multi-channel rasters and boolean masks.
//!
//! Pixel `(x, y)` is column `x`, row `y`; its center sits at integer image
//! coordinates, which is the convention used by projection, warping and
//! stereo matching throughout the crate.

use crate::error::{Error, Result};

/// Row-major, channel-interleaved `H×W×C` raster of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch {
                expected: format!("{height}x{width}x{channels} = {}", height * width * channels),
                actual: data.len().to_string(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        self.data[(y * self.width + x) * self.channels + c] = value;
    }

    #[inline]
    pub fn add(&mut self, x: usize, y: usize, c: usize, value: f64) {
        self.data[(y * self.width + x) * self.channels + c] += value;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn ensure_same_shape(&self, other: &Raster) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.shape_string(),
                actual: other.shape_string(),
            })
        }
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.height, self.width, self.channels)
    }

    /// Extract a single channel as a 1-channel raster.
    pub fn channel(&self, c: usize) -> Raster {
        Raster::from_fn(self.height, self.width, 1, |x, y, _| self.get(x, y, c))
    }

    /// Mean of the three color channels.
    pub fn luma(&self) -> Raster {
        Raster::from_fn(self.height, self.width, 1, |x, y, _| {
            let p = self.pixel(x, y);
            let n = p.len().min(3);
            p[..n].iter().sum::<f64>() / n as f64
        })
    }

    pub fn flip_horizontal(&self) -> Raster {
        let w = self.width;
        Raster::from_fn(self.height, w, self.channels, |x, y, c| self.get(w - 1 - x, y, c))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Raster {
        Raster {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp01(&self) -> Raster {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bilinear sample of all channels at continuous coordinates.
    ///
    /// Returns `None` outside `[0, W-1] × [0, H-1]`.
    pub fn sample_bilinear(&self, u: f64, v: f64, out: &mut [f64]) -> Option<()> {
        let taps = bilinear_taps(u, v, self.width, self.height)?;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (x, y, w) in taps {
            if w == 0.0 {
                continue;
            }
            for (o, s) in out.iter_mut().zip(self.pixel(x, y)) {
                *o += w * s;
            }
        }
        Some(())
    }
}

/// The four bilinear taps `(x, y, weight)` at `(u, v)`.
///
/// The right/bottom taps collapse onto the last column/row when the
/// coordinate sits exactly on the border, keeping the lookup in bounds.
pub fn bilinear_taps(u: f64, v: f64, width: usize, height: usize) -> Option<[(usize, usize, f64); 4]> {
    if !(u >= 0.0 && v >= 0.0 && u <= (width - 1) as f64 && v <= (height - 1) as f64) {
        return None;
    }
    let x0 = (u.floor() as usize).min(width - 1);
    let y0 = (v.floor() as usize).min(height - 1);
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = u - x0 as f64;
    let fy = v - y0 as f64;
    Some([
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x1, y0, fx * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y1, fx * fy),
    ])
}

/// Per-pixel boolean mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, value: bool) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { height, width, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn coverage(&self) -> f64 {
        self.count() as f64 / self.data.len().max(1) as f64
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        }
    }

    pub fn flip_horizontal(&self) -> Mask {
        let w = self.width;
        Mask::from_fn(self.height, w, |x, y| self.get(w - 1 - x, y))
    }

    pub fn to_raster(&self) -> Raster {
        Raster::from_fn(self.height, self.width, 1, |x, y, _| if self.get(x, y) { 1.0 } else { 0.0 })
    }
}

/// Normalised, truncated 1-D Gaussian kernel used for SSIM windows.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let k: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable windowed mean with border renormalisation.
///
/// Each output pixel is the weighted mean of the in-bounds window taps, so
/// constant images stay constant up to the border.
#[derive(Debug, Clone)]
pub struct WindowFilter {
    kernel: Vec<f64>,
}

impl WindowFilter {
    pub fn new(kernel: Vec<f64>) -> Self {
        assert!(kernel.len() % 2 == 1, "window must have odd size");
        Self { kernel }
    }

    pub fn gaussian(size: usize, sigma: f64) -> Self {
        Self::new(gaussian_kernel(size, sigma))
    }

    pub fn boxed(size: usize) -> Self {
        Self::new(vec![1.0 / size as f64; size])
    }

    fn pass(&self, src: &[f64], h: usize, w: usize, horizontal: bool, adjoint: bool) -> Vec<f64> {
        let r = (self.kernel.len() / 2) as isize;
        let n = if horizontal { w } else { h };
        let stride = if horizontal { 1 } else { w };
        let lines = if horizontal { h } else { w };
        let line_base = |l: usize| if horizontal { l * w } else { l };
        // normaliser per output position along the filtered axis
        let norm: Vec<f64> = (0..n as isize)
            .map(|i| {
                (-r..=r)
                    .filter(|d| (0..n as isize).contains(&(i + d)))
                    .map(|d| self.kernel[(d + r) as usize])
                    .sum()
            })
            .collect();
        let mut out = vec![0.0; h * w];
        for l in 0..lines {
            let base = line_base(l);
            for i in 0..n {
                let lo = (i as isize - r).max(0) as usize;
                let hi = ((i as isize + r) as usize).min(n - 1);
                if adjoint {
                    let scale = src[base + i * stride] / norm[i];
                    for j in lo..=hi {
                        let k = (j as isize - i as isize + r) as usize;
                        out[base + j * stride] += self.kernel[k] * scale;
                    }
                } else {
                    let mut acc = 0.0;
                    for j in lo..=hi {
                        let k = (j as isize - i as isize + r) as usize;
                        acc += self.kernel[k] * src[base + j * stride];
                    }
                    out[base + i * stride] = acc / norm[i];
                }
            }
        }
        out
    }

    /// Apply to a single-channel plane stored row-major.
    pub fn apply(&self, plane: &[f64], h: usize, w: usize) -> Vec<f64> {
        let t = self.pass(plane, h, w, true, false);
        self.pass(&t, h, w, false, false)
    }

    /// Transpose of [`WindowFilter::apply`].
    pub fn apply_adjoint(&self, plane: &[f64], h: usize, w: usize) -> Vec<f64> {
        let t = self.pass(plane, h, w, false, true);
        self.pass(&t, h, w, true, true)
    }
}

/// Split a raster into per-channel planes.
pub fn planes(r: &Raster) -> Vec<Vec<f64>> {
    (0..r.channels())
        .map(|c| r.data().iter().skip(c).step_by(r.channels()).copied().collect())
        .collect()
}

/// Interleave per-channel planes back into a raster.
pub fn from_planes(h: usize, w: usize, planes: &[Vec<f64>]) -> Raster {
    let c = planes.len();
    Raster::from_fn(h, w, c, |x, y, k| planes[k][y * w + x])
}
