use crate::error::{Error, Result};
use crate::image::{planes, Raster, WindowFilter};
use crate::io::ExternalCommand;
use crate::scene::FEATURE_DIM;

/// Source of the per-view reference feature maps.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum FeatureBackend {
    #[default]
    BuiltIn,
    /// `<cmd> <image.fras> <out_features.fras>` producing 8 channels.
    External(ExternalCommand),
}

impl FeatureBackend {
    /// Unit-norm `H×W×8` features of an `H×W×3` image.
    pub fn extract(&self, image: &Raster) -> Result<Raster> {
        if image.channels() != 3 {
            return Err(Error::DimensionMismatch {
                expected: "3-channel image".into(),
                actual: image.shape_string(),
            });
        }
        match self {
            FeatureBackend::BuiltIn => Ok(extract_features(image)),
            FeatureBackend::External(cmd) => {
                let raw = cmd.run(&[image], image.height(), image.width(), FEATURE_DIM)?;
                Ok(normalize_pixels(raw))
            }
        }
    }
}

/// Fixed filter bank: smoothed luma and two chroma channels, four oriented
/// luma gradients and local luma variance. Each channel is standardised over
/// the image, then every pixel vector is scaled to unit length.
///
/// Channels with (near) zero spread are left unstandardised, and an all-zero
/// pixel vector becomes the first basis vector.
pub fn extract_features(image: &Raster) -> Raster {
    let (h, w) = (image.height(), image.width());
    let p = planes(image);
    let n = h * w;
    let luma: Vec<f64> = (0..n).map(|i| 0.299 * p[0][i] + 0.587 * p[1][i] + 0.114 * p[2][i]).collect();
    let chroma_a: Vec<f64> = (0..n).map(|i| p[0][i] - p[1][i]).collect();
    let chroma_b: Vec<f64> = (0..n).map(|i| 0.5 * (p[0][i] + p[1][i]) - p[2][i]).collect();

    let smooth = WindowFilter::boxed(3);
    let l_s = smooth.apply(&luma, h, w);
    let at = |x: isize, y: isize| {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        luma[yc * w + xc]
    };
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut gd1 = vec![0.0; n];
    let mut gd2 = vec![0.0; n];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            gx[i] = 0.5 * (at(x + 1, y) - at(x - 1, y));
            gy[i] = 0.5 * (at(x, y + 1) - at(x, y - 1));
            gd1[i] = 0.5 * (at(x + 1, y + 1) - at(x - 1, y - 1));
            gd2[i] = 0.5 * (at(x + 1, y - 1) - at(x - 1, y + 1));
        }
    }
    let wide = WindowFilter::boxed(5);
    let mean = wide.apply(&luma, h, w);
    let sq: Vec<f64> = luma.iter().map(|v| v * v).collect();
    let mean_sq = wide.apply(&sq, h, w);
    let var: Vec<f64> = mean_sq
        .iter()
        .zip(&mean)
        .map(|(s, m)| {
            let v = s - m * m;
            // cancellation noise on flat regions
            if v < 1e-12 {
                0.0
            } else {
                v
            }
        })
        .collect();

    let mut channels = [
        l_s,
        smooth.apply(&chroma_a, h, w),
        smooth.apply(&chroma_b, h, w),
        gx,
        gy,
        gd1,
        gd2,
        var,
    ];
    for c in channels.iter_mut() {
        standardize(c);
    }
    let raw = Raster::from_fn(h, w, FEATURE_DIM, |x, y, c| channels[c][y * w + x]);
    normalize_pixels(raw)
}

fn standardize(c: &mut [f64]) {
    let n = c.len() as f64;
    let mean = c.iter().sum::<f64>() / n;
    let var = c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std > 1e-9 {
        c.iter_mut().for_each(|v| *v = (*v - mean) / std);
    }
}

/// Scale every pixel vector to unit length; zero vectors become `e0`.
pub fn normalize_pixels(mut r: Raster) -> Raster {
    let (h, w) = (r.height(), r.width());
    for y in 0..h {
        for x in 0..w {
            let p = r.pixel_mut(x, y);
            let len = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            if len > 0.0 {
                p.iter_mut().for_each(|v| *v /= len);
            } else {
                p.iter_mut().for_each(|v| *v = 0.0);
                p[0] = 1.0;
            }
        }
    }
    r
}
