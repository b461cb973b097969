use log::warn;

use super::warp::WarpField;
use crate::image::{Mask, Raster};
use crate::scene::Camera;

/// Cosine similarity of two vectors and its gradient with respect to `a`.
/// A zero-norm `a` or `b` counts as cosine 0 with zero gradient.
pub fn cosine_with_grad(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return (0.0, vec![0.0; a.len()]);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let cos = dot / (na * nb);
    let grad = a.iter().zip(b).map(|(x, y)| y / (na * nb) - cos * x / (na * na)).collect();
    (cos, grad)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    cosine_with_grad(a, b).0
}

/// Mean of `1 - cos(a, b)` over the pixels of `mask` (all pixels if `None`),
/// with the gradient with respect to `a`. Returns zero when no pixel counts.
pub fn cosine_loss(a: &Raster, b: &Raster, mask: Option<&Mask>) -> (f64, Raster) {
    let (h, w) = (a.height(), a.width());
    let mut grad = Raster::zeros(h, w, a.channels());
    let n = mask.map_or(h * w, |m| m.count());
    if n == 0 {
        return (0.0, grad);
    }
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            if mask.is_some_and(|m| !m.get(x, y)) {
                continue;
            }
            let (c, g) = cosine_with_grad(a.pixel(x, y), b.pixel(x, y));
            total += 1.0 - c;
            for (o, gv) in grad.pixel_mut(x, y).iter_mut().zip(g) {
                *o = -gv / n as f64;
            }
        }
    }
    (total / n as f64, grad)
}

/// Feature distillation loss `mean(1 - cos(F, F*))` and its gradient with
/// respect to the rendered map.
pub fn distill_loss(rendered: &Raster, reference: &Raster) -> (f64, Raster) {
    cosine_loss(rendered, reference, None)
}

/// Patch-pooled cosine loss.
///
/// Each `patch×patch` tile (the last row/column may be partial) averages
/// both maps over the pixels valid in `warped_valid`. A tile counts if at
/// least half of its pixels are set in `confidence`; the loss is the mean of
/// `1 - cos` of the pooled descriptors over counted tiles. Returns the loss
/// and its gradient with respect to `warped`.
pub fn pseudo_loss(
    warped: &Raster,
    warped_valid: &Mask,
    reference: &Raster,
    confidence: &Mask,
    patch: usize,
) -> (f64, Raster) {
    let (h, w, c) = (warped.height(), warped.width(), warped.channels());
    let patch = patch.max(1);
    let mut grad = Raster::zeros(h, w, c);
    let mut terms = Vec::new();
    for py in (0..h).step_by(patch) {
        for px in (0..w).step_by(patch) {
            let (y1, x1) = ((py + patch).min(h), (px + patch).min(w));
            let area = (y1 - py) * (x1 - px);
            let mut confident = 0;
            let mut pooled_a = vec![0.0; c];
            let mut pooled_b = vec![0.0; c];
            let mut n = 0;
            for y in py..y1 {
                for x in px..x1 {
                    if confidence.get(x, y) {
                        confident += 1;
                    }
                    if warped_valid.get(x, y) {
                        n += 1;
                        for k in 0..c {
                            pooled_a[k] += warped.get(x, y, k);
                            pooled_b[k] += reference.get(x, y, k);
                        }
                    }
                }
            }
            if 2 * confident < area || n == 0 {
                continue;
            }
            pooled_a.iter_mut().for_each(|v| *v /= n as f64);
            pooled_b.iter_mut().for_each(|v| *v /= n as f64);
            terms.push((px, py, x1, y1, n, cosine_with_grad(&pooled_a, &pooled_b)));
        }
    }
    if terms.is_empty() {
        return (0.0, grad);
    }
    let count = terms.len() as f64;
    let mut total = 0.0;
    for (px, py, x1, y1, n, (cos, g)) in terms {
        total += 1.0 - cos;
        for y in py..y1 {
            for x in px..x1 {
                if warped_valid.get(x, y) {
                    for (o, gv) in grad.pixel_mut(x, y).iter_mut().zip(&g) {
                        *o = -gv / (n as f64 * count);
                    }
                }
            }
        }
    }
    (total / count, grad)
}

/// Output of the pseudo-view consistency term for one pseudo/reference pair.
#[derive(Debug, Clone)]
pub struct PseudoTerms {
    pub loss: f64,
    /// Round-trip confidence mask in the reference view.
    pub confidence: Mask,
    /// Gradient with respect to the rendered pseudo-view features.
    pub d_feature_pseudo: Raster,
    /// Gradient with respect to the rendered reference-view depth.
    pub d_depth_ref: Raster,
}

/// Rounding slack on the cosine threshold, so exact round trips pass at `tau = 0`.
const COS_SLACK: f64 = 1e-12;

/// Round-trip confidence mask: reference features warped into the pseudo
/// view with `depth_p` and back with `depth_t` must stay within
/// `1 - cos ≤ tau` of the originals, with every intermediate sample valid.
#[allow(clippy::too_many_arguments)]
pub fn roundtrip_mask(
    feat_p: &Raster,
    feat_ref: &Raster,
    depth_t: &Raster,
    valid_t: &Mask,
    depth_p: &Raster,
    valid_p: &Mask,
    cam_t: &Camera,
    cam_p: &Camera,
    tau: f64,
) -> Mask {
    let to_t = WarpField::new(depth_t, valid_t, cam_t, cam_p);
    let (_, valid_p2t) = to_t.sample(feat_p);
    roundtrip_mask_with(&to_t, &valid_p2t, feat_ref, depth_p, valid_p, cam_t, cam_p, tau)
}

#[allow(clippy::too_many_arguments)]
fn roundtrip_mask_with(
    to_t: &WarpField,
    valid_p2t: &Mask,
    feat_ref: &Raster,
    depth_p: &Raster,
    valid_p: &Mask,
    cam_t: &Camera,
    cam_p: &Camera,
    tau: f64,
) -> Mask {
    let to_p = WarpField::new(depth_p, valid_p, cam_p, cam_t);
    let (t2p, valid_t2p) = to_p.sample(feat_ref);
    let (back, valid_back) = to_t.sample_masked(&t2p, &valid_t2p);
    let (h, w) = (feat_ref.height(), feat_ref.width());
    Mask::from_fn(h, w, |x, y| {
        valid_p2t.get(x, y) && valid_back.get(x, y) && 1.0 - cosine(back.pixel(x, y), feat_ref.pixel(x, y)) <= tau + COS_SLACK
    })
}

/// Pseudo-view loss with gradients through the rendered pseudo features and
/// the rendered reference depth. The confidence mask is held constant.
#[allow(clippy::too_many_arguments)]
pub fn pseudo_consistency(
    feat_p: &Raster,
    depth_p: &Raster,
    valid_p: &Mask,
    feat_ref: &Raster,
    depth_t: &Raster,
    valid_t: &Mask,
    cam_t: &Camera,
    cam_p: &Camera,
    tau: f64,
    patch: usize,
) -> PseudoTerms {
    let to_t = WarpField::new(depth_t, valid_t, cam_t, cam_p);
    let (p2t, valid_p2t) = to_t.sample(feat_p);
    let confidence = roundtrip_mask_with(&to_t, &valid_p2t, feat_ref, depth_p, valid_p, cam_t, cam_p, tau);
    let (loss, d_p2t) = pseudo_loss(&p2t, &valid_p2t, feat_ref, &confidence, patch);
    let (d_feature_pseudo, d_depth_ref) = to_t.backward(feat_p, &d_p2t);
    PseudoTerms {
        loss,
        confidence,
        d_feature_pseudo,
        d_depth_ref,
    }
}

/// Train-view alignment: source reference features warped into view `t` with
/// the rendered depth, compared pixel-wise with the reference features of
/// `t`. Returns the loss and its gradient with respect to `depth_t`.
pub fn train_align_loss(
    feat_s: &Raster,
    depth_t: &Raster,
    valid_t: &Mask,
    cam_t: &Camera,
    cam_s: &Camera,
    feat_t: &Raster,
) -> (f64, Raster) {
    let field = WarpField::new(depth_t, valid_t, cam_t, cam_s);
    let (s2t, ok) = field.sample(feat_s);
    if ok.count() == 0 {
        warn!("train alignment: no valid warped pixels");
        return (0.0, Raster::zeros(depth_t.height(), depth_t.width(), 1));
    }
    let (loss, d_s2t) = cosine_loss(&s2t, feat_t, Some(&ok));
    let (_, d_depth) = field.backward(feat_s, &d_s2t);
    (loss, d_depth)
}
