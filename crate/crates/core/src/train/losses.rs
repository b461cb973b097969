use log::warn;

use super::config::{Ablation, LossWeights, Schedule};
use crate::feature::cosine_loss;
use crate::image::{Mask, Raster};
use crate::mesh::ssim_with_grad;
use crate::raster::RasterBundle;
use crate::scene::GaussianCloud;
use crate::stereo::StereoPrior;

/// Photometric loss `0.8 · L1 + 0.2 · (1 - SSIM)` and its gradient with
/// respect to `rendered`.
pub fn color_loss(rendered: &Raster, gt: &Raster) -> (f64, Raster) {
    let n = rendered.data().len() as f64;
    let (s, d_ssim) = ssim_with_grad(rendered, gt).expect("color loss needs images of equal shape");
    let mut l1 = 0.0;
    let mut grad = Raster::zeros(rendered.height(), rendered.width(), rendered.channels());
    for ((g, a), b) in grad.data_mut().iter_mut().zip(rendered.data()).zip(gt.data()) {
        let d = a - b;
        l1 += d.abs();
        if d != 0.0 {
            *g = 0.8 * d.signum() / n;
        }
    }
    for (g, ds) in grad.data_mut().iter_mut().zip(d_ssim.data()) {
        *g -= 0.2 * ds;
    }
    (0.8 * l1 / n + 0.2 * (1.0 - s), grad)
}

/// Stereo supervision terms and their gradients.
#[derive(Debug, Clone)]
pub struct StereoTerms {
    pub depth: f64,
    pub normal: f64,
    pub normal_from_depth: f64,
    pub smooth: f64,
    /// Weighted combination.
    pub total: f64,
    pub d_depth: Raster,
    pub d_normal: Raster,
    pub d_depth_normal: Raster,
}

/// Edge weights `exp(-(|∂x I| + |∂y I|))` from central differences of luma.
pub fn edge_weights(image: &Raster) -> Raster {
    let l = image.luma();
    let (h, w) = (l.height(), l.width());
    Raster::from_fn(h, w, 1, |x, y, _| {
        let at = |i: isize, j: isize| l.get(i.clamp(0, w as isize - 1) as usize, j.clamp(0, h as isize - 1) as usize, 0);
        let (xi, yi) = (x as isize, y as isize);
        let gx = 0.5 * (at(xi + 1, yi) - at(xi - 1, yi));
        let gy = 0.5 * (at(xi, yi + 1) - at(xi, yi - 1));
        (-(gx.abs() + gy.abs())).exp()
    })
}

/// Edge-aware Laplacian difference `mean w · ‖ΔA - ΔB‖₁` over pixels whose
/// full 4-neighbour stencil is valid in both maps. Returns the value and the
/// gradient with respect to `a`.
pub fn laplacian_smoothness(a: &Raster, a_valid: &Mask, b: &Raster, b_valid: &Mask, weight: &Raster) -> (f64, Raster) {
    let (h, w, c) = (a.height(), a.width(), a.channels());
    let mut grad = Raster::zeros(h, w, c);
    let mut terms = Vec::new();
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let stencil = [(x, y), (x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)];
            if stencil.iter().all(|&(i, j)| a_valid.get(i, j) && b_valid.get(i, j)) {
                terms.push((x, y));
            }
        }
    }
    if terms.is_empty() {
        return (0.0, grad);
    }
    let n = terms.len() as f64;
    let lap = |m: &Raster, x: usize, y: usize, k: usize| {
        m.get(x - 1, y, k) + m.get(x + 1, y, k) + m.get(x, y - 1, k) + m.get(x, y + 1, k) - 4.0 * m.get(x, y, k)
    };
    let mut total = 0.0;
    for &(x, y) in &terms {
        let wt = weight.get(x, y, 0);
        for k in 0..c {
            let d = lap(a, x, y, k) - lap(b, x, y, k);
            total += wt * d.abs();
            if d != 0.0 {
                let g = wt * d.signum() / n;
                grad.add(x, y, k, -4.0 * g);
                for (i, j) in [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)] {
                    grad.add(i, j, k, g);
                }
            }
        }
    }
    (total / n, grad)
}

fn masked_l1(a: &Raster, b: &Raster, mask: &Mask) -> (f64, Raster) {
    let (h, w) = (a.height(), a.width());
    let mut grad = Raster::zeros(h, w, 1);
    let n = mask.count();
    if n == 0 {
        return (0.0, grad);
    }
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                let d = a.get(x, y, 0) - b.get(x, y, 0);
                total += d.abs();
                if d != 0.0 {
                    grad.set(x, y, 0, d.signum() / n as f64);
                }
            }
        }
    }
    (total / n as f64, grad)
}

/// Depth, normal, depth-normal and smoothness supervision from a stereo prior.
///
/// The first three are restricted to the prior mask (intersected with the
/// rendered validity of each channel); smoothness is not.
pub fn stereo_losses(bundle: &RasterBundle, prior: &StereoPrior, gt: &Raster, w: &LossWeights) -> StereoTerms {
    let (h, wd) = (bundle.height(), bundle.width());
    let depth_mask = prior.mask.and(&bundle.depth_valid);
    let normal_mask = prior.mask.and(&bundle.geometry_valid);
    let nd_mask = prior.mask.and(&bundle.depth_normal_valid);
    if prior.mask.count() == 0 {
        warn!("stereo prior mask is empty");
    }
    let (l_depth, g_depth) = masked_l1(&bundle.depth, &prior.depth, &depth_mask);
    let (l_normal, g_normal) = cosine_loss(&bundle.normal, &prior.normal, Some(&normal_mask));
    let (l_nd, g_nd) = cosine_loss(&bundle.depth_normal, &prior.normal, Some(&nd_mask));
    let edges = edge_weights(gt);
    let (s_n, gs_n) = laplacian_smoothness(&bundle.normal, &bundle.geometry_valid, &prior.normal, &prior.normal_valid, &edges);
    let (s_nd, gs_nd) =
        laplacian_smoothness(&bundle.depth_normal, &bundle.depth_normal_valid, &prior.normal, &prior.normal_valid, &edges);
    let l_smooth = s_n + s_nd;
    let total = w.depth * l_depth + w.normal * l_normal + w.normal_from_depth * l_nd + w.smooth * l_smooth;
    let combine = |a: &Raster, wa: f64, b: &Raster, wb: f64| {
        let mut out = Raster::zeros(h, wd, a.channels());
        for ((o, x), y) in out.data_mut().iter_mut().zip(a.data()).zip(b.data()) {
            *o = wa * x + wb * y;
        }
        out
    };
    StereoTerms {
        depth: l_depth,
        normal: l_normal,
        normal_from_depth: l_nd,
        smooth: l_smooth,
        total,
        d_depth: g_depth.map(|v| v * w.depth),
        d_normal: combine(&g_normal, w.normal, &gs_n, w.smooth),
        d_depth_normal: combine(&g_nd, w.normal_from_depth, &gs_nd, w.smooth),
    }
}

/// Mean smallest scale and its gradient with respect to each primitive's
/// log-scales.
pub fn scale_loss(cloud: &GaussianCloud) -> (f64, Vec<[f64; 3]>) {
    let n = cloud.len() as f64;
    let mut total = 0.0;
    let grads = cloud
        .primitives
        .iter()
        .map(|g| {
            let k = g.min_scale_axis();
            let s = g.log_scales[k].exp();
            total += s;
            let mut d = [0.0; 3];
            d[k] = s / n;
            d
        })
        .collect();
    (total / n, grads)
}

/// Mean `1 - cos(N, N_d)` over pixels where both are valid, with gradients
/// with respect to the rendered normal and the depth normal.
pub fn dn_loss(bundle: &RasterBundle) -> (f64, Raster, Raster) {
    let mask = bundle.geometry_valid.and(&bundle.depth_normal_valid);
    let (l, g_n) = cosine_loss(&bundle.normal, &bundle.depth_normal, Some(&mask));
    let (_, g_nd) = cosine_loss(&bundle.depth_normal, &bundle.normal, Some(&mask));
    (l, g_n, g_nd)
}

/// Raw values of every term evaluated at one iteration; `None` where the
/// term was not computed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TermValues {
    pub color: f64,
    pub stereo: Option<(f64, f64, f64, f64)>,
    pub feature: f64,
    pub pseudo: Option<f64>,
    pub train_align: Option<f64>,
    pub scale: f64,
    pub depth_normal: Option<f64>,
}

/// Per-iteration record of every scheduled term. Inactive terms are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub iter: usize,
    pub l_c: Option<f64>,
    pub l_depth: Option<f64>,
    pub l_normal: Option<f64>,
    pub l_nd: Option<f64>,
    pub l_smooth: Option<f64>,
    pub l_stereo: Option<f64>,
    pub l_f: Option<f64>,
    pub l_pseudo: Option<f64>,
    pub l_train: Option<f64>,
    pub l_s: Option<f64>,
    pub l_dn: Option<f64>,
    pub total: f64,
}

pub const CSV_HEADER: &str = "iter,L_c,L_depth,L_normal,L_nd,L_smooth,L_stereo,L_f,L_pseudo,L_train,L_s,L_dn,total";

/// Which term groups are on at `iter`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveTerms {
    pub stereo: bool,
    pub pseudo: bool,
    pub train_align: bool,
    pub depth_normal: bool,
}

impl ActiveTerms {
    pub fn at(iter: usize, schedule: &Schedule, ablation: &Ablation) -> Self {
        Self {
            stereo: ablation.stereo && iter >= schedule.stereo_start,
            pseudo: ablation.pseudo && iter >= schedule.pseudo_start,
            train_align: ablation.train_align,
            depth_normal: iter >= schedule.dn_start,
        }
    }
}

impl LossReport {
    /// Gate the raw values by the schedule and sum with the weights.
    ///
    /// An active term that was not evaluated (for instance a stereo term before
    /// any prior exists) is recorded as zero.
    pub fn compose(iter: usize, v: &TermValues, w: &LossWeights, active: ActiveTerms) -> Self {
        let gate = |on: bool, x: Option<f64>| on.then(|| x.unwrap_or(0.0));
        let st = v.stereo.unwrap_or((0.0, 0.0, 0.0, 0.0));
        let stereo_on = active.stereo;
        let mut r = LossReport {
            iter,
            l_c: Some(v.color),
            l_depth: gate(stereo_on, Some(st.0)),
            l_normal: gate(stereo_on, Some(st.1)),
            l_nd: gate(stereo_on, Some(st.2)),
            l_smooth: gate(stereo_on, Some(st.3)),
            l_stereo: gate(stereo_on, Some(w.depth * st.0 + w.normal * st.1 + w.normal_from_depth * st.2 + w.smooth * st.3)),
            l_f: Some(v.feature),
            l_pseudo: gate(active.pseudo, v.pseudo),
            l_train: gate(active.train_align, v.train_align),
            l_s: Some(v.scale),
            l_dn: gate(active.depth_normal, v.depth_normal),
            total: 0.0,
        };
        r.total = r.recompose(w);
        r
    }

    /// Weighted sum of the recorded terms.
    pub fn recompose(&self, w: &LossWeights) -> f64 {
        let t = |x: Option<f64>, k: f64| x.map_or(0.0, |v| k * v);
        t(self.l_c, 1.0)
            + t(self.l_stereo, 1.0)
            + t(self.l_f, w.feature)
            + t(self.l_pseudo, w.pseudo)
            + t(self.l_train, w.train_align)
            + t(self.l_s, w.scale)
            + t(self.l_dn, w.depth_normal)
    }

    /// Names of the terms present in this report.
    pub fn active_names(&self) -> Vec<&'static str> {
        self.fields().iter().filter(|(_, v)| v.is_some()).map(|(n, _)| *n).collect()
    }

    fn fields(&self) -> [(&'static str, Option<f64>); 11] {
        [
            ("L_c", self.l_c),
            ("L_depth", self.l_depth),
            ("L_normal", self.l_normal),
            ("L_nd", self.l_nd),
            ("L_smooth", self.l_smooth),
            ("L_stereo", self.l_stereo),
            ("L_f", self.l_f),
            ("L_pseudo", self.l_pseudo),
            ("L_train", self.l_train),
            ("L_s", self.l_s),
            ("L_dn", self.l_dn),
        ]
    }

    /// One CSV row matching [`CSV_HEADER`]; inactive terms are empty cells.
    pub fn csv_row(&self) -> String {
        let mut row = self.iter.to_string();
        for (_, v) in self.fields() {
            row.push(',');
            if let Some(v) = v {
                row.push_str(&format!("{v:e}"));
            }
        }
        row.push_str(&format!(",{:e}", self.total));
        row
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{render, RenderOptions};
    use crate::scene::{Camera, GaussianPrimitive};
    use nalgebra::{Matrix3, Vector3, Vector4};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> Raster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Raster::from_fn(h, w, 3, |_, _, _| rng.gen())
    }

    /// Independent SSIM: explicit window sums with border renormalisation.
    fn reference_ssim(a: &Raster, b: &Raster) -> f64 {
        let (h, w) = (a.height(), a.width());
        let g: Vec<f64> = {
            let k: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp()).collect();
            let s: f64 = k.iter().sum();
            k.iter().map(|v| v / s).collect()
        };
        let mut total = 0.0;
        for c in 0..a.channels() {
            for y in 0..h {
                for x in 0..w {
                    let (mut sw, mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
                    for dy in 0..11 {
                        for dx in 0..11 {
                            let (xx, yy) = (x as isize + dx as isize - 5, y as isize + dy as isize - 5);
                            if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
                                continue;
                            }
                            let wt = g[dx] * g[dy];
                            let (p, q) = (a.get(xx as usize, yy as usize, c), b.get(xx as usize, yy as usize, c));
                            sw += wt;
                            ma += wt * p;
                            mb += wt * q;
                            aa += wt * p * p;
                            bb += wt * q * q;
                            ab += wt * p * q;
                        }
                    }
                    let (ma, mb, aa, bb, ab) = (ma / sw, mb / sw, aa / sw, bb / sw, ab / sw);
                    let (c1, c2) = (1e-4, 9e-4);
                    total += (2.0 * ma * mb + c1) * (2.0 * (ab - ma * mb) + c2)
                        / ((ma * ma + mb * mb + c1) * (aa - ma * ma + bb - mb * mb + c2));
                }
            }
        }
        total / (h * w * a.channels()) as f64
    }

    #[test]
    fn color_loss_examples() {
        let gt = random_image(12, 12, 1).map(|v| 0.1 + 0.7 * v);
        assert!(color_loss(&gt, &gt).0.abs() < 1e-12);
        let shifted = gt.map(|v| v + 0.1);
        let (l, _) = color_loss(&shifted, &gt);
        let l1_part = 0.8 * 0.1;
        let s = reference_ssim(&shifted, &gt);
        assert!((l - l1_part - 0.2 * (1.0 - s)).abs() < 1e-9);
    }

    #[test]
    fn ssim_matches_reference() {
        let a = random_image(13, 17, 2);
        let b = random_image(13, 17, 3);
        let ours = crate::mesh::ssim(&a, &b).unwrap();
        assert!((ours - reference_ssim(&a, &b)).abs() < 1e-6);
        let c = Raster::filled(9, 9, 3, 0.4);
        let d = c.map(|v| v + 1e-3);
        assert!((crate::mesh::ssim(&c, &d).unwrap() - reference_ssim(&c, &d)).abs() < 1e-6);
    }

    #[test]
    fn color_loss_gradient() {
        let a = random_image(10, 11, 4).map(|v| 0.2 + 0.6 * v);
        let b = random_image(10, 11, 5);
        let (_, g) = color_loss(&a, &b);
        let h = 1e-7;
        for &(x, y, c) in &[(0, 0, 0), (5, 5, 1), (10, 9, 2)] {
            let mut p = a.clone();
            p.add(x, y, c, h);
            let mut m = a.clone();
            m.add(x, y, c, -h);
            let fd = (color_loss(&p, &b).0 - color_loss(&m, &b).0) / (2.0 * h);
            assert!((fd - g.get(x, y, c)).abs() < 1e-6, "{fd} vs {}", g.get(x, y, c));
        }
    }

    proptest! {
        #[test]
        fn color_loss_in_unit_range(s1 in 0u64..1000, s2 in 0u64..1000) {
            let (l, _) = color_loss(&random_image(8, 8, s1), &random_image(8, 8, s2));
            prop_assert!((0.0..=1.0).contains(&l));
        }
    }

    fn plane_bundle() -> (RasterBundle, Camera) {
        let cam = Camera::new(30.0, 30.0, 15.5, 15.5, 32, 32, Matrix3::identity(), Vector3::zeros()).unwrap();
        let mut prims = Vec::new();
        for i in 0..12 {
            for j in 0..12 {
                let p = Vector3::new(-0.55 + 0.1 * i as f64, -0.55 + 0.1 * j as f64, 2.0);
                let mut g = GaussianPrimitive::new(p, Vector4::new(1.0, 0.0, 0.0, 0.0), Vector3::new(0.08, 0.08, 1e-4), 0.95, Vector3::repeat(0.5)).unwrap();
                g.feature[0] = 1.0;
                prims.push(g);
            }
        }
        let cloud = GaussianCloud::new(prims, 1.0).unwrap();
        (render(&cloud, &cam, &RenderOptions::default()), cam)
    }

    fn prior_from(bundle: &RasterBundle) -> StereoPrior {
        StereoPrior {
            depth: bundle.depth.clone(),
            normal: bundle.depth_normal.clone(),
            normal_valid: bundle.depth_normal_valid.clone(),
            mask: bundle.depth_valid.and(&bundle.depth_normal_valid),
            disparity: crate::stereo::Disparity {
                values: Raster::zeros(bundle.height(), bundle.width(), 1),
                valid: Mask::new(bundle.height(), bundle.width(), false),
            },
            created_at_iter: 0,
        }
    }

    #[test]
    fn stereo_terms_vanish_on_agreement() {
        let (b, _) = plane_bundle();
        let mut prior = prior_from(&b);
        prior.normal = b.normal.clone();
        let mut bb = b.clone();
        bb.depth_normal = b.normal.clone();
        let t = stereo_losses(&bb, &prior, &Raster::filled(32, 32, 3, 0.5), &LossWeights::default());
        assert!(t.depth.abs() < 1e-12 && t.normal.abs() < 1e-12 && t.normal_from_depth.abs() < 1e-12 && t.smooth.abs() < 1e-12);
    }

    #[test]
    fn stereo_depth_offset_is_one() {
        let (b, _) = plane_bundle();
        let mut prior = prior_from(&b);
        prior.depth = b.depth.map(|v| v - 1.0);
        let w = LossWeights::default();
        let t = stereo_losses(&b, &prior, &Raster::filled(32, 32, 3, 0.5), &w);
        assert!((t.depth - 1.0).abs() < 1e-12);
        let expect = 0.05 * (t.depth + t.normal + t.normal_from_depth) + 0.05 * t.smooth;
        assert!((t.total - expect).abs() < 1e-12);
    }

    #[test]
    fn empty_prior_mask_gives_zero() {
        let (b, _) = plane_bundle();
        let mut prior = prior_from(&b);
        prior.mask = Mask::new(32, 32, false);
        prior.normal_valid = Mask::new(32, 32, false);
        let t = stereo_losses(&b, &prior, &Raster::filled(32, 32, 3, 0.5), &LossWeights::default());
        assert_eq!(t.total, 0.0);
    }

    #[test]
    fn smoothness_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = Raster::from_fn(9, 10, 3, |_, _, _| rng.gen_range(-1.0..1.0));
        let b = Raster::from_fn(9, 10, 3, |_, _, _| rng.gen_range(-1.0..1.0));
        let valid = Mask::from_fn(9, 10, |x, y| (x + 2 * y) % 7 != 0);
        let wts = Raster::from_fn(9, 10, 1, |x, y, _| 0.3 + 0.05 * (x + y) as f64);
        let (_, g) = laplacian_smoothness(&a, &valid, &b, &Mask::new(9, 10, true), &wts);
        let h = 1e-6;
        for &(x, y, c) in &[(3, 3, 0), (4, 5, 2), (1, 1, 1), (8, 7, 0)] {
            let mut p = a.clone();
            p.add(x, y, c, h);
            let mut m = a.clone();
            m.add(x, y, c, -h);
            let f = |r: &Raster| laplacian_smoothness(r, &valid, &b, &Mask::new(9, 10, true), &wts).0;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            assert!((fd - g.get(x, y, c)).abs() < 1e-6);
        }
    }

    #[test]
    fn scale_loss_examples() {
        let g = GaussianPrimitive::new(Vector3::zeros(), Vector4::new(1.0, 0.0, 0.0, 0.0), Vector3::new(1.0, 1.0, 0.02), 0.5, Vector3::zeros()).unwrap();
        let cloud = GaussianCloud::new(vec![g], 1.0).unwrap();
        let (l, d) = scale_loss(&cloud);
        assert!((l - 0.02).abs() < 1e-12);
        assert_eq!(d[0][0], 0.0);
        assert!((d[0][2] - 0.02).abs() < 1e-12);
    }

    #[test]
    fn dn_loss_examples() {
        let (b, _) = plane_bundle();
        let (l, _, _) = dn_loss(&b);
        assert!(l <= 1e-3, "planar dn loss {l}");
        let mut bb = b.clone();
        bb.depth_normal = Raster::from_fn(32, 32, 3, |_, _, c| (c == 0) as u8 as f64);
        bb.normal = Raster::from_fn(32, 32, 3, |_, _, c| (c == 2) as u8 as f64);
        assert!((dn_loss(&bb).0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_schedule_and_recomposition() {
        let w = LossWeights::default();
        let s = Schedule::default();
        let a = Ablation::default();
        let v = TermValues {
            color: 0.3,
            stereo: Some((0.1, 0.2, 0.3, 0.4)),
            feature: 0.5,
            pseudo: Some(0.6),
            train_align: Some(0.7),
            scale: 0.01,
            depth_normal: Some(0.9),
        };
        let r = LossReport::compose(100, &v, &w, ActiveTerms::at(100, &s, &a));
        assert_eq!(r.active_names(), ["L_c", "L_f", "L_train", "L_s"]);
        assert!((r.total - (0.3 + 1.5 * 0.5 + 1.5 * 0.7 + 100.0 * 0.01)).abs() < 1e-9);
        let r = LossReport::compose(600, &v, &w, ActiveTerms::at(600, &s, &a));
        assert_eq!(r.active_names(), ["L_c", "L_depth", "L_normal", "L_nd", "L_smooth", "L_stereo", "L_f", "L_train", "L_s"]);
        let r = LossReport::compose(3500, &v, &w, ActiveTerms::at(3500, &s, &a));
        assert_eq!(r.active_names().len(), 11);
        assert!((r.total - r.recompose(&w)).abs() < 1e-12);
        let row = r.csv_row();
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
    }
}
