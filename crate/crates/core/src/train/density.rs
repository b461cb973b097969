use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::DensityConfig;
use super::optim::Adam;
use crate::raster::RenderGradients;
use crate::scene::GaussianCloud;

/// Screen-space gradient statistics accumulated between control steps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradStats {
    pub sum: Vec<f64>,
    pub count: Vec<u32>,
}

impl GradStats {
    pub fn new(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    /// Add one view's gradients; only primitives visible in that view count.
    pub fn add(&mut self, g: &RenderGradients) {
        for i in 0..self.sum.len() {
            if g.visible_views[i] > 0 {
                self.sum[i] += g.screen_grad[i];
                self.count[i] += 1;
            }
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.sum[i] / self.count[i] as f64
        }
    }
}

/// What one control step did.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DensityReport {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
    /// Densification was skipped because it would exceed the cap.
    pub capped: bool,
}

/// Clone, split and prune.
///
/// Primitives whose mean screen-space gradient exceeds the threshold are
/// cloned, or split into two children when their largest scale exceeds
/// `split_scale_frac · scene_radius`. Children have scales divided by
/// `split_factor` and centers drawn from the parent Gaussian restricted to
/// Mahalanobis distance 2. Afterwards every primitive with opacity below
/// `prune_opacity` is removed (at least one primitive always survives). The
/// optimizer moments follow their primitives; new primitives start at zero.
pub fn density_control<R: Rng>(
    cloud: &mut GaussianCloud,
    stats: &GradStats,
    adam: &mut Adam,
    cfg: &DensityConfig,
    rng: &mut R,
) -> DensityReport {
    let n = cloud.len();
    let split_limit = cfg.split_scale_frac * cloud.scene_radius();
    let mut clone_ids = Vec::new();
    let mut split_ids = Vec::new();
    for i in 0..n {
        if stats.mean(i) > cfg.grad_threshold {
            if cloud.primitives[i].scales().max() > split_limit {
                split_ids.push(i);
            } else {
                clone_ids.push(i);
            }
        }
    }
    let mut report = DensityReport::default();
    if n + clone_ids.len() + split_ids.len() > cfg.max_primitives {
        report.capped = !(clone_ids.is_empty() && split_ids.is_empty());
        clone_ids.clear();
        split_ids.clear();
    }

    let mut is_split = vec![false; n];
    for &i in &split_ids {
        is_split[i] = true;
    }
    let mut prims = Vec::with_capacity(n + clone_ids.len() + split_ids.len());
    let mut sources = Vec::with_capacity(prims.capacity());
    for (i, g) in cloud.primitives.iter().enumerate() {
        if !is_split[i] {
            prims.push(g.clone());
            sources.push(Some(i));
        }
    }
    for &i in &clone_ids {
        prims.push(cloud.primitives[i].clone());
        sources.push(None);
    }
    for &i in &split_ids {
        let parent = &cloud.primitives[i];
        let r = parent.rotation_matrix();
        let s = parent.scales();
        for _ in 0..2 {
            let z = loop {
                let z = Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
                if z.norm() <= 2.0 {
                    break z;
                }
            };
            let mut child = parent.clone();
            child.position = parent.position + r * s.component_mul(&z);
            child.log_scales = parent.log_scales.map(|l| l - cfg.split_factor.ln());
            prims.push(child);
            sources.push(None);
        }
    }
    report.cloned = clone_ids.len();
    report.split = split_ids.len();

    let keep: Vec<bool> = prims.iter().map(|g| g.opacity() >= cfg.prune_opacity).collect();
    let any_kept = keep.iter().any(|&k| k);
    let (mut out, mut out_src) = (Vec::new(), Vec::new());
    for (k, (g, s)) in prims.into_iter().zip(sources).enumerate() {
        // never empty the cloud
        if keep[k] || (!any_kept && k == 0) {
            out.push(g);
            out_src.push(s);
        } else {
            report.pruned += 1;
        }
    }
    cloud.primitives = out;
    adam.remap(&out_src);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::GaussianPrimitive;
    use crate::train::config::OptimConfig;
    use nalgebra::{Matrix3, Vector4};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn prim(opacity: f64, scale: f64) -> GaussianPrimitive {
        GaussianPrimitive::new(Vector3::zeros(), Vector4::new(0.8, 0.3, -0.2, 0.4), Vector3::new(scale, 0.5 * scale, 0.1 * scale), opacity, Vector3::repeat(0.5)).unwrap()
    }

    fn stats(values: &[f64]) -> GradStats {
        GradStats {
            sum: values.to_vec(),
            count: vec![1; values.len()],
        }
    }

    #[test]
    fn nothing_above_threshold_keeps_size() {
        let mut c = GaussianCloud::new(vec![prim(0.5, 0.001); 4], 1.0).unwrap();
        let mut adam = Adam::new(OptimConfig::default(), 4);
        let r = density_control(&mut c, &stats(&[1e-5; 4]), &mut adam, &DensityConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(c.len(), 4);
        assert_eq!(r, DensityReport::default());
    }

    #[test]
    fn low_opacity_is_pruned() {
        let mut c = GaussianCloud::new(vec![prim(0.5, 0.001), prim(0.001, 0.001), prim(0.5, 0.001)], 1.0).unwrap();
        let mut adam = Adam::new(OptimConfig::default(), 3);
        adam.first[2][0] = 7.0;
        let r = density_control(&mut c, &stats(&[0.0; 3]), &mut adam, &DensityConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!((c.len(), r.pruned), (2, 1));
        assert_eq!(adam.first[1][0], 7.0);
        assert_eq!(adam.first.len(), 2);
    }

    #[test]
    fn clone_and_split() {
        let mut c = GaussianCloud::new(vec![prim(0.5, 0.001), prim(0.5, 0.2)], 1.0).unwrap();
        let mut adam = Adam::new(OptimConfig::default(), 2);
        let r = density_control(&mut c, &stats(&[1e-3, 1e-3]), &mut adam, &DensityConfig::default(), &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!((r.cloned, r.split), (1, 1));
        // original small one, its clone, two children
        assert_eq!(c.len(), 4);
        assert_eq!(adam.first.len(), 4);
        assert_eq!(c.primitives[0], c.primitives[1]);
    }

    #[test]
    fn cap_skips_densification() {
        let mut c = GaussianCloud::new(vec![prim(0.5, 0.001); 3], 1.0).unwrap();
        let mut adam = Adam::new(OptimConfig::default(), 3);
        let cfg = DensityConfig {
            max_primitives: 4,
            ..Default::default()
        };
        let r = density_control(&mut c, &stats(&[1.0; 3]), &mut adam, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(r.capped);
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn children_stay_inside_dilated_parent_footprint() {
        let parent = prim(0.5, 0.3);
        let cov_inv = {
            let r = parent.rotation_matrix();
            let s2 = parent.scales().map(|s| s * s);
            (r * Matrix3::from_diagonal(&s2) * r.transpose()).try_inverse().unwrap()
        };
        let maha = |p: &Vector3<f64>| (p - parent.position).dot(&(cov_inv * (p - parent.position))).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let mut c = GaussianCloud::new(vec![parent.clone()], 1.0).unwrap();
            let mut adam = Adam::new(OptimConfig::default(), 1);
            density_control(&mut c, &stats(&[1.0]), &mut adam, &DensityConfig::default(), &mut rng);
            assert_eq!(c.len(), 2);
            for child in &c.primitives {
                assert!((child.scales() * 1.6 - parent.scales()).norm() < 1e-12);
                // the child's 3-sigma ellipsoid sits inside the parent's 4-sigma one
                let r = child.rotation_matrix();
                let s = child.scales();
                for axis in 0..3 {
                    for sign in [-1.0, 1.0] {
                        let tip = child.position + r.column(axis) * (3.0 * sign * s[axis]);
                        assert!(maha(&tip) <= 4.0, "{}", maha(&tip));
                    }
                }
                assert!(maha(&child.position) <= 2.0 + 1e-9);
            }
        }
    }
}
