use super::config::OptimConfig;
use crate::raster::PrimitiveGrad;
use crate::scene::{GaussianCloud, GaussianPrimitive, FEATURE_DIM};

/// Number of scalar parameters per primitive.
pub const PARAMS: usize = 14 + FEATURE_DIM;

const POSITION: std::ops::Range<usize> = 0..3;
const ROTATION: std::ops::Range<usize> = 3..7;
const SCALE: std::ops::Range<usize> = 7..10;
const OPACITY: usize = 10;
const COLOR: std::ops::Range<usize> = 11..14;

pub fn flatten(g: &GaussianPrimitive) -> [f64; PARAMS] {
    let mut p = [0.0; PARAMS];
    p[POSITION].copy_from_slice(g.position.as_slice());
    p[ROTATION].copy_from_slice(g.rotation.as_slice());
    p[SCALE].copy_from_slice(g.log_scales.as_slice());
    p[OPACITY] = g.opacity_logit;
    p[COLOR].copy_from_slice(g.color.as_slice());
    p[14..].copy_from_slice(&g.feature);
    p
}

pub fn unflatten(p: &[f64; PARAMS], g: &mut GaussianPrimitive) {
    g.position.copy_from_slice(&p[POSITION]);
    g.rotation.copy_from_slice(&p[ROTATION]);
    g.log_scales.copy_from_slice(&p[SCALE]);
    g.opacity_logit = p[OPACITY];
    g.color.copy_from_slice(&p[COLOR]);
    g.feature.copy_from_slice(&p[14..]);
}

pub fn flatten_grad(d: &PrimitiveGrad) -> [f64; PARAMS] {
    let mut p = [0.0; PARAMS];
    p[POSITION].copy_from_slice(d.position.as_slice());
    p[ROTATION].copy_from_slice(d.rotation.as_slice());
    p[SCALE].copy_from_slice(d.log_scales.as_slice());
    p[OPACITY] = d.opacity_logit;
    p[COLOR].copy_from_slice(d.color.as_slice());
    p[14..].copy_from_slice(&d.feature);
    p
}

/// Adaptive-moment optimizer over every primitive parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: OptimConfig,
    pub first: Vec<[f64; PARAMS]>,
    pub second: Vec<[f64; PARAMS]>,
    /// Steps taken (shared by all parameters for bias correction).
    pub step: u64,
    /// Steps skipped because of non-finite gradients.
    pub skipped: u64,
}

impl Adam {
    pub fn new(config: OptimConfig, n: usize) -> Self {
        Self {
            config,
            first: vec![[0.0; PARAMS]; n],
            second: vec![[0.0; PARAMS]; n],
            step: 0,
            skipped: 0,
        }
    }

    /// Position rate at `iter`, decaying log-linearly from the initial to the
    /// final rate (both scaled by `scene_radius`) over `total_iters`.
    pub fn position_lr(&self, iter: usize, total_iters: usize, scene_radius: f64) -> f64 {
        let t = (iter as f64 / total_iters.max(1) as f64).clamp(0.0, 1.0);
        let (a, b) = (self.config.position_lr_init.ln(), self.config.position_lr_final.ln());
        (a + (b - a) * t).exp() * scene_radius
    }

    fn rates(&self, iter: usize, total_iters: usize, scene_radius: f64) -> [f64; PARAMS] {
        let c = &self.config;
        let mut lr = [c.feature_lr; PARAMS];
        lr[POSITION].fill(self.position_lr(iter, total_iters, scene_radius));
        lr[ROTATION].fill(c.rotation_lr);
        lr[SCALE].fill(c.scale_lr);
        lr[OPACITY] = c.opacity_lr;
        lr[COLOR].fill(c.color_lr);
        lr
    }

    /// One update. Returns `false`, leaving everything untouched except the
    /// skip counter, if any gradient is non-finite.
    pub fn step(&mut self, cloud: &mut GaussianCloud, grads: &[PrimitiveGrad], iter: usize, total_iters: usize) -> bool {
        assert_eq!(grads.len(), cloud.len());
        assert_eq!(self.first.len(), cloud.len());
        if grads.iter().any(|g| !g.is_finite()) {
            self.skipped += 1;
            return false;
        }
        self.step += 1;
        let lr = self.rates(iter, total_iters, cloud.scene_radius());
        let (b1, b2, eps) = (self.config.beta1, self.config.beta2, self.config.eps);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for (((prim, d), m), v) in cloud.primitives.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            let g = flatten_grad(d);
            let mut p = flatten(prim);
            let before = prim.rotation;
            for k in 0..PARAMS {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= lr[k] * m_hat / (v_hat.sqrt() + eps);
            }
            unflatten(&p, prim);
            let n = prim.rotation.norm();
            if prim.rotation != before && n > 0.0 && n.is_finite() {
                prim.rotation /= n;
            }
        }
        true
    }

    /// Rebuild the moment buffers after the primitive list changed: entry `k`
    /// copies the moments of old primitive `sources[k]`, or starts at zero.
    pub fn remap(&mut self, sources: &[Option<usize>]) {
        let pick = |buf: &[[f64; PARAMS]]| sources.iter().map(|s| s.map_or([0.0; PARAMS], |i| buf[i])).collect();
        self.first = pick(&self.first);
        self.second = pick(&self.second);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::GaussianPrimitive;
    use nalgebra::{Vector3, Vector4};

    fn cloud() -> GaussianCloud {
        let g = GaussianPrimitive::new(Vector3::new(0.1, 0.2, 0.3), Vector4::new(0.9, 0.1, 0.2, 0.3), Vector3::new(0.1, 0.2, 0.05), 0.4, Vector3::new(0.2, 0.5, 0.7)).unwrap();
        GaussianCloud::new(vec![g.clone(), g], 2.0).unwrap()
    }

    #[test]
    fn zero_gradients_leave_cloud_unchanged() {
        let mut c = cloud();
        let before = c.clone();
        let mut adam = Adam::new(OptimConfig::default(), 2);
        assert!(adam.step(&mut c, &[PrimitiveGrad::default(), PrimitiveGrad::default()], 0, 7000));
        assert_eq!(c, before);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn scalar_trajectory_matches_closed_form() {
        let mut c = cloud();
        let mut adam = Adam::new(OptimConfig::default(), 2);
        let mut d = PrimitiveGrad::default();
        d.opacity_logit = 0.37;
        let grads = [d, PrimitiveGrad::default()];
        let x0 = c.primitives[0].opacity_logit;
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-15, 5e-2);
        let (mut m, mut v, mut x) = (0.0, 0.0, x0);
        for t in 1..=25 {
            adam.step(&mut c, &grads, t, 7000);
            m = b1 * m + (1.0 - b1) * 0.37;
            v = b2 * v + (1.0 - b2) * 0.37 * 0.37;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            x -= lr * mh / (vh.sqrt() + eps);
            assert!((c.primitives[0].opacity_logit - x).abs() < 1e-14);
        }
        // constant gradient: every step moves by the learning rate
        assert!((x0 - x - 25.0 * lr).abs() < 1e-9);
    }

    #[test]
    fn position_lr_decays_to_one_percent() {
        let adam = Adam::new(OptimConfig::default(), 0);
        assert!((adam.position_lr(0, 7000, 2.0) - 3.2e-4).abs() < 1e-15);
        assert!((adam.position_lr(7000, 7000, 2.0) / adam.position_lr(0, 7000, 2.0) - 1e-2).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_skips_step() {
        let mut c = cloud();
        let before = c.clone();
        let mut adam = Adam::new(OptimConfig::default(), 2);
        let mut d = PrimitiveGrad::default();
        d.position.x = f64::NAN;
        assert!(!adam.step(&mut c, &[d, PrimitiveGrad::default()], 0, 7000));
        assert_eq!(c, before);
        assert_eq!((adam.step, adam.skipped), (0, 1));
    }

    #[test]
    fn quaternion_stays_unit() {
        let mut c = cloud();
        let mut adam = Adam::new(OptimConfig::default(), 2);
        let mut d = PrimitiveGrad::default();
        d.rotation = Vector4::new(1.0, -2.0, 0.5, 3.0);
        for i in 0..10 {
            adam.step(&mut c, &[d.clone(), d.clone()], i, 7000);
        }
        assert!((c.primitives[0].rotation.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flatten_round_trip() {
        let c = cloud();
        let mut g = c.primitives[0].clone();
        g.feature = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let mut h = c.primitives[1].clone();
        unflatten(&flatten(&g), &mut h);
        assert_eq!(g, h);
    }
}
