use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::density::{density_control, DensityReport, GradStats};
use super::losses::{color_loss, dn_loss, scale_loss, stereo_losses, ActiveTerms, LossReport, TermValues};
use super::optim::Adam;
use crate::error::{Error, Result};
use crate::feature::{distill_loss, pseudo_consistency, sample_pseudo_view, train_align_loss, FeatureBackend};
use crate::image::Raster;
use crate::raster::{backward, render, RasterBundle, RasterGrads, RenderGradients, RenderOptions};
use crate::scene::{Camera, GaussianCloud};
use crate::stereo::{make_stereo_rig, refresh_priors, should_refresh, StereoBackend, StereoPrior, StereoRig};

fn add_scaled(dst: &mut Raster, k: f64, src: &Raster) {
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += k * s;
    }
}

/// Index of the training camera nearest to each camera (excluding itself).
pub fn nearest_views(cams: &[Camera]) -> Vec<usize> {
    (0..cams.len())
        .map(|i| {
            (0..cams.len())
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    let da = (cams[a].center() - cams[i].center()).norm();
                    let db = (cams[b].center() - cams[i].center()).norm();
                    da.total_cmp(&db)
                })
                .unwrap_or(i)
        })
        .collect()
}

/// Give every primitive with an all-zero feature the reference feature at its
/// projection in the first view that sees it, or `e0`.
pub fn seed_features(cloud: &mut GaussianCloud, cams: &[Camera], features: &[Raster]) {
    for g in cloud.primitives.iter_mut().filter(|g| g.feature.iter().all(|&v| v == 0.0)) {
        g.feature[0] = 1.0;
        for (cam, f) in cams.iter().zip(features) {
            let pc = cam.world_to_camera(&g.position);
            if pc.z <= 0.0 {
                continue;
            }
            let uv = cam.project_camera(&pc);
            let (x, y) = (uv.x.round(), uv.y.round());
            if x >= 0.0 && y >= 0.0 && (x as usize) < cam.width() && (y as usize) < cam.height() {
                g.feature.copy_from_slice(f.pixel(x as usize, y as usize));
                break;
            }
        }
    }
}

/// The optimisation loop over a fixed set of posed training images.
pub struct Trainer {
    pub config: TrainConfig,
    pub cloud: GaussianCloud,
    pub adam: Adam,
    /// Next iteration to run.
    pub iter: usize,
    pub images: Vec<Raster>,
    pub cameras: Vec<Camera>,
    /// Extracted reference features of every training view.
    pub features: Vec<Raster>,
    pub rigs: Vec<StereoRig>,
    pub priors: Vec<Option<StereoPrior>>,
    pub last_density: Option<DensityReport>,
    stereo: StereoBackend,
    sources: Vec<usize>,
    stats: GradStats,
    rng: ChaCha8Rng,
    opts: RenderOptions,
}

impl Trainer {
    /// Validate inputs, extract reference features and build the stereo rigs.
    ///
    /// Feature extraction failures abort here; stereo failures later only
    /// skip a refresh.
    pub fn new(
        mut cloud: GaussianCloud,
        images: Vec<Raster>,
        cameras: Vec<Camera>,
        config: TrainConfig,
        stereo: StereoBackend,
        feature_backend: &FeatureBackend,
    ) -> Result<Self> {
        config.validate()?;
        if images.len() != cameras.len() || cameras.len() < 2 {
            return Err(Error::Precondition(format!(
                "training needs at least 2 views with one image each, got {} cameras and {} images",
                cameras.len(),
                images.len()
            )));
        }
        for (i, (img, cam)) in images.iter().zip(&cameras).enumerate() {
            if img.height() != cam.height() || img.width() != cam.width() || img.channels() != 3 {
                return Err(Error::DimensionMismatch {
                    expected: format!("view {i}: {}x{}x3", cam.height(), cam.width()),
                    actual: img.shape_string(),
                });
            }
        }
        let features = images.iter().map(|img| feature_backend.extract(img)).collect::<Result<Vec<_>>>()?;
        let rigs = (0..cameras.len())
            .map(|i| make_stereo_rig(i, &cameras, cloud.scene_radius(), config.prior.baseline_frac))
            .collect::<Result<Vec<_>>>()?;
        seed_features(&mut cloud, &cameras, &features);
        let n = cloud.len();
        let opts = RenderOptions {
            background: config.background,
            ..Default::default()
        };
        Ok(Self {
            adam: Adam::new(config.optim.clone(), n),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            sources: nearest_views(&cameras),
            priors: vec![None; cameras.len()],
            stats: GradStats::new(n),
            last_density: None,
            iter: 0,
            config,
            cloud,
            images,
            cameras,
            features,
            rigs,
            stereo,
            opts,
        })
    }

    pub fn render_options(&self) -> &RenderOptions {
        &self.opts
    }

    pub fn is_done(&self) -> bool {
        self.iter >= self.config.schedule.total_iters
    }

    /// Run one iteration on training view `iter mod n`.
    pub fn step(&mut self) -> Result<LossReport> {
        let it = self.iter;
        let cfg = &self.config;
        let w = cfg.weights.clone();
        let active = ActiveTerms::at(it, &cfg.schedule, &cfg.ablation);
        if active.stereo && should_refresh(it, cfg.schedule.stereo_start, cfg.schedule.stereo_period) {
            let n = refresh_priors(
                &self.cloud,
                &self.rigs,
                &self.images,
                &self.stereo,
                &cfg.prior,
                &self.opts,
                it,
                &mut self.priors,
            );
            debug!("iteration {it}: refreshed {n} stereo priors");
        }

        let t = it % self.cameras.len();
        let cam_t = &self.cameras[t];
        let bundle_t = render(&self.cloud, cam_t, &self.opts);
        let mut g_t = RasterGrads::for_bundle(&bundle_t);
        let mut values = TermValues::default();

        let (l_c, d_c) = color_loss(&bundle_t.color, &self.images[t]);
        values.color = l_c;
        g_t.color = d_c;

        let (l_f, d_f) = distill_loss(&bundle_t.feature, &self.features[t]);
        values.feature = l_f;
        add_scaled(&mut g_t.feature, w.feature, &d_f);

        if active.train_align {
            let s = self.sources[t];
            let (l, dd) = train_align_loss(
                &self.features[s],
                &bundle_t.depth,
                &bundle_t.depth_valid,
                cam_t,
                &self.cameras[s],
                &self.features[t],
            );
            values.train_align = Some(l);
            add_scaled(&mut g_t.depth, w.train_align, &dd);
        }

        if active.stereo {
            if let Some(prior) = &self.priors[t] {
                let st = stereo_losses(&bundle_t, prior, &self.images[t], &w);
                values.stereo = Some((st.depth, st.normal, st.normal_from_depth, st.smooth));
                add_scaled(&mut g_t.depth, 1.0, &st.d_depth);
                add_scaled(&mut g_t.normal, 1.0, &st.d_normal);
                add_scaled(&mut g_t.depth_normal, 1.0, &st.d_depth_normal);
            }
        }

        if active.depth_normal {
            let (l, gn, gnd) = dn_loss(&bundle_t);
            values.depth_normal = Some(l);
            add_scaled(&mut g_t.normal, w.depth_normal, &gn);
            add_scaled(&mut g_t.depth_normal, w.depth_normal, &gnd);
        }

        // extra (bundle, upstream) pairs beyond the main view
        let mut extra: Vec<(RasterBundle, RasterGrads)> = Vec::new();
        if active.pseudo {
            let pv = sample_pseudo_view(&self.cameras, self.cloud.scene_radius(), &mut self.rng)?;
            let bundle_p = render(&self.cloud, &pv.camera, &self.opts);
            let r = pv.reference;
            let bundle_r = (r != t).then(|| render(&self.cloud, &self.cameras[r], &self.opts));
            let br = bundle_r.as_ref().unwrap_or(&bundle_t);
            let terms = pseudo_consistency(
                &bundle_p.feature,
                &bundle_p.depth,
                &bundle_p.depth_valid,
                &self.features[r],
                &br.depth,
                &br.depth_valid,
                &self.cameras[r],
                &pv.camera,
                cfg.features.tau,
                cfg.features.patch,
            );
            values.pseudo = Some(terms.loss);
            let mut g_p = RasterGrads::for_bundle(&bundle_p);
            add_scaled(&mut g_p.feature, w.pseudo, &terms.d_feature_pseudo);
            extra.push((bundle_p, g_p));
            match bundle_r {
                None => add_scaled(&mut g_t.depth, w.pseudo, &terms.d_depth_ref),
                Some(b) => {
                    let mut g_r = RasterGrads::for_bundle(&b);
                    add_scaled(&mut g_r.depth, w.pseudo, &terms.d_depth_ref);
                    extra.push((b, g_r));
                }
            }
        }

        let (l_s, d_s) = scale_loss(&self.cloud);
        values.scale = l_s;
        let report = LossReport::compose(it, &values, &w, active);

        let grads = self.gradients(&bundle_t, &g_t, &extra);
        match grads {
            Ok(mut grads) => {
                for (g, d) in grads.primitives.iter_mut().zip(&d_s) {
                    for k in 0..3 {
                        g.log_scales[k] += w.scale * d[k];
                    }
                }
                self.adam.step(&mut self.cloud, &grads.primitives, it, self.config.schedule.total_iters);
            }
            Err(e @ Error::NonFiniteGradient { .. }) => {
                warn!("iteration {it}: step skipped: {e}");
                self.adam.skipped += 1;
            }
            Err(e) => return Err(e),
        }

        if self.config.density.is_control_step(it) {
            let rep = density_control(&mut self.cloud, &self.stats, &mut self.adam, &self.config.density, &mut self.rng);
            debug!("iteration {it}: density control {rep:?}, {} primitives", self.cloud.len());
            self.last_density = Some(rep);
            self.stats = GradStats::new(self.cloud.len());
        }
        self.iter += 1;
        Ok(report)
    }

    fn gradients(
        &mut self,
        bundle_t: &RasterBundle,
        g_t: &RasterGrads,
        extra: &[(RasterBundle, RasterGrads)],
    ) -> Result<RenderGradients> {
        let mut grads = backward(&self.cloud, bundle_t, g_t)?;
        self.stats.add(&grads);
        for (b, g) in extra {
            let more = backward(&self.cloud, b, g)?;
            grads.accumulate(&more);
        }
        Ok(grads)
    }

    /// Run to the end of the schedule, passing each report to `on_report`.
    pub fn run(&mut self, mut on_report: impl FnMut(&LossReport) -> Result<()>) -> Result<()> {
        while !self.is_done() {
            let r = self.step()?;
            on_report(&r)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn nearest_view_excludes_self() {
        let cams: Vec<_> = [0.0, 1.0, 5.0]
            .iter()
            .map(|&x| Camera::look_at(Vector3::new(x, 0.0, -4.0), Vector3::new(x, 0.0, 0.0), Vector3::new(0.0, -1.0, 0.0), 20.0, 20.0, 8, 8).unwrap())
            .collect();
        assert_eq!(nearest_views(&cams), vec![1, 0, 1]);
    }
}
