use nalgebra::{Matrix3, Vector3, Vector4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::scene::{Camera, GaussianCloud, GaussianPrimitive};

fn cam(w: usize, h: usize, f: f64) -> Camera {
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    Camera::new(f, f, cx, cy, w, h, Matrix3::identity(), Vector3::zeros()).unwrap()
}

fn surfel(pos: Vector3<f64>, q: Vector4<f64>, s: f64, opacity: f64, color: Vector3<f64>) -> GaussianPrimitive {
    GaussianPrimitive::new(pos, q, Vector3::new(s, s, s * 0.05), opacity, color).unwrap()
}

const IDENTITY: Vector4<f64> = Vector4::new(1.0, 0.0, 0.0, 0.0);

#[test]
fn empty_pixel_shows_background() {
    let cloud = GaussianCloud::new(vec![surfel(Vector3::new(0.0, 0.0, -3.0), IDENTITY, 0.3, 0.9, Vector3::repeat(1.0))], 1.0).unwrap();
    let opts = RenderOptions {
        background: [0.2, 0.3, 0.4],
        ..Default::default()
    };
    let b = render(&cloud, &cam(16, 16, 20.0), &opts);
    for y in 0..16 {
        for x in 0..16 {
            assert_eq!(b.color.pixel(x, y), &[0.2, 0.3, 0.4]);
            assert_eq!(b.alpha.get(x, y, 0), 0.0);
            assert!(!b.depth_valid.get(x, y));
            assert!(!b.geometry_valid.get(x, y));
        }
    }
    assert_eq!(b.visible_count(), 0);
}

#[test]
fn single_surfel_center_pixel() {
    let c = Vector3::new(0.9, 0.5, 0.1);
    let cloud = GaussianCloud::new(vec![surfel(Vector3::new(0.0, 0.0, 3.0), IDENTITY, 0.5, 0.99, c)], 1.0).unwrap();
    let b = render(&cloud, &cam(17, 17, 20.0), &RenderOptions::default());
    let a = b.alpha.get(8, 8, 0);
    assert!((a - 0.99).abs() < 1e-12);
    for k in 0..3 {
        assert!((b.color.get(8, 8, k) - a * c[k]).abs() < 1e-12);
    }
    assert_eq!(b.normal.pixel(8, 8), &[0.0, 0.0, -1.0]);
    assert!((b.depth.get(8, 8, 0) - 3.0).abs() < 1e-12);
    assert!((b.distance.get(8, 8, 0) - a * 3.0).abs() < 1e-12);
}

#[test]
fn two_stacked_surfels_composite() {
    let (a1, a2) = (0.6, 0.7);
    let c1 = Vector3::new(1.0, 0.0, 0.2);
    let c2 = Vector3::new(0.0, 1.0, 0.4);
    // listed back first: sorting must restore depth order
    let cloud = GaussianCloud::new(
        vec![
            surfel(Vector3::new(0.0, 0.0, 4.0), IDENTITY, 0.5, a2, c2),
            surfel(Vector3::new(0.0, 0.0, 3.0), IDENTITY, 0.5, a1, c1),
        ],
        1.0,
    )
    .unwrap();
    let b = render(&cloud, &cam(17, 17, 20.0), &RenderOptions::default());
    let expect = c1 * a1 + c2 * ((1.0 - a1) * a2);
    for k in 0..3 {
        assert!((b.color.get(8, 8, k) - expect[k]).abs() < 1e-12);
    }
    let (list, tf) = b.contributors(8, 8);
    assert_eq!(list.iter().map(|c| c.0).collect::<Vec<_>>(), vec![1, 0]);
    assert!((tf - (1.0 - a1) * (1.0 - a2)).abs() < 1e-12);
}

#[test]
fn tilted_surfel_unbiased_depth_matches_plane() {
    // rotate 35 degrees about the camera y axis
    let half = 35f64.to_radians() / 2.0;
    let q = Vector4::new(half.cos(), 0.0, half.sin(), 0.0);
    let mu = Vector3::new(0.0, 0.0, 3.0);
    let g = GaussianPrimitive::new(mu, q, Vector3::new(1.0, 1.0, 0.01), 0.999, Vector3::repeat(0.5)).unwrap();
    let n = g.rotation_matrix().column(2).into_owned();
    let camera = cam(33, 33, 30.0);
    let b = render(&GaussianCloud::new(vec![g], 1.0).unwrap(), &camera, &RenderOptions::default());
    let mut checked = 0;
    let mut max_mean_err: f64 = 0.0;
    for y in 0..33 {
        for x in 0..33 {
            if !b.depth_valid.get(x, y) {
                continue;
            }
            let ray = camera.pixel_ray(x as f64, y as f64);
            let analytic = n.dot(&mu) / n.dot(&ray) * ray.z;
            let z = b.depth.get(x, y, 0);
            assert!((z - analytic).abs() <= 1e-6 * analytic, "({x},{y}) {z} vs {analytic}");
            max_mean_err = max_mean_err.max((b.mean_depth.get(x, y, 0) - analytic).abs());
            checked += 1;
        }
    }
    assert!(checked > 100);
    assert!(max_mean_err > 0.1, "mean depth should not follow the plane ({max_mean_err})");
}

#[test]
fn fronto_parallel_surfel_depths_agree() {
    let g = surfel(Vector3::new(0.1, -0.1, 2.5), IDENTITY, 0.8, 0.999, Vector3::repeat(0.5));
    let b = render(&GaussianCloud::new(vec![g], 1.0).unwrap(), &cam(24, 24, 20.0), &RenderOptions::default());
    let mut n = 0;
    for y in 0..24 {
        for x in 0..24 {
            if b.depth_valid.get(x, y) {
                assert!((b.depth.get(x, y, 0) - 2.5).abs() < 2.5e-6);
                assert!((b.mean_depth.get(x, y, 0) - 2.5).abs() < 2.5e-6);
                n += 1;
            }
        }
    }
    assert!(n > 50);
}

fn random_scene(seed: u64, n: usize) -> GaussianCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prims = (0..n)
        .map(|_| {
            let pos = Vector3::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), rng.gen_range(2.5..3.5));
            let q = Vector4::new(1.0, rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.5..0.5));
            let s = Vector3::new(rng.gen_range(0.2..0.5), rng.gen_range(0.2..0.5), rng.gen_range(0.01..0.04));
            let color = Vector3::new(rng.gen(), rng.gen(), rng.gen());
            let mut g = GaussianPrimitive::new(pos, q, s, rng.gen_range(0.3..0.9), color).unwrap();
            for f in g.feature.iter_mut() {
                *f = rng.gen_range(-1.0..1.0);
            }
            g
        })
        .collect();
    GaussianCloud::new(prims, 1.0).unwrap()
}

fn weights(h: usize, w: usize, seed: u64) -> RasterGrads {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = RasterGrads::zeros(h, w);
    for r in [
        &mut g.color,
        &mut g.alpha,
        &mut g.normal,
        &mut g.distance,
        &mut g.depth,
        &mut g.feature,
        &mut g.depth_normal,
    ] {
        for v in r.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    g
}

fn composite(b: &RasterBundle, w: &RasterGrads) -> f64 {
    let dot = |a: &Raster, b: &Raster| a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum::<f64>();
    dot(&b.color, &w.color)
        + dot(&b.alpha, &w.alpha)
        + dot(&b.normal, &w.normal)
        + dot(&b.distance, &w.distance)
        + dot(&b.depth, &w.depth)
        + dot(&b.feature, &w.feature)
        + dot(&b.depth_normal, &w.depth_normal)
}

/// Contributor lists and validity masks; finite differences are only
/// meaningful while these stay fixed.
fn structure(b: &RasterBundle) -> (Vec<Vec<usize>>, Vec<bool>) {
    let (h, w) = (b.height(), b.width());
    let mut lists = Vec::new();
    for y in 0..h {
        for x in 0..w {
            lists.push(b.contributors(x, y).0.iter().map(|c| c.0).collect());
        }
    }
    let masks = [&b.geometry_valid, &b.depth_valid, &b.depth_normal_valid]
        .iter()
        .flat_map(|m| m.data().to_vec())
        .collect();
    (lists, masks)
}

fn raw_params(g: &GaussianPrimitive) -> Vec<f64> {
    let mut v = Vec::new();
    v.extend(g.position.iter());
    v.extend(g.rotation.iter());
    v.extend(g.log_scales.iter());
    v.push(g.opacity_logit);
    v.extend(g.color.iter());
    v.extend(g.feature.iter());
    v
}

fn set_raw(g: &mut GaussianPrimitive, i: usize, value: f64) {
    match i {
        0..=2 => g.position[i] = value,
        3..=6 => g.rotation[i - 3] = value,
        7..=9 => g.log_scales[i - 7] = value,
        10 => g.opacity_logit = value,
        11..=13 => g.color[i - 11] = value,
        _ => g.feature[i - 14] = value,
    }
}

fn grad_vec(p: &PrimitiveGrad) -> Vec<f64> {
    let mut v = Vec::new();
    v.extend(p.position.iter());
    v.extend(p.rotation.iter());
    v.extend(p.log_scales.iter());
    v.push(p.opacity_logit);
    v.extend(p.color.iter());
    v.extend(p.feature.iter());
    v
}

#[test]
fn backward_matches_finite_differences() {
    let camera = cam(16, 16, 18.0);
    let opts = RenderOptions {
        background: [0.1, 0.2, 0.3],
        ..Default::default()
    };
    let cloud = random_scene(7, 8);
    let upstream = weights(16, 16, 99);
    let bundle = render(&cloud, &camera, &opts);
    assert!(bundle.depth_normal_valid.count() > 10);
    let grads = backward(&cloud, &bundle, &upstream).unwrap();
    let base = structure(&bundle);
    let h = 1e-4;
    let mut checked = 0;
    for (pi, g) in cloud.primitives.iter().enumerate() {
        let analytic = grad_vec(&grads.primitives[pi]);
        for (k, &v) in raw_params(g).iter().enumerate() {
            let eval = |value: f64| {
                let mut c = cloud.clone();
                set_raw(&mut c.primitives[pi], k, value);
                let b = render(&c, &camera, &opts);
                assert!(structure(&b) == base, "primitive {pi} param {k}: contributor structure changed");
                composite(&b, &upstream)
            };
            let fd = (eval(v + h) - eval(v - h)) / (2.0 * h);
            let an = analytic[k];
            assert!(
                (fd - an).abs() <= 1e-6 + 1e-4 * an.abs(),
                "primitive {pi} param {k}: fd {fd} vs analytic {an}"
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 8 * 22);
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let cloud = random_scene(3, 8);
    let b = render(&cloud, &cam(16, 16, 18.0), &RenderOptions::default());
    let g = backward(&cloud, &b, &RasterGrads::for_bundle(&b)).unwrap();
    assert!(g.primitives.iter().all(|p| p.is_zero()));
    assert!(g.screen_grad.iter().all(|&s| s == 0.0));
}

#[test]
fn color_gradient_is_blend_weight() {
    let cloud = GaussianCloud::new(vec![surfel(Vector3::new(0.0, 0.0, 3.0), IDENTITY, 0.5, 0.7, Vector3::repeat(0.4))], 1.0).unwrap();
    let b = render(&cloud, &cam(17, 17, 20.0), &RenderOptions::default());
    let mut up = RasterGrads::for_bundle(&b);
    up.color.set(8, 8, 1, 1.0);
    let g = backward(&cloud, &b, &up).unwrap();
    let (list, _) = b.contributors(8, 8);
    let alpha = list[0].1;
    assert!((g.primitives[0].color[1] - alpha).abs() < 1e-15);
    assert_eq!(g.primitives[0].color[0], 0.0);
    assert_eq!(g.visible_views[0], 1);
}

#[test]
fn backward_flags_non_finite_upstream() {
    let cloud = random_scene(3, 4);
    let b = render(&cloud, &cam(16, 16, 18.0), &RenderOptions::default());
    let mut up = RasterGrads::for_bundle(&b);
    let (x, y) = (0..16 * 16)
        .map(|i| (i % 16, i / 16))
        .find(|&(x, y)| !b.contributors(x, y).0.is_empty())
        .unwrap();
    up.color.set(x, y, 0, f64::NAN);
    match backward(&cloud, &b, &up) {
        Err(crate::Error::NonFiniteGradient { pixel, .. }) => assert_eq!(pixel, Some((x, y))),
        other => panic!("expected non-finite error, got {other:?}"),
    }
}

#[test]
fn tile_size_does_not_change_output() {
    let cloud = random_scene(11, 8);
    let camera = cam(40, 24, 25.0);
    let a = render(&cloud, &camera, &RenderOptions::default());
    let b = render(&cloud, &camera, &RenderOptions { tile_size: 7, ..Default::default() });
    assert_eq!(a.color, b.color);
    assert_eq!(a.depth, b.depth);
    let up = weights(24, 40, 5);
    let ga = backward(&cloud, &a, &up).unwrap();
    let gb = backward(&cloud, &b, &up).unwrap();
    for (p, q) in ga.primitives.iter().zip(&gb.primitives) {
        assert!((grad_vec(p).iter().zip(grad_vec(q)).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)) < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn weights_and_final_transmittance_sum_to_one(seed in 0u64..10_000) {
        let cloud = random_scene(seed, 10);
        let b = render(&cloud, &cam(16, 16, 18.0), &RenderOptions::default());
        for y in 0..16 {
            for x in 0..16 {
                let (list, tf) = b.contributors(x, y);
                let total: f64 = list.iter().map(|c| c.1 * c.2).sum::<f64>() + tf;
                prop_assert!((total - 1.0).abs() < 1e-6);
                prop_assert!(list.windows(2).all(|w| w[1].2 <= w[0].2));
                let a = b.alpha.get(x, y, 0);
                prop_assert!((0.0..=1.0).contains(&a));
                if b.geometry_valid.get(x, y) {
                    let n = Vector3::from_column_slice(b.normal.pixel(x, y)).norm();
                    prop_assert!((n - 1.0).abs() < 1e-12);
                }
                if b.depth_valid.get(x, y) {
                    prop_assert!(b.depth.get(x, y, 0) > 0.0);
                }
            }
        }
    }

    #[test]
    fn render_is_permutation_invariant(seed in 0u64..10_000, rot in 1usize..9) {
        let cloud = random_scene(seed, 9);
        let mut shuffled = cloud.clone();
        shuffled.primitives.rotate_left(rot);
        let camera = cam(16, 16, 18.0);
        let a = render(&cloud, &camera, &RenderOptions::default());
        let b = render(&shuffled, &camera, &RenderOptions::default());
        prop_assert_eq!(&a.color, &b.color);
        prop_assert_eq!(&a.depth, &b.depth);
        prop_assert_eq!(&a.feature, &b.feature);
    }
}
