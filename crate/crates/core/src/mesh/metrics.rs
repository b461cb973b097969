use crate::error::{Error, Result};
use crate::image::{planes, Raster, WindowFilter};

/// Upper bound reported for identical images.
pub const PSNR_CAP: f64 = 100.0;

const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn check(a: &Raster, b: &Raster) -> Result<()> {
    a.ensure_same_shape(b)?;
    if a.pixel_count() == 0 {
        return Err(Error::Precondition("empty image".into()));
    }
    Ok(())
}

/// Peak signal-to-noise ratio for images in `[0, 1]`, capped at [`PSNR_CAP`].
pub fn psnr(a: &Raster, b: &Raster) -> Result<f64> {
    check(a, b)?;
    let n = a.data().len() as f64;
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
    if mse <= 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * mse.log10()).min(PSNR_CAP))
}

/// Mean structural similarity with an 11×11 Gaussian window (σ = 1.5).
pub fn ssim(a: &Raster, b: &Raster) -> Result<f64> {
    check(a, b)?;
    Ok(ssim_impl(a, b, false).0)
}

/// SSIM and its gradient with respect to `a`.
pub fn ssim_with_grad(a: &Raster, b: &Raster) -> Result<(f64, Raster)> {
    check(a, b)?;
    let (s, g) = ssim_impl(a, b, true);
    Ok((s, g.expect("gradient requested")))
}

fn ssim_impl(a: &Raster, b: &Raster, grad: bool) -> (f64, Option<Raster>) {
    let (h, w) = (a.height(), a.width());
    let win = WindowFilter::gaussian(11, 1.5);
    let pa = planes(a);
    let pb = planes(b);
    let n_total = (h * w * a.channels()) as f64;
    let mut total = 0.0;
    let mut grads = Vec::new();
    for (xa, xb) in pa.iter().zip(&pb) {
        let mu_a = win.apply(xa, h, w);
        let mu_b = win.apply(xb, h, w);
        let sq = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
        let e_aa = win.apply(&sq(xa, xa), h, w);
        let e_bb = win.apply(&sq(xb, xb), h, w);
        let e_ab = win.apply(&sq(xa, xb), h, w);
        let n = h * w;
        let mut d_mu = vec![0.0; n];
        let mut d_eaa = vec![0.0; n];
        let mut d_eab = vec![0.0; n];
        for i in 0..n {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let a1 = 2.0 * ma * mb + SSIM_C1;
            let a2 = 2.0 * (e_ab[i] - ma * mb) + SSIM_C2;
            let b1 = ma * ma + mb * mb + SSIM_C1;
            let b2 = (e_aa[i] - ma * ma) + (e_bb[i] - mb * mb) + SSIM_C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            if grad {
                d_mu[i] = (2.0 * mb * (a2 - a1) / (b1 * b2) - 2.0 * ma * s * (1.0 / b1 - 1.0 / b2)) / n_total;
                d_eaa[i] = -s / b2 / n_total;
                d_eab[i] = 2.0 * a1 / (b1 * b2) / n_total;
            }
        }
        if grad {
            let g_mu = win.apply_adjoint(&d_mu, h, w);
            let g_aa = win.apply_adjoint(&d_eaa, h, w);
            let g_ab = win.apply_adjoint(&d_eab, h, w);
            grads.push((0..n).map(|i| g_mu[i] + 2.0 * xa[i] * g_aa[i] + xb[i] * g_ab[i]).collect::<Vec<_>>());
        }
    }
    let g = grad.then(|| crate::image::from_planes(h, w, &grads));
    (total / n_total, g)
}
