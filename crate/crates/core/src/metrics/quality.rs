use crate::error::{Error, Result};
use crate::image::{to_u8, ImagePlane, RgbImage, LUMA_601};

/// Reported PSNR for identical images, and the ceiling for all others.
pub const PSNR_CAP_DB: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
const L: f64 = 255.0;

pub(crate) fn check_same_dims(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Dimension(format!(
            "image sizes differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// PSNR after requantizing both images to 8 bits; MSE over all samples.
pub fn psnr_8bit(pred: &RgbImage, gt: &RgbImage) -> Result<f64> {
    check_same_dims(pred, gt)?;
    let mut sse = 0.0;
    let mut n = 0usize;
    for (p, g) in pred.channels().iter().zip(gt.channels()) {
        for (&a, &b) in p.data().iter().zip(g.data()) {
            let d = to_u8(a) as f64 - to_u8(b) as f64;
            sse += d * d;
            n += 1;
        }
    }
    let mse = sse / n as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (L * L / mse).log10()).min(PSNR_CAP_DB))
}

/// Rec.601 luma of the 8-bit codes, in `[0, 255]`.
pub fn gray_8bit(img: &RgbImage) -> ImagePlane {
    let [wr, wg, wb] = LUMA_601;
    let (w, h) = img.dims();
    let mut out = ImagePlane::new(w, h);
    for (i, o) in out.data_mut().iter_mut().enumerate() {
        *o = wr * to_u8(img.r.data()[i]) as f64
            + wg * to_u8(img.g.data()[i]) as f64
            + wb * to_u8(img.b.data()[i]) as f64;
    }
    out
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering with `taps` along both axes.
fn filter_valid(p: &ImagePlane, taps: &[f64]) -> ImagePlane {
    let k = taps.len();
    let (w, h) = p.dims();
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let mut rows = ImagePlane::new(ow, h);
    for y in 0..h {
        let src = p.row(y);
        for x in 0..ow {
            let v: f64 = taps.iter().zip(&src[x..x + k]).map(|(t, s)| t * s).sum();
            rows.set(x, y, v);
        }
    }
    let mut out = ImagePlane::new(ow, oh);
    for y in 0..oh {
        for x in 0..ow {
            let v: f64 = taps.iter().enumerate().map(|(j, t)| t * rows.get(x, y + j)).sum();
            out.set(x, y, v);
        }
    }
    out
}

/// Grayscale SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over
/// every window position that fits inside the image.
pub fn ssim_gray(pred: &RgbImage, gt: &RgbImage) -> Result<f64> {
    check_same_dims(pred, gt)?;
    let (w, h) = pred.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let x = gray_8bit(pred);
    let y = gray_8bit(gt);
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let prod = |a: &ImagePlane, b: &ImagePlane| {
        let mut o = a.clone();
        for (v, &u) in o.data_mut().iter_mut().zip(b.data()) {
            *v *= u;
        }
        o
    };
    let mx = filter_valid(&x, &taps);
    let my = filter_valid(&y, &taps);
    let mxx = filter_valid(&prod(&x, &x), &taps);
    let myy = filter_valid(&prod(&y, &y), &taps);
    let mxy = filter_valid(&prod(&x, &y), &taps);
    let c1 = (SSIM_K1 * L).powi(2);
    let c2 = (SSIM_K2 * L).powi(2);
    let n = mx.data().len();
    let mut total = 0.0;
    for i in 0..n {
        let (ux, uy) = (mx.data()[i], my.data()[i]);
        let vx = mxx.data()[i] - ux * ux;
        let vy = myy.data()[i] - uy * uy;
        let cov = mxy.data()[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2))
            / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok(total / n as f64)
}
