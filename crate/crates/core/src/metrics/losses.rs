use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::quality::check_same_dims;
use crate::error::{Error, Result};
use crate::image::{ImagePlane, RgbImage, LUMA_601};

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn flat(img: &RgbImage) -> Vec<f64> {
    img.channels().iter().flat_map(|p| p.data().iter().copied()).collect()
}

/// Mean of `sqrt(d^2 + eps^2)` over all samples.
pub fn charbonnier(pred: &RgbImage, gt: &RgbImage, eps: f64) -> Result<f64> {
    check_same_dims(pred, gt)?;
    if !(eps > 0.0) {
        return Err(Error::Validation(format!("eps must be > 0, got {eps}")));
    }
    let (a, b) = (flat(pred), flat(gt));
    let e2 = eps * eps;
    Ok(a.iter().zip(&b).map(|(x, y)| ((x - y).powi(2) + e2).sqrt()).sum::<f64>() / a.len() as f64)
}

/// Unnormalized 2-D DFT of a real plane, row-major.
pub fn dft2(p: &ImagePlane) -> Vec<Complex<f64>> {
    let (w, h) = p.dims();
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(w);
    let col_fft = planner.plan_fft_forward(h);
    let mut buf: Vec<Complex<f64>> = p.data().iter().map(|&v| Complex::new(v, 0.0)).collect();
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }
    buf
}

/// Mean absolute difference of the real and imaginary parts of the
/// unnormalized per-channel spectra, averaged over bins, channels and parts.
pub fn fft_l1(pred: &RgbImage, gt: &RgbImage) -> Result<f64> {
    check_same_dims(pred, gt)?;
    let (w, h) = pred.dims();
    let mut total = 0.0;
    for (p, g) in pred.channels().iter().zip(gt.channels()) {
        let (fp, fg) = (dft2(p), dft2(g));
        total += fp
            .iter()
            .zip(&fg)
            .map(|(a, b)| (a.re - b.re).abs() + (a.im - b.im).abs())
            .sum::<f64>();
    }
    Ok(total / (2 * w * h * 3) as f64)
}

/// Forward differences in x and y with the last column/row replicated
/// (so the difference there is 0).
fn gradients(p: &ImagePlane) -> (ImagePlane, ImagePlane) {
    let (w, h) = p.dims();
    let gx = ImagePlane::from_fn(w, h, |x, y| p.get((x + 1).min(w - 1), y) - p.get(x, y));
    let gy = ImagePlane::from_fn(w, h, |x, y| p.get(x, (y + 1).min(h - 1)) - p.get(x, y));
    (gx, gy)
}

/// BT.601 YUV planes.
pub fn to_yuv(img: &RgbImage) -> [ImagePlane; 3] {
    let [wr, wg, wb] = LUMA_601;
    let (w, h) = img.dims();
    let y = ImagePlane::from_fn(w, h, |x, yy| wr * img.r.get(x, yy) + wg * img.g.get(x, yy) + wb * img.b.get(x, yy));
    let u = ImagePlane::from_fn(w, h, |x, yy| 0.492 * (img.b.get(x, yy) - y.get(x, yy)));
    let v = ImagePlane::from_fn(w, h, |x, yy| 0.877 * (img.r.get(x, yy) - y.get(x, yy)));
    [y, u, v]
}

/// The three terms of the composite loss.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CompositeLoss {
    pub pixel: f64,
    pub gradient: f64,
    pub yuv_ds8: f64,
}

impl CompositeLoss {
    pub fn total(&self) -> f64 {
        self.pixel + self.gradient + self.yuv_ds8
    }
}

pub const GRADIENT_WEIGHT: f64 = 50.0;
pub const YUV_WEIGHT: f64 = 0.8;

/// `L1(x) + 50 L1(grad x) + 0.8 L1_yuv(x downsampled by 8)`, each L1 a mean.
pub fn cidaut_composite(
    pred: &RgbImage,
    gt: &RgbImage,
    pred_ds8: &RgbImage,
    gt_ds8: &RgbImage,
) -> Result<CompositeLoss> {
    check_same_dims(pred, gt)?;
    check_same_dims(pred_ds8, gt_ds8)?;
    let (w, h) = pred.dims();
    let want = (w.div_ceil(8), h.div_ceil(8));
    if pred_ds8.dims() != want {
        return Err(Error::Dimension(format!(
            "downsampled images must be {want:?}, got {:?}",
            pred_ds8.dims()
        )));
    }
    let pixel = mean_abs_diff(&flat(pred), &flat(gt));

    let mut gsum = 0.0;
    for (p, g) in pred.channels().iter().zip(gt.channels()) {
        let (px, py) = gradients(p);
        let (gx, gy) = gradients(g);
        gsum += mean_abs_diff(px.data(), gx.data()) + mean_abs_diff(py.data(), gy.data());
    }
    let gradient = GRADIENT_WEIGHT * gsum / 6.0;

    let (ya, yb) = (to_yuv(pred_ds8), to_yuv(gt_ds8));
    let ysum: f64 = ya.iter().zip(&yb).map(|(a, b)| mean_abs_diff(a.data(), b.data())).sum();
    let yuv_ds8 = YUV_WEIGHT * ysum / 3.0;
    Ok(CompositeLoss {
        pixel,
        gradient,
        yuv_ds8,
    })
}

/// Composite loss with the 8x mean-pooled pair computed here.
pub fn cidaut_composite_auto(pred: &RgbImage, gt: &RgbImage) -> Result<CompositeLoss> {
    cidaut_composite(pred, gt, &pred.downsample_mean(8), &gt.downsample_mean(8))
}
