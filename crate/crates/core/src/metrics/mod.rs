//! Leaderboard metrics (8-bit PSNR, grayscale SSIM), loss diagnostics and
//! set-level reports.

mod losses;
mod quality;
mod report;

pub use losses::{
    charbonnier, cidaut_composite, cidaut_composite_auto, dft2, fft_l1, to_yuv, CompositeLoss,
    GRADIENT_WEIGHT, YUV_WEIGHT,
};
pub use quality::{
    gaussian_taps, gray_8bit, psnr_8bit, ssim_gray, PSNR_CAP_DB, SSIM_K1, SSIM_K2, SSIM_SIGMA,
    SSIM_WINDOW,
};
pub use report::{
    discover_images, evaluate_pair, evaluate_set, LossDiagnostics, MetricsReport, SceneMetrics,
    CHARBONNIER_EPS,
};
