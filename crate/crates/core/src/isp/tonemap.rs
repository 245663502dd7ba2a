use crate::image::RgbImage;

pub const DISPLAY_GAMMA: f64 = 2.2;

/// `(clamp(v / headroom, 0, 1))^(1/2.2)`.
#[inline]
pub fn tone_map_value(v: f64, headroom: f64) -> f64 {
    (v / headroom).clamp(0.0, 1.0).powf(1.0 / DISPLAY_GAMMA)
}

/// Display transform shared by ground-truth rendering and restoration.
pub fn tone_map(linear: &RgbImage, headroom: f64) -> RgbImage {
    linear.map_channels(|p| p.map(|v| tone_map_value(v, headroom)))
}
