use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{rng_stream, streams};
use crate::cfa::check_even;
use crate::error::Result;
use crate::image::{BitDepth, ImagePlane, RgbImage};

/// Lowest radiance the generator emits.
pub const RADIANCE_MIN: f64 = 0.002;
/// Highest radiance the generator emits. Kept below the saturation point of a
/// unit-gain exposure so the shortest frame always carries the highlights.
pub const RADIANCE_MAX: f64 = 0.95;

/// Natural-log spread enforced between the 10th and 90th luminance
/// percentiles (a ratio of 24, leaving room for the colour tints).
const MIN_LOG_SPREAD: f64 = 3.178;

/// Linear scene radiance, three channels, nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct HdrImage {
    pub rgb: RgbImage,
}

impl HdrImage {
    pub fn new(r: ImagePlane, g: ImagePlane, b: ImagePlane) -> Result<Self> {
        let rgb = RgbImage::new(r, g, b, BitDepth::Sixteen)?;
        if rgb.channels().iter().any(|p| p.data().iter().any(|&v| v < 0.0)) {
            return Err(crate::error::Error::Validation(
                "HDR radiance must be nonnegative".into(),
            ));
        }
        Ok(Self { rgb })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        Self {
            rgb: RgbImage::filled(width, height, rgb, BitDepth::Sixteen),
        }
    }

    pub fn width(&self) -> usize {
        self.rgb.width()
    }

    pub fn height(&self) -> usize {
        self.rgb.height()
    }

    pub fn luminance(&self) -> ImagePlane {
        crate::image::to_grayscale(&self.rgb)
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        Ok(Self {
            rgb: self.rgb.crop(x0, y0, w, h)?,
        })
    }
}

/// Bilinearly interpolated lattice noise with smoothstep easing.
struct ValueNoise {
    cell: f64,
    gw: usize,
    grid: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, width: usize, height: usize, cell: f64) -> Self {
        let gw = (width as f64 / cell).ceil() as usize + 2;
        let gh = (height as f64 / cell).ceil() as usize + 2;
        let grid = (0..gw * gh).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self { cell, gw, grid }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let (u, v) = (x / self.cell, y / self.cell);
        let (i, j) = (u.floor() as usize, v.floor() as usize);
        let ease = |t: f64| t * t * (3.0 - 2.0 * t);
        let (fx, fy) = (ease(u - u.floor()), ease(v - v.floor()));
        let g = |a: usize, b: usize| self.grid[b * self.gw + a];
        let top = g(i, j) * (1.0 - fx) + g(i + 1, j) * fx;
        let bot = g(i, j + 1) * (1.0 - fx) + g(i + 1, j + 1) * fx;
        top * (1.0 - fy) + bot * fy
    }
}

struct Stroke {
    a: (f64, f64),
    b: (f64, f64),
    half_width: f64,
    amount: f64,
}

impl Stroke {
    fn distance(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((x - self.a.0) * dx + (y - self.a.1) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (px, py) = (self.a.0 + t * dx, self.a.1 + t * dy);
        ((x - px).powi(2) + (y - py).powi(2)).sqrt()
    }
}

/// Deterministic synthetic HDR test content.
///
/// Log-luminance is the sum of a tilted gradient, two octaves of smooth value
/// noise, a randomly sized checkerboard of per-cell offsets, and anti-aliased
/// glyph-like strokes. Each checker cell also carries a mild colour tint.
pub fn procedural_hdr(seed: u64, width: usize, height: usize) -> Result<HdrImage> {
    check_even(width, height)?;
    let mut rng = rng_stream(seed, streams::HDR);
    let (wf, hf) = (width as f64, height as f64);

    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (gs, gc) = angle.sin_cos();
    let diag = (wf * wf + hf * hf).sqrt();
    let coarse = ValueNoise::new(&mut rng, width, height, 96.0);
    let fine = ValueNoise::new(&mut rng, width, height, 24.0);

    let cell: f64 = rng.random_range(10.0..28.0);
    let cw = (wf / cell).ceil() as usize + 1;
    let ch = (hf / cell).ceil() as usize + 1;
    let cells: Vec<(f64, [f64; 3])> = (0..cw * ch)
        .map(|_| {
            let offset = rng.random_range(-1.8..1.8);
            let tint = [
                rng.random_range(-0.35..0.35),
                rng.random_range(-0.15..0.15),
                rng.random_range(-0.35..0.35),
            ];
            (offset, tint)
        })
        .collect();

    let n_strokes = (width * height / 2000).max(4);
    let strokes: Vec<Stroke> = (0..n_strokes)
        .map(|_| {
            let a = (rng.random_range(0.0..wf), rng.random_range(0.0..hf));
            let len = rng.random_range(8.0..40.0);
            let dir: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            Stroke {
                a,
                b: (a.0 + len * dir.cos(), a.1 + len * dir.sin()),
                half_width: rng.random_range(0.75..1.5),
                amount: if rng.random_bool(0.5) { 1.4 } else { -1.4 },
            }
        })
        .collect();

    let mut log_lum = ImagePlane::from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let ramp = ((xf - wf * 0.5) * gc + (yf - hf * 0.5) * gs) / diag * 1.6;
        let smooth = 0.5 * coarse.at(xf, yf) + 0.25 * fine.at(xf, yf);
        let c = cells[(yf / cell) as usize * cw + (xf / cell) as usize].0;
        ramp + smooth + c
    });

    for s in &strokes {
        let reach = s.half_width + 1.0;
        let x0 = (s.a.0.min(s.b.0) - reach).floor().max(0.0) as usize;
        let x1 = ((s.a.0.max(s.b.0) + reach).ceil() as usize).min(width - 1);
        let y0 = (s.a.1.min(s.b.1) - reach).floor().max(0.0) as usize;
        let y1 = ((s.a.1.max(s.b.1) + reach).ceil() as usize).min(height - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = s.distance(x as f64, y as f64);
                let cover = (s.half_width + 0.5 - d).clamp(0.0, 1.0);
                if cover > 0.0 {
                    let v = log_lum.get(x, y) + s.amount * cover;
                    log_lum.set(x, y, v);
                }
            }
        }
    }

    // Guarantee the decile spread: stretch the log range about its median
    // when the random draw came out too flat.
    let mut sorted = log_lum.data().to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let (p10, p50, p90) = (sorted[n / 10], sorted[n / 2], sorted[n * 9 / 10]);
    if p90 - p10 < MIN_LOG_SPREAD {
        let k = MIN_LOG_SPREAD / (p90 - p10).max(1e-6);
        log_lum = log_lum.map(|v| p50 + (v - p50) * k);
    }

    // Centre the log range between the radiance limits.
    let centre = (RADIANCE_MIN * RADIANCE_MAX).sqrt().ln();
    let channel = |k: usize| {
        ImagePlane::from_fn(width, height, |x, y| {
            let tint = cells[(y as f64 / cell) as usize * cw + (x as f64 / cell) as usize].1[k];
            (centre + log_lum.get(x, y) + tint)
                .exp()
                .clamp(RADIANCE_MIN, RADIANCE_MAX)
        })
    };
    HdrImage::new(channel(0), channel(1), channel(2))
}
