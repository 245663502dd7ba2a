//! Image containers and sample-level conversions.
//!
//! All samples are linear-light `f64` values with a nominal range of `[0, 1]`.
//! Integer representations only appear at file boundaries.

use crate::error::{Error, Result};

/// A single-channel, row-major image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "buffer of {} samples does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Sample with coordinates clamped to the image (replicate border).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.get(cx, cy)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copy of the window `[x0, x0+w) x [y0, y0+h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::Dimension(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + w]);
        }
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }

    /// Mean over non-overlapping `factor x factor` blocks; partial edge blocks
    /// average the samples they contain.
    pub fn downsample_mean(&self, factor: usize) -> Self {
        let w = self.width.div_ceil(factor);
        let h = self.height.div_ceil(factor);
        Self::from_fn(w, h, |bx, by| {
            let x1 = ((bx + 1) * factor).min(self.width);
            let y1 = ((by + 1) * factor).min(self.height);
            let mut sum = 0.0;
            let mut n = 0usize;
            for y in by * factor..y1 {
                for x in bx * factor..x1 {
                    sum += self.get(x, y);
                    n += 1;
                }
            }
            sum / n as f64
        })
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }

    /// Bilinear sample at `(x, y)` with zero padding outside the image.
    ///
    /// Returns the interpolated value and the total weight of the taps that
    /// fell inside the image (1 fully inside, 0 fully outside).
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64) -> (f64, f64) {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let xi = x0 as isize;
        let yi = y0 as isize;
        let (w, h) = (self.width as isize, self.height as isize);
        let mut value = 0.0;
        let mut coverage = 0.0;
        let taps = [
            (xi, yi, (1.0 - fx) * (1.0 - fy)),
            (xi + 1, yi, fx * (1.0 - fy)),
            (xi, yi + 1, (1.0 - fx) * fy),
            (xi + 1, yi + 1, fx * fy),
        ];
        for (tx, ty, wt) in taps {
            if wt != 0.0 && tx >= 0 && ty >= 0 && tx < w && ty < h {
                value += wt * self.data[ty as usize * self.width + tx as usize];
                coverage += wt;
            }
        }
        (value, coverage)
    }
}

/// Nominal bit depth tag carried by an [`RgbImage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_code(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

/// Three full-resolution channel planes.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub r: ImagePlane,
    pub g: ImagePlane,
    pub b: ImagePlane,
    pub bit_depth: BitDepth,
}

impl RgbImage {
    pub fn new(r: ImagePlane, g: ImagePlane, b: ImagePlane, bit_depth: BitDepth) -> Result<Self> {
        if !r.same_dims(&g) || !r.same_dims(&b) {
            return Err(Error::Dimension(format!(
                "channel sizes differ: {:?} {:?} {:?}",
                r.dims(),
                g.dims(),
                b.dims()
            )));
        }
        Ok(Self { r, g, b, bit_depth })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3], bit_depth: BitDepth) -> Self {
        Self {
            r: ImagePlane::filled(width, height, rgb[0]),
            g: ImagePlane::filled(width, height, rgb[1]),
            b: ImagePlane::filled(width, height, rgb[2]),
            bit_depth,
        }
    }

    pub fn width(&self) -> usize {
        self.r.width()
    }

    pub fn height(&self) -> usize {
        self.r.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.r.dims()
    }

    pub fn channels(&self) -> [&ImagePlane; 3] {
        [&self.r, &self.g, &self.b]
    }

    pub fn channels_mut(&mut self) -> [&mut ImagePlane; 3] {
        [&mut self.r, &mut self.g, &mut self.b]
    }

    pub fn map_channels(&self, f: impl Fn(&ImagePlane) -> ImagePlane) -> Self {
        Self {
            r: f(&self.r),
            g: f(&self.g),
            b: f(&self.b),
            bit_depth: self.bit_depth,
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        Ok(Self {
            r: self.r.crop(x0, y0, w, h)?,
            g: self.g.crop(x0, y0, w, h)?,
            b: self.b.crop(x0, y0, w, h)?,
            bit_depth: self.bit_depth,
        })
    }

    pub fn downsample_mean(&self, factor: usize) -> Self {
        self.map_channels(|p| p.downsample_mean(factor))
    }
}

/// `round(v * max)` with round-half-away-from-zero, clamped to `[0, max]`.
#[inline]
pub fn quantize_code(v: f64, max: f64) -> f64 {
    (v * max).round().clamp(0.0, max)
}

#[inline]
pub fn to_u8(v: f64) -> u8 {
    quantize_code(v, 255.0) as u8
}

#[inline]
pub fn to_u16(v: f64) -> u16 {
    quantize_code(v, 65535.0) as u16
}

fn quantize_image(img: &RgbImage, depth: BitDepth) -> RgbImage {
    let max = depth.max_code();
    let mut out = img.map_channels(|p| p.map(|v| quantize_code(v, max) / max));
    out.bit_depth = depth;
    out
}

/// Requantize to 8-bit codes. Samples keep the `[0, 1]` scale (`code / 255`).
pub fn quantize_to_8bit(img: &RgbImage) -> RgbImage {
    quantize_image(img, BitDepth::Eight)
}

/// Requantize to 16-bit codes. Samples keep the `[0, 1]` scale (`code / 65535`).
pub fn quantize_to_16bit(img: &RgbImage) -> RgbImage {
    quantize_image(img, BitDepth::Sixteen)
}

/// Rec.601 luma weights.
pub const LUMA_601: [f64; 3] = [0.299, 0.587, 0.114];

pub fn to_grayscale(img: &RgbImage) -> ImagePlane {
    let [wr, wg, wb] = LUMA_601;
    let (w, h) = img.dims();
    let data = img
        .r
        .data()
        .iter()
        .zip(img.g.data())
        .zip(img.b.data())
        .map(|((&r, &g), &b)| wr * r + wg * g + wb * b)
        .collect();
    ImagePlane {
        width: w,
        height: h,
        data,
    }
}
