use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::NoiseParams;
use crate::cfa::{check_even, CfaColor, CfaPattern, ExposureGroup, RawFrame};
use crate::error::{Error, Result};
use crate::image::{ImagePlane, RgbImage};

/// Rotation by `theta` about the image centre followed by a `(tx, ty)` shift.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RigidTransform {
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

impl RigidTransform {
    pub const IDENTITY: Self = Self {
        theta: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn new(theta: f64, tx: f64, ty: f64) -> Result<Self> {
        if !(theta.abs() < std::f64::consts::PI) || !tx.is_finite() || !ty.is_finite() {
            return Err(Error::Validation(format!(
                "invalid rigid transform theta={theta} tx={tx} ty={ty}"
            )));
        }
        Ok(Self { theta, tx, ty })
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self { theta: 0.0, tx, ty }
    }

    pub fn is_identity(&self) -> bool {
        self.theta == 0.0 && self.tx == 0.0 && self.ty == 0.0
    }

    fn center(width: usize, height: usize) -> (f64, f64) {
        ((width as f64 - 1.0) * 0.5, (height as f64 - 1.0) * 0.5)
    }

    /// Where content at `(x, y)` ends up after the transform.
    pub fn forward(&self, x: f64, y: f64, width: usize, height: usize) -> (f64, f64) {
        let (cx, cy) = Self::center(width, height);
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (x - cx, y - cy);
        (c * dx - s * dy + cx + self.tx, s * dx + c * dy + cy + self.ty)
    }

    /// Source position sampled to produce output pixel `(x, y)`.
    pub fn inverse(&self, x: f64, y: f64, width: usize, height: usize) -> (f64, f64) {
        let (cx, cy) = Self::center(width, height);
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (x - cx - self.tx, y - cy - self.ty);
        (c * dx + s * dy + cx, -s * dx + c * dy + cy)
    }

    /// Displacement `T(p) - p`, which is the flow that maps the untransformed
    /// image onto the transformed one.
    pub fn displacement(&self, x: f64, y: f64, width: usize, height: usize) -> (f64, f64) {
        let (fx, fy) = self.forward(x, y, width, height);
        (fx - x, fy - y)
    }
}

/// Inverse-mapped bilinear resampling about the image centre; samples that
/// map outside the source are zero.
pub fn apply_rigid(plane: &ImagePlane, t: &RigidTransform) -> ImagePlane {
    if t.is_identity() {
        return plane.clone();
    }
    let (w, h) = plane.dims();
    ImagePlane::from_fn(w, h, |x, y| {
        let (sx, sy) = t.inverse(x as f64, y as f64, w, h);
        plane.sample_bilinear(sx, sy).0
    })
}

/// Linear motion blur of a given length (pixels) and direction (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlurKernel {
    pub length: f64,
    pub angle: f64,
}

impl Default for BlurKernel {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl BlurKernel {
    pub const IDENTITY: Self = Self {
        length: 1.0,
        angle: 0.0,
    };

    pub fn is_identity(&self) -> bool {
        self.length <= 1.0
    }

    /// Rasterize the segment into a square tap grid.
    ///
    /// `ceil(length)` points are spaced evenly along a segment of
    /// `length - 1` pixels centred on the origin and splatted bilinearly, so
    /// integer lengths along an axis give `length` equal taps.
    pub fn rasterize(&self) -> Kernel2d {
        if self.is_identity() {
            return Kernel2d {
                radius: 0,
                taps: vec![1.0],
            };
        }
        let n = self.length.ceil() as usize;
        let half = (self.length - 1.0) * 0.5;
        let radius = half.ceil() as usize + 1;
        let size = 2 * radius + 1;
        let mut taps = vec![0.0; size * size];
        let (s, c) = self.angle.sin_cos();
        let step = if n > 1 {
            (self.length - 1.0) / (n - 1) as f64
        } else {
            0.0
        };
        let wpt = 1.0 / n as f64;
        for i in 0..n {
            let t = -half + i as f64 * step;
            let px = c * t + radius as f64;
            let py = s * t + radius as f64;
            let (x0, y0) = (px.floor(), py.floor());
            let (fx, fy) = (px - x0, py - y0);
            let (xi, yi) = (x0 as usize, y0 as usize);
            for (dx, dy, w) in [
                (0, 0, (1.0 - fx) * (1.0 - fy)),
                (1, 0, fx * (1.0 - fy)),
                (0, 1, (1.0 - fx) * fy),
                (1, 1, fx * fy),
            ] {
                if w > 0.0 {
                    taps[(yi + dy) * size + xi + dx] += w * wpt;
                }
            }
        }
        Kernel2d { radius, taps }
    }
}

/// Square convolution kernel of side `2 * radius + 1`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2d {
    pub radius: usize,
    pub taps: Vec<f64>,
}

impl Kernel2d {
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps.len() != self.side() * self.side() {
            return Err(Error::Validation(format!(
                "kernel of radius {} needs {} taps, has {}",
                self.radius,
                self.side() * self.side(),
                self.taps.len()
            )));
        }
        let sum: f64 = self.taps.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!(
                "blur kernel taps sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

impl From<&BlurKernel> for Kernel2d {
    fn from(k: &BlurKernel) -> Self {
        k.rasterize()
    }
}

/// 2-D correlation with replicate borders.
pub fn apply_blur(plane: &ImagePlane, k: &Kernel2d) -> Result<ImagePlane> {
    k.validate()?;
    if k.radius == 0 {
        return Ok(plane.map(|v| v * k.taps[0]));
    }
    let side = k.side();
    let r = k.radius as isize;
    let nz: Vec<(isize, isize, f64)> = k
        .taps
        .iter()
        .enumerate()
        .filter(|(_, &w)| w != 0.0)
        .map(|(i, &w)| ((i % side) as isize - r, (i / side) as isize - r, w))
        .collect();
    let (w, h) = plane.dims();
    Ok(ImagePlane::from_fn(w, h, |x, y| {
        nz.iter()
            .map(|&(dx, dy, wt)| wt * plane.get_clamped(x as isize + dx, y as isize + dy))
            .sum()
    }))
}

/// Sample each pixel's CFA colour from `img`; no filtering.
pub fn mosaic(img: &RgbImage, cfa: CfaPattern) -> Result<RawFrame> {
    let (w, h) = img.dims();
    check_even(w, h)?;
    let plane = ImagePlane::from_fn(w, h, |x, y| match cfa.color_at(x, y) {
        CfaColor::Red => img.r.get(x, y),
        CfaColor::Green => img.g.get(x, y),
        CfaColor::Blue => img.b.get(x, y),
    });
    RawFrame::new(plane, cfa, 1.0, ExposureGroup::Mid, None)
}

/// One unclamped observation of clean value `x`.
pub fn sample_poisson_gaussian<R: Rng + ?Sized>(x: f64, p: &NoiseParams, rng: &mut R) -> f64 {
    let x = x.max(0.0);
    let shot = if p.shot_fullwell.is_infinite() {
        x
    } else {
        let lambda = x * p.shot_fullwell;
        if lambda > 0.0 {
            let d = Poisson::new(lambda).expect("finite positive rate");
            d.sample(rng) / p.shot_fullwell
        } else {
            0.0
        }
    };
    if p.read_sigma > 0.0 {
        let n = Normal::new(0.0, p.read_sigma).expect("valid sigma");
        shot + n.sample(rng)
    } else {
        shot
    }
}

/// Apply sensor noise to every sample and clamp to `[0, 1]`.
pub fn add_poisson_gaussian<R: Rng + ?Sized>(
    plane: &ImagePlane,
    p: &NoiseParams,
    rng: &mut R,
) -> ImagePlane {
    if p.is_noiseless() {
        return plane.map(|v| v.clamp(0.0, 1.0));
    }
    let mut out = plane.clone();
    for v in out.data_mut() {
        *v = sample_poisson_gaussian(*v, p, rng).clamp(0.0, 1.0);
    }
    out
}
