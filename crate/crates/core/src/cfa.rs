//! Bayer colour-filter-array frames, packing into four half-resolution site
//! planes, and phase-preserving flips for augmentation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::synth::NoiseParams;

/// The four 2x2 Bayer phases, named by the top-left cell read row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CfaPattern {
    #[default]
    Rggb,
    Grbg,
    Gbrg,
    Bggr,
}

/// Site classes within a 2x2 cell. `G1` is the green sharing a row with red.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CfaSite {
    R,
    G1,
    G2,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CfaColor {
    Red,
    Green,
    Blue,
}

impl CfaSite {
    /// Index into [`PackedRaw::planes`].
    pub const fn index(self) -> usize {
        match self {
            CfaSite::R => 0,
            CfaSite::G1 => 1,
            CfaSite::G2 => 2,
            CfaSite::B => 3,
        }
    }

    pub const ALL: [CfaSite; 4] = [CfaSite::R, CfaSite::G1, CfaSite::G2, CfaSite::B];

    pub const fn color(self) -> CfaColor {
        match self {
            CfaSite::R => CfaColor::Red,
            CfaSite::G1 | CfaSite::G2 => CfaColor::Green,
            CfaSite::B => CfaColor::Blue,
        }
    }
}

impl CfaPattern {
    /// Cell offset `(dx, dy)` of each site, in [`CfaSite::ALL`] order.
    pub const fn offsets(self) -> [(usize, usize); 4] {
        match self {
            CfaPattern::Rggb => [(0, 0), (1, 0), (0, 1), (1, 1)],
            CfaPattern::Grbg => [(1, 0), (0, 0), (1, 1), (0, 1)],
            CfaPattern::Gbrg => [(0, 1), (0, 0), (1, 1), (1, 0)],
            CfaPattern::Bggr => [(1, 1), (1, 0), (0, 1), (0, 0)],
        }
    }

    pub fn site_at(self, x: usize, y: usize) -> CfaSite {
        let cell = (x & 1, y & 1);
        let offs = self.offsets();
        CfaSite::ALL
            .into_iter()
            .find(|s| offs[s.index()] == cell)
            .expect("every cell position maps to a site")
    }

    pub fn color_at(self, x: usize, y: usize) -> CfaColor {
        self.site_at(x, y).color()
    }

    /// Red and blue sit on the main diagonal of the cell.
    fn is_diagonal(self) -> bool {
        matches!(self, CfaPattern::Rggb | CfaPattern::Bggr)
    }
}

impl std::str::FromStr for CfaPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rggb" => Ok(CfaPattern::Rggb),
            "grbg" => Ok(CfaPattern::Grbg),
            "gbrg" => Ok(CfaPattern::Gbrg),
            "bggr" => Ok(CfaPattern::Bggr),
            other => Err(Error::Validation(format!("unknown CFA pattern {other:?}"))),
        }
    }
}

impl std::fmt::Display for CfaPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CfaPattern::Rggb => "rggb",
            CfaPattern::Grbg => "grbg",
            CfaPattern::Gbrg => "gbrg",
            CfaPattern::Bggr => "bggr",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExposureGroup {
    Low,
    Mid,
    High,
}

/// One mosaicked Bayer frame plus its capture metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub plane: ImagePlane,
    pub cfa: CfaPattern,
    pub bit_depth: u8,
    pub exposure_gain: f64,
    pub exposure_group: ExposureGroup,
    /// `None` when the noise profile is unknown.
    pub noise: Option<NoiseParams>,
}

pub(crate) fn check_even(width: usize, height: usize) -> Result<()> {
    if width % 2 != 0 || height % 2 != 0 || width == 0 || height == 0 {
        return Err(Error::Dimension(format!(
            "Bayer frames need even, nonzero dimensions; got {width}x{height}"
        )));
    }
    Ok(())
}

impl RawFrame {
    pub fn new(
        plane: ImagePlane,
        cfa: CfaPattern,
        exposure_gain: f64,
        exposure_group: ExposureGroup,
        noise: Option<NoiseParams>,
    ) -> Result<Self> {
        check_even(plane.width(), plane.height())?;
        if !(exposure_gain > 0.0 && exposure_gain.is_finite()) {
            return Err(Error::Validation(format!(
                "exposure gain must be positive, got {exposure_gain}"
            )));
        }
        Ok(Self {
            plane,
            cfa,
            bit_depth: 16,
            exposure_gain,
            exposure_group,
            noise,
        })
    }

    pub fn width(&self) -> usize {
        self.plane.width()
    }

    pub fn height(&self) -> usize {
        self.plane.height()
    }

    /// Crop keeping the CFA phase; the origin must be even.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 % 2 != 0 || y0 % 2 != 0 {
            return Err(Error::Dimension(format!(
                "crop origin ({x0},{y0}) would change the CFA phase"
            )));
        }
        check_even(w, h)?;
        Ok(Self {
            plane: self.plane.crop(x0, y0, w, h)?,
            ..self.clone()
        })
    }
}

/// Four half-resolution planes, one per CFA site, in [`CfaSite::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedRaw {
    pub planes: [ImagePlane; 4],
}

impl PackedRaw {
    pub fn new(planes: [ImagePlane; 4]) -> Result<Self> {
        let d = planes[0].dims();
        if planes.iter().any(|p| p.dims() != d) {
            return Err(Error::Dimension(format!(
                "packed planes differ in size: {:?}",
                planes.iter().map(|p| p.dims()).collect::<Vec<_>>()
            )));
        }
        Ok(Self { planes })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            planes: std::array::from_fn(|_| ImagePlane::filled(width, height, value)),
        }
    }

    pub fn width(&self) -> usize {
        self.planes[0].width()
    }

    pub fn height(&self) -> usize {
        self.planes[0].height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.planes[0].dims()
    }

    pub fn plane(&self, site: CfaSite) -> &ImagePlane {
        &self.planes[site.index()]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            planes: std::array::from_fn(|c| self.planes[c].map(&f)),
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| v * k)
    }

    /// Mean of the four site planes, used as the luminance proxy for matching.
    pub fn luminance(&self) -> ImagePlane {
        let (w, h) = self.dims();
        let mut out = ImagePlane::new(w, h);
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            let s: f64 = self.planes.iter().map(|p| p.data()[i]).sum();
            *o = s * 0.25;
        }
        out
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        let mut planes = Vec::with_capacity(4);
        for p in &self.planes {
            planes.push(p.crop(x0, y0, w, h)?);
        }
        Ok(Self {
            planes: planes.try_into().expect("four planes"),
        })
    }
}

pub fn pack_cfa(frame: &RawFrame) -> Result<PackedRaw> {
    let (w, h) = frame.plane.dims();
    check_even(w, h)?;
    let offs = frame.cfa.offsets();
    let planes = std::array::from_fn(|c| {
        let (dx, dy) = offs[c];
        ImagePlane::from_fn(w / 2, h / 2, |x, y| frame.plane.get(2 * x + dx, 2 * y + dy))
    });
    Ok(PackedRaw { planes })
}

/// Inverse of [`pack_cfa`]; metadata other than the CFA phase comes from `meta`.
pub fn unpack_cfa_with(packed: &PackedRaw, meta: &RawFrame) -> Result<RawFrame> {
    let mut out = unpack_cfa(packed, meta.cfa)?;
    out.exposure_gain = meta.exposure_gain;
    out.exposure_group = meta.exposure_group;
    out.noise = meta.noise;
    out.bit_depth = meta.bit_depth;
    Ok(out)
}

/// Inverse of [`pack_cfa`]. The returned frame carries neutral metadata
/// (gain 1, mid group, unknown noise).
pub fn unpack_cfa(packed: &PackedRaw, cfa: CfaPattern) -> Result<RawFrame> {
    let d = packed.planes[0].dims();
    if packed.planes.iter().any(|p| p.dims() != d) {
        return Err(Error::Dimension("packed planes differ in size".into()));
    }
    let (pw, ph) = d;
    let mut plane = ImagePlane::new(pw * 2, ph * 2);
    for (c, &(dx, dy)) in cfa.offsets().iter().enumerate() {
        let src = &packed.planes[c];
        for y in 0..ph {
            for x in 0..pw {
                plane.set(2 * x + dx, 2 * y + dy, src.get(x, y));
            }
        }
    }
    RawFrame::new(plane, cfa, 1.0, ExposureGroup::Mid, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipAxis {
    Horizontal,
    Vertical,
    Transpose,
}

/// Mirror index that keeps parity: `n-2-i` for `i <= n-2`, the last index
/// stays put. An involution on `0..n` for even `n`.
#[inline]
fn parity_mirror(i: usize, n: usize) -> usize {
    if i + 1 == n {
        i
    } else {
        n - 2 - i
    }
}

/// Flip or transpose a mosaic without changing which colour sits where.
///
/// Horizontal and vertical flips mirror all but the last column (row) so that
/// each sample lands on a site of the same parity; the last column stays in
/// place. This makes both flips exact involutions with unchanged dimensions.
/// Transpose is a plain transpose for phases with red/blue on the diagonal
/// (RGGB, BGGR) and a reflection about the anti-diagonal for GRBG/GBRG, which
/// is the reflection that keeps those phases intact.
pub fn bayer_flip(frame: &RawFrame, axis: FlipAxis) -> Result<RawFrame> {
    let (w, h) = frame.plane.dims();
    check_even(w, h)?;
    let src = &frame.plane;
    let plane = match axis {
        FlipAxis::Horizontal => ImagePlane::from_fn(w, h, |x, y| src.get(parity_mirror(x, w), y)),
        FlipAxis::Vertical => ImagePlane::from_fn(w, h, |x, y| src.get(x, parity_mirror(y, h))),
        FlipAxis::Transpose if frame.cfa.is_diagonal() => {
            ImagePlane::from_fn(h, w, |x, y| src.get(y, x))
        }
        FlipAxis::Transpose => ImagePlane::from_fn(h, w, |x, y| src.get(w - 1 - y, h - 1 - x)),
    };
    Ok(RawFrame {
        plane,
        ..frame.clone()
    })
}
