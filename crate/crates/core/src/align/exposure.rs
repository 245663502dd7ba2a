use crate::cfa::PackedRaw;
use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::synth::NoiseParams;

/// Per-site validity weights at packed resolution, one plane per CFA site.
/// 0 marks saturated, dead-black or out-of-frame samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityMask {
    pub planes: [ImagePlane; 4],
}

impl ValidityMask {
    pub fn ones(width: usize, height: usize) -> Self {
        Self::filled(width, height, 1.0)
    }

    pub fn filled(width: usize, height: usize, v: f64) -> Self {
        Self {
            planes: std::array::from_fn(|_| ImagePlane::filled(width, height, v)),
        }
    }

    /// Same weights for all four sites.
    pub fn uniform(plane: ImagePlane) -> Self {
        Self {
            planes: std::array::from_fn(|_| plane.clone()),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.planes[0].dims()
    }

    /// Per-pixel minimum over the four sites.
    pub fn min_plane(&self) -> ImagePlane {
        let (w, h) = self.dims();
        let mut out = self.planes[0].clone();
        for p in &self.planes[1..] {
            for (o, &v) in out.data_mut().iter_mut().zip(p.data()) {
                *o = o.min(v);
            }
        }
        debug_assert_eq!(out.dims(), (w, h));
        out
    }

    pub fn multiply(&self, other: &Self) -> Self {
        Self {
            planes: std::array::from_fn(|c| {
                let mut p = self.planes[c].clone();
                for (a, &b) in p.data_mut().iter_mut().zip(other.planes[c].data()) {
                    *a *= b;
                }
                p
            }),
        }
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

/// Thresholds deciding which samples carry usable exposure information.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Thresholds {
    pub sat: f64,
    pub floor: f64,
    /// Width of the linear ramp from 0 to 1 inside each threshold.
    pub ramp: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            sat: 0.98,
            floor: 0.02,
            ramp: 0.02,
        }
    }
}

/// Full-scale noise standard deviations kept between the clip point and the
/// highest sample trusted as unclipped.
pub const CLIP_NOISE_SIGMAS: f64 = 4.0;

/// Highest raw value that cannot plausibly be a clipped sample pulled down by
/// noise; 1.0 for a noiseless sensor.
pub fn clip_level(noise: Option<&NoiseParams>) -> f64 {
    1.0 - CLIP_NOISE_SIGMAS * noise.map_or(0.0, |n| n.variance(1.0).sqrt())
}

impl Thresholds {
    /// Lower the saturation threshold to the frame's [`clip_level`].
    pub fn noise_aware(self, noise: Option<&NoiseParams>) -> Self {
        Self {
            sat: self.sat.min(clip_level(noise)),
            ..self
        }
    }

    /// Same saturation handling, no dark floor.
    pub fn saturation_only(self) -> Self {
        Self {
            floor: f64::NEG_INFINITY,
            ..self
        }
    }

    #[inline]
    pub fn weight(&self, v: f64) -> f64 {
        if v >= self.sat || v <= self.floor {
            return 0.0;
        }
        if self.ramp <= 0.0 {
            return 1.0;
        }
        ((self.sat - v) / self.ramp)
            .min((v - self.floor) / self.ramp)
            .min(1.0)
    }

    pub fn mask(&self, frame: &PackedRaw) -> ValidityMask {
        ValidityMask {
            planes: std::array::from_fn(|c| frame.planes[c].map(|v| self.weight(v))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GainEstimate {
    pub gain: f64,
    pub inlier_fraction: f64,
}

/// Minimum share of samples usable in both frames for a gain estimate.
pub const MIN_INLIER_FRACTION: f64 = 0.01;

/// Gain that brings `target` to the brightness of `reference_longest`.
///
/// The median of `reference / target` over samples that are strictly inside
/// `(floor, sat)` in both frames, so clipped and dead-black samples never
/// bias the ratio.
pub fn estimate_exposure_gain(
    target: &PackedRaw,
    reference_longest: &PackedRaw,
    sat_thresh: f64,
    floor_thresh: f64,
) -> Result<GainEstimate> {
    if target.dims() != reference_longest.dims() {
        return Err(Error::Dimension(format!(
            "gain estimate needs equal sizes, got {:?} and {:?}",
            target.dims(),
            reference_longest.dims()
        )));
    }
    let inside = |v: f64| v > floor_thresh && v < sat_thresh;
    let mut ratios = Vec::new();
    let mut total = 0usize;
    for (tp, rp) in target.planes.iter().zip(&reference_longest.planes) {
        total += tp.data().len();
        ratios.extend(
            tp.data()
                .iter()
                .zip(rp.data())
                .filter(|(&t, &r)| inside(t) && inside(r))
                .map(|(&t, &r)| r / t),
        );
    }
    let inlier_fraction = ratios.len() as f64 / total.max(1) as f64;
    if inlier_fraction < MIN_INLIER_FRACTION || ratios.is_empty() {
        return Err(Error::InsufficientOverlap { inlier_fraction });
    }
    Ok(GainEstimate {
        gain: median(&mut ratios),
        inlier_fraction,
    })
}

/// Median; the mean of the two central values for even lengths.
pub(crate) fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    debug_assert!(n > 0);
    let mid = n / 2;
    let (lower, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *m;
    if n % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if below == upper {
            upper
        } else {
            below + (upper - below) * 0.5
        }
    }
}

/// Multiply by the gain (no clamping) and mark samples that were saturated or
/// dead-black before normalization.
pub fn normalize_exposure(
    frame: &PackedRaw,
    g: &GainEstimate,
    thresholds: &Thresholds,
) -> Result<(PackedRaw, ValidityMask)> {
    if !(g.gain > 0.0 && g.gain.is_finite()) {
        return Err(Error::Validation(format!("gain must be > 0, got {}", g.gain)));
    }
    Ok((frame.scale(g.gain), thresholds.mask(frame)))
}
