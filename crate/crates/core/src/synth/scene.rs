use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::degrade::{add_poisson_gaussian, apply_blur, apply_rigid, mosaic, BlurKernel, RigidTransform};
use super::procedural::HdrImage;
use super::{rng_stream, streams, NoiseParams};
use crate::cfa::{CfaPattern, ExposureGroup, RawFrame};
use crate::error::{Error, Result};
use crate::image::{quantize_code, quantize_to_16bit, ImagePlane, RgbImage};
use crate::isp::{demosaic_bilinear, tone_map};

pub const FRAME_COUNT: usize = 9;

/// Frame 0 is the mid-exposure reference, then the low trio, the remaining
/// mids, and the high trio.
pub const DEFAULT_FRAME_ORDER: [ExposureGroup; FRAME_COUNT] = [
    ExposureGroup::Mid,
    ExposureGroup::Low,
    ExposureGroup::Low,
    ExposureGroup::Low,
    ExposureGroup::Mid,
    ExposureGroup::Mid,
    ExposureGroup::High,
    ExposureGroup::High,
    ExposureGroup::High,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub group: ExposureGroup,
    pub transform: RigidTransform,
    pub blur: BlurKernel,
}

/// Everything needed to regenerate a burst from an HDR source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    /// Exposure multipliers for the low, mid and high groups.
    pub gains: [f64; 3],
    pub frames: Vec<FrameSpec>,
    pub noise: NoiseParams,
    pub cfa: CfaPattern,
}

/// Knobs for [`SceneSpec::randomized`]. Distances are full-resolution pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub width: usize,
    pub height: usize,
    pub gains: [f64; 3],
    pub max_shift: f64,
    pub max_rot_deg: f64,
    pub max_blur_len: f64,
    pub noise: NoiseParams,
    pub cfa: CfaPattern,
    pub order: [ExposureGroup; FRAME_COUNT],
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            width: 1536,
            height: 768,
            gains: [1.0, 4.0, 16.0],
            max_shift: 8.0,
            max_rot_deg: 1.0,
            max_blur_len: 7.0,
            noise: NoiseParams::default(),
            cfa: CfaPattern::Rggb,
            order: DEFAULT_FRAME_ORDER,
        }
    }
}

impl SynthOptions {
    pub fn with_size(mut self, width: usize, height: usize) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    /// No noise, no misalignment, no blur.
    pub fn clean(self) -> Self {
        Self {
            max_shift: 0.0,
            max_rot_deg: 0.0,
            max_blur_len: 1.0,
            noise: NoiseParams::noiseless(),
            ..self
        }
    }
}

pub(crate) fn group_index(g: ExposureGroup) -> usize {
    match g {
        ExposureGroup::Low => 0,
        ExposureGroup::Mid => 1,
        ExposureGroup::High => 2,
    }
}

impl SceneSpec {
    /// Draw per-frame misalignment and blur. Frame 0 is always left identity.
    pub fn randomized(seed: u64, opts: &SynthOptions) -> Self {
        let mut rng = rng_stream(seed, streams::SPEC);
        let sym = |m: f64, rng: &mut rand_chacha::ChaCha8Rng| {
            if m > 0.0 {
                rng.random_range(-m..=m)
            } else {
                0.0
            }
        };
        let max_rot = opts.max_rot_deg.to_radians();
        let frames = opts
            .order
            .iter()
            .enumerate()
            .map(|(k, &group)| {
                if k == 0 {
                    return FrameSpec {
                        group,
                        transform: RigidTransform::IDENTITY,
                        blur: BlurKernel::IDENTITY,
                    };
                }
                let theta = sym(max_rot, &mut rng);
                let tx = sym(opts.max_shift, &mut rng);
                let ty = sym(opts.max_shift, &mut rng);
                let blur = if opts.max_blur_len > 1.0 {
                    BlurKernel {
                        length: rng.random_range(1.0..=opts.max_blur_len),
                        angle: rng.random_range(0.0..std::f64::consts::PI),
                    }
                } else {
                    BlurKernel::IDENTITY
                };
                FrameSpec {
                    group,
                    transform: RigidTransform { theta, tx, ty },
                    blur,
                }
            })
            .collect();
        Self {
            seed,
            gains: opts.gains,
            frames,
            noise: opts.noise,
            cfa: opts.cfa,
        }
    }

    pub fn gain_of(&self, group: ExposureGroup) -> f64 {
        self.gains[group_index(group)]
    }

    pub fn reference_gain(&self) -> f64 {
        self.gain_of(self.frames[0].group)
    }

    /// Tone-map headroom: brightest exposure relative to the reference.
    pub fn headroom(&self) -> f64 {
        self.gains[2] / self.reference_gain()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.len() != FRAME_COUNT {
            return Err(Error::MalformedScene(format!(
                "expected {FRAME_COUNT} frames, got {}",
                self.frames.len()
            )));
        }
        for g in [ExposureGroup::Low, ExposureGroup::Mid, ExposureGroup::High] {
            let n = self.frames.iter().filter(|f| f.group == g).count();
            if n != 3 {
                return Err(Error::MalformedScene(format!(
                    "exposure group {g:?} has {n} frames, expected 3"
                )));
            }
        }
        let [lo, mid, hi] = self.gains;
        if !(lo > 0.0 && lo < mid && mid < hi && hi.is_finite()) {
            return Err(Error::MalformedScene(format!(
                "gains must satisfy 0 < low < mid < high, got {:?}",
                self.gains
            )));
        }
        let f0 = &self.frames[0];
        if !f0.transform.is_identity() || !f0.blur.is_identity() {
            return Err(Error::MalformedScene(
                "frame 0 is the reference and must have identity transform and blur".into(),
            ));
        }
        for (k, f) in self.frames.iter().enumerate() {
            RigidTransform::new(f.transform.theta, f.transform.tx, f.transform.ty)
                .map_err(|e| Error::MalformedScene(format!("frame {k}: {e}")))?;
        }
        Ok(())
    }
}

/// Nine frames, the rendered ground truth, and (unless hidden) the
/// degradation parameters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct BurstScene {
    pub id: String,
    pub frames: Vec<RawFrame>,
    pub gt: RgbImage,
    pub spec: Option<SceneSpec>,
    pub gains: [f64; 3],
    pub headroom: f64,
}

impl BurstScene {
    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn cfa(&self) -> CfaPattern {
        self.frames[0].cfa
    }

    pub fn reference_gain(&self) -> f64 {
        self.frames[0].exposure_gain
    }
}

/// Capture one frame: rigid warp, blur, exposure gain with saturation,
/// mosaic, sensor noise, 16-bit quantization.
pub fn synth_frame<R: Rng + ?Sized>(
    hdr: &HdrImage,
    frame: &FrameSpec,
    gain: f64,
    noise: &NoiseParams,
    cfa: CfaPattern,
    rng: &mut R,
) -> Result<RawFrame> {
    if !(gain > 0.0) {
        return Err(Error::Validation(format!("gain must be > 0, got {gain}")));
    }
    let kernel = frame.blur.rasterize();
    let expose = |p: &ImagePlane| -> Result<ImagePlane> {
        let moved = apply_rigid(p, &frame.transform);
        let blurred = apply_blur(&moved, &kernel)?;
        Ok(blurred.map(|v| (v * gain).clamp(0.0, 1.0)))
    };
    let exposed = RgbImage::new(
        expose(&hdr.rgb.r)?,
        expose(&hdr.rgb.g)?,
        expose(&hdr.rgb.b)?,
        hdr.rgb.bit_depth,
    )?;
    let clean = mosaic(&exposed, cfa)?;
    let noisy = add_poisson_gaussian(&clean.plane, noise, rng);
    let stored = noisy.map(|v| quantize_code(v, 65535.0) / 65535.0);
    RawFrame::new(stored, cfa, gain, frame.group, Some(*noise))
}

/// Ground truth: the unmoved radiance at reference exposure, clipped to the
/// headroom, passed through the same mosaic, bilinear demosaic and tone map
/// that restoration ends with.
pub fn render_gt(
    hdr: &HdrImage,
    reference_gain: f64,
    headroom: f64,
    cfa: CfaPattern,
) -> Result<RgbImage> {
    let lin = hdr
        .rgb
        .map_channels(|p| p.map(|v| (v * reference_gain).clamp(0.0, headroom)));
    let raw = mosaic(&lin, cfa)?;
    let rgb = demosaic_bilinear(&raw)?;
    Ok(quantize_to_16bit(&tone_map(&rgb, headroom)))
}

pub fn synth_scene(hdr: &HdrImage, spec: &SceneSpec) -> Result<BurstScene> {
    spec.validate()?;
    let frames = spec
        .frames
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            let mut rng = rng_stream(spec.seed, streams::FRAME_BASE + k as u64);
            synth_frame(hdr, f, spec.gain_of(f.group), &spec.noise, spec.cfa, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let headroom = spec.headroom();
    let gt = render_gt(hdr, spec.reference_gain(), headroom, spec.cfa)?;
    Ok(BurstScene {
        id: format!("scene_{:06}", spec.seed),
        frames,
        gt,
        spec: Some(spec.clone()),
        gains: spec.gains,
        headroom,
    })
}
