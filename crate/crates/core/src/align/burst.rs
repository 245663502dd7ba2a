use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exposure::{estimate_exposure_gain, normalize_exposure, GainEstimate, Thresholds, ValidityMask};
use super::flow::{estimate_flow_masked, FlowConfig, FlowField};
use super::warp::{warp_bilinear, warp_mask_min};
use crate::cfa::{pack_cfa, PackedRaw, RawFrame};
use crate::error::{Error, Result};
use crate::synth::FRAME_COUNT;

/// Estimated gains further than this factor from the metadata ratio are
/// treated as failed estimates. Noise near the dark floor and misalignment
/// both bias the pixelwise median, most at wide exposure spreads.
pub const MAX_GAIN_DEVIATION: f64 = 1.5;

/// Where the alignment-stage exposure gains come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GainSource {
    /// Median ratio over unclipped samples, falling back to metadata.
    #[default]
    Estimated,
    /// Ratio of recorded exposure gains.
    Metadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignConfig {
    pub flow: FlowConfig,
    pub thresholds: Thresholds,
    pub gain_source: GainSource,
    /// When false every flow is zero and alignment only normalizes.
    pub estimate_flow: bool,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            flow: FlowConfig::default(),
            thresholds: Thresholds::default(),
            gain_source: GainSource::Estimated,
            estimate_flow: true,
        }
    }
}

impl AlignConfig {
    /// Metadata gains and zero flow: every later stage only looks at a single
    /// pixel position across frames.
    pub fn per_pixel_only() -> Self {
        Self {
            gain_source: GainSource::Metadata,
            estimate_flow: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameGain {
    /// Multiplier that brought this frame to the longest exposure for matching.
    pub align_gain: f64,
    pub inlier_fraction: Option<f64>,
    /// True when the estimate failed or was implausible and the metadata
    /// ratio was used.
    pub fallback: bool,
    /// Multiplier applied to the output frame: reference gain / frame gain.
    pub output_scale: f64,
}

/// Frames warped onto the reference, in reference-exposure units.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedBurst {
    pub frames: Vec<PackedRaw>,
    /// Saturation validity times padding coverage.
    pub masks: Vec<ValidityMask>,
    pub flows: Vec<FlowField>,
    pub gains: Vec<FrameGain>,
    /// Recorded exposure gain of each input frame.
    pub exposure_gains: Vec<f64>,
}

impl AlignedBurst {
    pub fn reference_gain(&self) -> f64 {
        self.exposure_gains[0]
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }
}

/// Align frames 1..9 onto frame 0.
///
/// Every frame is brought to the brightness of the longest exposure for
/// matching; its flow is estimated against the equally normalized reference
/// and then applied to the frame scaled into reference units. Frame 0 passes
/// through untouched.
pub fn align_burst(frames: &[RawFrame], cfg: &AlignConfig) -> Result<AlignedBurst> {
    if frames.len() != FRAME_COUNT {
        return Err(Error::MalformedScene(format!(
            "expected {FRAME_COUNT} frames, got {}",
            frames.len()
        )));
    }
    let packed: Vec<PackedRaw> = frames.iter().map(pack_cfa).collect::<Result<_>>()?;
    let (w, h) = packed[0].dims();
    if packed.iter().any(|p| p.dims() != (w, h)) {
        return Err(Error::Dimension("burst frames differ in size".into()));
    }
    if cfg.estimate_flow {
        cfg.flow.validate_dims(w, h)?;
    }

    let exposure_gains: Vec<f64> = frames.iter().map(|f| f.exposure_gain).collect();
    let longest = exposure_gains
        .iter()
        .enumerate()
        .fold(0, |best, (i, &g)| if g > exposure_gains[best] { i } else { best });
    let g_ref = exposure_gains[0];
    // Per-frame thresholds: noisy clipped samples can fall below the
    // configured saturation level.
    let ths: Vec<Thresholds> = frames
        .iter()
        .map(|f| cfg.thresholds.noise_aware(f.noise.as_ref()))
        .collect();

    let gains: Vec<FrameGain> = (0..FRAME_COUNT)
        .map(|k| {
            let meta = exposure_gains[longest] / exposure_gains[k];
            let (align_gain, inlier_fraction, fallback) = if k == longest {
                (1.0, None, false)
            } else {
                match cfg.gain_source {
                    GainSource::Metadata => (meta, None, false),
                    GainSource::Estimated => {
                        match estimate_exposure_gain(
                            &packed[k],
                            &packed[longest],
                            ths[k].sat.min(ths[longest].sat),
                            ths[k].floor,
                        ) {
                            Ok(g) if (g.gain / meta).ln().abs() <= MAX_GAIN_DEVIATION.ln() => {
                                (g.gain, Some(g.inlier_fraction), false)
                            }
                            Ok(g) => (meta, Some(g.inlier_fraction), true),
                            Err(Error::InsufficientOverlap { inlier_fraction }) => {
                                (meta, Some(inlier_fraction), true)
                            }
                            Err(e) => return Err(e),
                        }
                    }
                }
            };
            Ok(FrameGain {
                align_gain,
                inlier_fraction,
                fallback,
                output_scale: g_ref / exposure_gains[k],
            })
        })
        .collect::<Result<_>>()?;

    let estimate = |k: usize| GainEstimate {
        gain: gains[k].align_gain,
        inlier_fraction: gains[k].inlier_fraction.unwrap_or(1.0),
    };
    let (ref_norm, ref_mask) = normalize_exposure(&packed[0], &estimate(0), &ths[0])?;

    let rest: Vec<(PackedRaw, ValidityMask, FlowField)> = (1..FRAME_COUNT)
        .into_par_iter()
        .map(|k| {
            let src = &packed[k];
            let flow = if cfg.estimate_flow {
                let (tgt_norm, tgt_mask) = normalize_exposure(src, &estimate(k), &ths[k])?;
                estimate_flow_masked(&ref_norm, &tgt_norm, &ref_mask, &tgt_mask, &cfg.flow)?
            } else {
                FlowField::zeros(w, h)
            };
            let (warped, cover) = warp_bilinear(src, &flow)?;
            let sat = warp_mask_min(&ths[k].saturation_only().mask(src), &flow);
            let scale = gains[k].output_scale;
            let cov = &cover.planes[0];
            // Undo the zero padding so partially covered samples stay unbiased;
            // the coverage itself lowers their weight.
            let frame = PackedRaw {
                planes: std::array::from_fn(|c| {
                    let mut p = warped.planes[c].clone();
                    for (v, &m) in p.data_mut().iter_mut().zip(cov.data()) {
                        *v = if m > 0.0 { *v / m * scale } else { 0.0 };
                    }
                    p
                }),
            };
            Ok((frame, sat.multiply(&cover), flow))
        })
        .collect::<Result<_>>()?;

    let mut out_frames = Vec::with_capacity(FRAME_COUNT);
    let mut masks = Vec::with_capacity(FRAME_COUNT);
    let mut flows = Vec::with_capacity(FRAME_COUNT);
    let reference_mask = ths[0].saturation_only().mask(&packed[0]);
    let mut packed = packed;
    out_frames.push(packed.swap_remove(0));
    masks.push(reference_mask);
    flows.push(FlowField::zeros(w, h));
    for (f, m, fl) in rest {
        out_frames.push(f);
        masks.push(m);
        flows.push(fl);
    }
    Ok(AlignedBurst {
        frames: out_frames,
        masks,
        flows,
        gains,
        exposure_gains,
    })
}
