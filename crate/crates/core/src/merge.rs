//! Inverse-variance fusion of aligned, exposure-normalized frames.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{clip_level, median, AlignedBurst, ValidityMask};
use crate::cfa::{ExposureGroup, PackedRaw};
use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::synth::{BurstScene, NoiseParams, FRAME_COUNT};

/// Variance of 16-bit quantization in normalized units.
const QUANT_VARIANCE: f64 = 1.0 / (12.0 * 65535.0 * 65535.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeConfig {
    /// Total weight below which the reference value is used.
    pub eps: f64,
    /// Use the frames' noise profile for weights when one is recorded.
    pub use_noise_model: bool,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            eps: 1e-8,
            use_noise_model: true,
        }
    }
}

/// Per-frame, per-site weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeWeights {
    pub weights: Vec<[ImagePlane; 4]>,
    /// Weight each frame would get with a full mask; normalizes confidence.
    pub full_weights: Vec<[ImagePlane; 4]>,
    /// True when no noise model was available and weights are masks only.
    pub uniform: bool,
}

/// Fused radiance in reference-exposure units (may exceed 1) and the share
/// of attainable weight that actually contributed.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedRadiance {
    pub radiance: PackedRaw,
    pub confidence: ValidityMask,
}

/// Variance of a frame sample in reference units.
///
/// `signal` is the clean value in reference units. The frame observed
/// `signal * g_k / g_ref` (clipped to the sensor range); its Poisson-Gaussian
/// variance plus quantization is scaled back by `(g_ref / g_k)^2`.
pub fn normalized_variance(signal: f64, frame_gain: f64, reference_gain: f64, noise: &NoiseParams) -> f64 {
    let observed = (signal * frame_gain / reference_gain).clamp(0.0, 1.0);
    let scale = reference_gain / frame_gain;
    (noise.variance(observed) + QUANT_VARIANCE) * scale * scale
}

/// Inverse-variance weights `mask / sigma^2`, with the signal taken as the
/// median of the valid frames at each sample. Frames whose predicted
/// observation of that signal reaches the clip level get zero weight.
pub fn merge_weights(
    aligned: &AlignedBurst,
    noise: Option<&NoiseParams>,
    cfg: &MergeConfig,
) -> Result<MergeWeights> {
    let n = aligned.frames.len();
    if aligned.masks.len() != n || aligned.exposure_gains.len() != n || n == 0 {
        return Err(Error::Validation("aligned burst is inconsistent".into()));
    }
    let (w, h) = aligned.dims();
    let g_ref = aligned.reference_gain();
    let model = if cfg.use_noise_model { noise } else { None };
    let clip = clip_level(model);

    let per_site: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = (0..4)
        .into_par_iter()
        .map(|c| {
            let mut wts = vec![vec![0.0; w * h]; n];
            let mut full = vec![vec![0.0; w * h]; n];
            let mut valid = Vec::with_capacity(n);
            for i in 0..w * h {
                let Some(noise) = model else {
                    for k in 0..n {
                        wts[k][i] = aligned.masks[k].planes[c].data()[i];
                        full[k][i] = 1.0;
                    }
                    continue;
                };
                valid.clear();
                for k in 0..n {
                    if aligned.masks[k].planes[c].data()[i] > 0.0 {
                        valid.push(aligned.frames[k].planes[c].data()[i]);
                    }
                }
                let signal = if valid.is_empty() {
                    aligned.frames[0].planes[c].data()[i]
                } else {
                    median(&mut valid)
                }
                .max(0.0);
                for k in 0..n {
                    let g = aligned.exposure_gains[k];
                    let var = normalized_variance(signal, g, g_ref, noise);
                    full[k][i] = 1.0 / var;
                    // A frame that should have clipped at this signal is not
                    // trusted even if noise pulled it below the mask threshold.
                    if signal * g / g_ref < clip {
                        wts[k][i] = aligned.masks[k].planes[c].data()[i] / var;
                    }
                }
            }
            (wts, full)
        })
        .collect();

    let mut weights: Vec<Vec<ImagePlane>> = vec![Vec::with_capacity(4); n];
    let mut full_weights: Vec<Vec<ImagePlane>> = vec![Vec::with_capacity(4); n];
    for (wts, full) in per_site {
        for (k, (a, b)) in wts.into_iter().zip(full).enumerate() {
            weights[k].push(ImagePlane::from_vec(w, h, a)?);
            full_weights[k].push(ImagePlane::from_vec(w, h, b)?);
        }
    }
    let to_arrays = |v: Vec<Vec<ImagePlane>>| -> Vec<[ImagePlane; 4]> {
        v.into_iter()
            .map(|planes| planes.try_into().expect("four sites"))
            .collect()
    };
    Ok(MergeWeights {
        weights: to_arrays(weights),
        full_weights: to_arrays(full_weights),
        uniform: model.is_none(),
    })
}

/// Weighted mean of the frames; where total weight is below `eps` the
/// reference value is kept with zero confidence.
///
/// The mean is accumulated incrementally, so identical inputs reproduce
/// their value exactly and the result never leaves the range of the
/// contributing samples.
pub fn merge(
    frames: &[PackedRaw],
    weights: &MergeWeights,
    reference: &PackedRaw,
    cfg: &MergeConfig,
) -> Result<MergedRadiance> {
    if frames.len() != weights.weights.len() || frames.is_empty() {
        return Err(Error::Validation(format!(
            "{} frames but {} weight sets",
            frames.len(),
            weights.weights.len()
        )));
    }
    let (w, h) = reference.dims();
    if frames.iter().any(|f| f.dims() != (w, h)) {
        return Err(Error::Dimension("merge inputs differ in size".into()));
    }
    let sites: Vec<(ImagePlane, ImagePlane)> = (0..4)
        .into_par_iter()
        .map(|c| {
            let mut out = ImagePlane::new(w, h);
            let mut conf = ImagePlane::new(w, h);
            for i in 0..w * h {
                let mut mean = 0.0;
                let mut total = 0.0;
                let mut attainable = 0.0;
                for (k, f) in frames.iter().enumerate() {
                    let wk = weights.weights[k][c].data()[i];
                    attainable += weights.full_weights[k][c].data()[i];
                    if wk > 0.0 {
                        total += wk;
                        mean += (f.planes[c].data()[i] - mean) * (wk / total);
                    }
                }
                if total < cfg.eps {
                    out.data_mut()[i] = reference.planes[c].data()[i];
                    conf.data_mut()[i] = 0.0;
                } else {
                    out.data_mut()[i] = mean;
                    conf.data_mut()[i] = (total / attainable).clamp(0.0, 1.0);
                }
            }
            (out, conf)
        })
        .collect();
    let mut radiance = Vec::with_capacity(4);
    let mut confidence = Vec::with_capacity(4);
    for (o, c) in sites {
        radiance.push(o);
        confidence.push(c);
    }
    Ok(MergedRadiance {
        radiance: PackedRaw {
            planes: radiance.try_into().expect("four sites"),
        },
        confidence: ValidityMask {
            planes: confidence.try_into().expect("four sites"),
        },
    })
}

/// Frame indices of the three exposure trios, in input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExposureTrios {
    pub low: Vec<usize>,
    pub mid: Vec<usize>,
    pub high: Vec<usize>,
}

pub fn group_exposures(scene: &BurstScene) -> Result<ExposureTrios> {
    if scene.frames.len() != FRAME_COUNT {
        return Err(Error::MalformedScene(format!(
            "expected {FRAME_COUNT} frames, got {}",
            scene.frames.len()
        )));
    }
    let pick = |g: ExposureGroup| -> Vec<usize> {
        scene
            .frames
            .iter()
            .enumerate()
            .filter(|(_, f)| f.exposure_group == g)
            .map(|(i, _)| i)
            .collect()
    };
    let trios = ExposureTrios {
        low: pick(ExposureGroup::Low),
        mid: pick(ExposureGroup::Mid),
        high: pick(ExposureGroup::High),
    };
    for (name, g) in [("low", &trios.low), ("mid", &trios.mid), ("high", &trios.high)] {
        if g.len() != 3 {
            return Err(Error::MalformedScene(format!(
                "{name} exposure group has {} frames, expected 3",
                g.len()
            )));
        }
    }
    Ok(trios)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{FlowField, FrameGain};
    use crate::synth::rng_stream;
    use rand_distr::{Distribution, Normal};

    fn burst(frames: Vec<PackedRaw>, masks: Vec<ValidityMask>, gains: Vec<f64>) -> AlignedBurst {
        let (w, h) = frames[0].dims();
        let n = frames.len();
        AlignedBurst {
            flows: vec![FlowField::zeros(w, h); n],
            gains: gains
                .iter()
                .map(|g| FrameGain {
                    align_gain: 1.0,
                    inlier_fraction: None,
                    fallback: false,
                    output_scale: gains[0] / g,
                })
                .collect(),
            frames,
            masks,
            exposure_gains: gains,
        }
    }

    #[test]
    fn equal_gains_flat_signal_equal_weights() {
        let frames = vec![PackedRaw::filled(4, 4, 0.3); 9];
        let b = burst(frames, vec![ValidityMask::ones(4, 4); 9], vec![4.0; 9]);
        let w = merge_weights(&b, Some(&NoiseParams::default()), &MergeConfig::default()).unwrap();
        for k in 1..9 {
            assert_eq!(w.weights[k], w.weights[0]);
        }
    }

    #[test]
    fn weight_ratio_follows_variance_model() {
        // Two frames with gains 1 and 4 (reference is the gain-1 frame), no read noise.
        let noise = NoiseParams::new(1000.0, 0.0).unwrap();
        let frames = vec![PackedRaw::filled(2, 2, 0.1); 2];
        let b = burst(frames, vec![ValidityMask::ones(2, 2); 2], vec![1.0, 4.0]);
        let w = merge_weights(&b, Some(&noise), &MergeConfig::default()).unwrap();
        let ratio = w.weights[1][0].get(0, 0) / w.weights[0][0].get(0, 0);
        // Closed form: sigma_1^2 = x/W + q, sigma_4^2 = (4x/W + q)/16.
        let q = QUANT_VARIANCE;
        let s1 = 0.1 / 1000.0 + q;
        let s4 = (0.4 / 1000.0 + q) / 16.0;
        assert!((ratio - s1 / s4).abs() < 1e-9 * ratio);
        assert!((ratio - 4.0).abs() < 1e-3);
    }

    #[test]
    fn saturated_high_frames_lose_all_weight() {
        let frames = vec![PackedRaw::filled(2, 2, 2.0); 9];
        let gains = vec![4.0, 1.0, 1.0, 1.0, 4.0, 4.0, 16.0, 16.0, 16.0];
        let mut masks = vec![ValidityMask::ones(2, 2); 9];
        for k in [0, 4, 5, 6, 7, 8] {
            masks[k] = ValidityMask::filled(2, 2, 0.0);
        }
        let b = burst(frames, masks, gains);
        let w = merge_weights(&b, Some(&NoiseParams::default()), &MergeConfig::default()).unwrap();
        for k in [0, 4, 5, 6, 7, 8] {
            assert!(w.weights[k].iter().all(|p| p.data().iter().all(|&v| v == 0.0)));
        }
        for k in [1, 2, 3] {
            assert!(w.weights[k].iter().all(|p| p.data().iter().all(|&v| v > 0.0)));
        }
    }

    #[test]
    fn identical_frames_merge_to_themselves() {
        let mut rng = rng_stream(9, 0);
        let f = PackedRaw {
            planes: std::array::from_fn(|_| {
                ImagePlane::from_fn(8, 8, |_, _| rand::Rng::random_range(&mut rng, 0.0..3.0))
            }),
        };
        let b = burst(vec![f.clone(); 9], vec![ValidityMask::ones(8, 8); 9], vec![4.0; 9]);
        let w = merge_weights(&b, Some(&NoiseParams::default()), &MergeConfig::default()).unwrap();
        let m = merge(&b.frames, &w, &f, &MergeConfig::default()).unwrap();
        assert_eq!(m.radiance, f);
    }

    #[test]
    fn zero_weight_falls_back_to_reference() {
        let frames = vec![PackedRaw::filled(2, 2, 0.5); 9];
        let reference = PackedRaw::filled(2, 2, 0.9);
        let b = burst(frames, vec![ValidityMask::filled(2, 2, 0.0); 9], vec![4.0; 9]);
        let w = merge_weights(&b, Some(&NoiseParams::default()), &MergeConfig::default()).unwrap();
        let m = merge(&b.frames, &w, &reference, &MergeConfig::default()).unwrap();
        assert_eq!(m.radiance, reference);
        assert!(m.confidence.planes.iter().all(|p| p.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn unknown_noise_gives_mask_weights() {
        let frames = vec![PackedRaw::filled(2, 2, 0.5); 9];
        let b = burst(frames, vec![ValidityMask::filled(2, 2, 0.5); 9], vec![4.0; 9]);
        let w = merge_weights(&b, None, &MergeConfig::default()).unwrap();
        assert!(w.uniform);
        assert!(w.weights.iter().all(|s| s.iter().all(|p| p.data().iter().all(|&v| v == 0.5))));
    }

    #[test]
    fn averaging_nine_iid_frames_divides_variance() {
        let (w, h) = (400, 250); // 10^5 samples per site
        let sigma = 0.05;
        let normal = Normal::new(0.0, sigma).unwrap();
        let clean = 0.5;
        let frames: Vec<PackedRaw> = (0..9)
            .map(|k| {
                let mut rng = rng_stream(100, k);
                PackedRaw {
                    planes: std::array::from_fn(|_| {
                        ImagePlane::from_fn(w, h, |_, _| clean + normal.sample(&mut rng))
                    }),
                }
            })
            .collect();
        let b = burst(frames, vec![ValidityMask::ones(w, h); 9], vec![4.0; 9]);
        let wts = merge_weights(&b, None, &MergeConfig::default()).unwrap();
        let m = merge(&b.frames, &wts, &b.frames[0], &MergeConfig::default()).unwrap();
        let d = m.radiance.planes[0].data();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        let expect = sigma * sigma / 9.0;
        assert!((var / expect - 1.0).abs() < 0.1, "{var} vs {expect}");
    }

    #[test]
    fn merged_values_stay_within_contributing_range() {
        let mut rng = rng_stream(11, 0);
        let frames: Vec<PackedRaw> = (0..9)
            .map(|_| PackedRaw {
                planes: std::array::from_fn(|_| {
                    ImagePlane::from_fn(6, 6, |_, _| rand::Rng::random_range(&mut rng, 0.0..2.0))
                }),
            })
            .collect();
        let masks: Vec<ValidityMask> = (0..9)
            .map(|_| ValidityMask {
                planes: std::array::from_fn(|_| {
                    ImagePlane::from_fn(6, 6, |_, _| {
                        let v: f64 = rand::Rng::random_range(&mut rng, -0.5..1.0);
                        v.max(0.0)
                    })
                }),
            })
            .collect();
        let b = burst(frames, masks, vec![4.0, 1.0, 1.0, 1.0, 4.0, 4.0, 16.0, 16.0, 16.0]);
        let wts = merge_weights(&b, Some(&NoiseParams::default()), &MergeConfig::default()).unwrap();
        let m = merge(&b.frames, &wts, &b.frames[0], &MergeConfig::default()).unwrap();
        for c in 0..4 {
            for i in 0..36 {
                let contributing: Vec<f64> = (0..9)
                    .filter(|&k| wts.weights[k][c].data()[i] > 0.0)
                    .map(|k| b.frames[k].planes[c].data()[i])
                    .collect();
                let v = m.radiance.planes[c].data()[i];
                if contributing.is_empty() {
                    assert_eq!(v, b.frames[0].planes[c].data()[i]);
                } else {
                    let lo = contributing.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = contributing.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
                }
            }
        }
    }
}
