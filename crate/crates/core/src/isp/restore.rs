use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{demosaic_bilinear, tone_map};
use crate::align::{align_burst, AlignConfig, AlignedBurst, ValidityMask};
use crate::cfa::{pack_cfa, unpack_cfa, CfaPattern, PackedRaw, RawFrame};
use crate::error::{Error, Result, Stage};
use crate::image::{quantize_to_16bit, ImagePlane, RgbImage};
use crate::merge::{merge, merge_weights, MergeConfig, MergedRadiance};
use crate::synth::{BurstScene, NoiseParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RestoreConfig {
    pub align: AlignConfig,
    pub merge: MergeConfig,
}

impl RestoreConfig {
    /// Metadata gains and zero flow; see [`AlignConfig::per_pixel_only`].
    pub fn per_pixel_only() -> Self {
        Self {
            align: AlignConfig::per_pixel_only(),
            ..Self::default()
        }
    }
}

/// Restored image together with the intermediate products.
#[derive(Debug, Clone)]
pub struct RestoreOutput {
    pub image: RgbImage,
    pub merged: MergedRadiance,
    pub aligned: AlignedBurst,
    /// True when merge weights ignored the noise model.
    pub uniform_weights: bool,
}

/// Noise profile shared by all frames, if every frame records the same one.
fn burst_noise(frames: &[RawFrame]) -> Option<NoiseParams> {
    let first = frames.first()?.noise?;
    frames.iter().all(|f| f.noise == Some(first)).then_some(first)
}

fn align_and_merge(frames: &[RawFrame], cfg: &RestoreConfig) -> Result<(AlignedBurst, MergedRadiance, bool)> {
    let aligned = align_burst(frames, &cfg.align).map_err(|e| e.at(Stage::Align))?;
    let noise = burst_noise(frames);
    let weights = merge_weights(&aligned, noise.as_ref(), &cfg.merge).map_err(|e| e.at(Stage::Merge))?;
    let merged = merge(&aligned.frames, &weights, &aligned.frames[0], &cfg.merge)
        .map_err(|e| e.at(Stage::Merge))?;
    Ok((aligned, merged, weights.uniform))
}

/// Unpack, demosaic, tone map and quantize merged radiance.
pub fn restore_merged(radiance: &PackedRaw, cfa: CfaPattern, headroom: f64) -> Result<RgbImage> {
    if !(headroom > 0.0 && headroom.is_finite()) {
        return Err(Error::Validation(format!("headroom must be > 0, got {headroom}")).at(Stage::ToneMap));
    }
    let raw = unpack_cfa(radiance, cfa).map_err(|e| e.at(Stage::Pack))?;
    let linear = demosaic_bilinear(&raw).map_err(|e| e.at(Stage::Demosaic))?;
    Ok(quantize_to_16bit(&tone_map(&linear, headroom)))
}

pub fn restore_scene_detailed(scene: &BurstScene, cfg: &RestoreConfig) -> Result<RestoreOutput> {
    let (aligned, merged, uniform_weights) = align_and_merge(&scene.frames, cfg)?;
    let image = restore_merged(&merged.radiance, scene.cfa(), scene.headroom)?;
    Ok(RestoreOutput {
        image,
        merged,
        aligned,
        uniform_weights,
    })
}

/// Full pipeline: pack, align, merge, unpack, demosaic, tone map, 16-bit.
pub fn restore_scene(scene: &BurstScene, cfg: &RestoreConfig) -> Result<RgbImage> {
    Ok(restore_scene_detailed(scene, cfg)?.image)
}

/// Single-frame baseline: the reference frame demosaicked and tone mapped.
pub fn reference_only_isp(scene: &BurstScene) -> Result<RgbImage> {
    let f = scene
        .frames
        .first()
        .ok_or_else(|| Error::MalformedScene("scene has no frames".into()))?;
    let linear = demosaic_bilinear(f).map_err(|e| e.at(Stage::Demosaic))?;
    Ok(quantize_to_16bit(&tone_map(&linear, scene.headroom)))
}

/// Tile origins along one axis: `0, stride, ...` with the last tile flush
/// against the far edge. Sizes and origins are in full-resolution pixels.
fn tile_origins(total: usize, tile: usize, overlap: usize) -> Vec<usize> {
    if tile >= total {
        return vec![0];
    }
    let stride = tile - overlap;
    let mut out = vec![0];
    while out.last().unwrap() + tile < total {
        let next = out.last().unwrap() + stride;
        out.push(next.min(total - tile));
    }
    out
}

/// Blend weights along one axis of a tile. On edges interior to the frame the
/// outermost `margin` samples get zero weight (their warps reach outside the
/// tile) and a raised-cosine ramp of `ramp` samples follows; edges that touch
/// the frame border keep weight 1.
fn axis_window(len: usize, margin: usize, ramp: usize, at_start: bool, at_end: bool) -> Vec<f64> {
    let edge = |u: usize| {
        if u < margin {
            0.0
        } else if u < margin + ramp {
            let t = std::f64::consts::FRAC_PI_2 * ((u - margin) as f64 + 0.5) / ramp as f64;
            t.sin().powi(2)
        } else {
            1.0
        }
    };
    (0..len)
        .map(|u| {
            let mut w = 1.0f64;
            if !at_start {
                w = w.min(edge(u));
            }
            if !at_end {
                w = w.min(edge(len - 1 - u));
            }
            w
        })
        .collect()
}

/// Accumulates tile radiance as a running weighted mean.
struct Blender {
    mean: PackedRaw,
    conf: ValidityMask,
    total: ImagePlane,
}

impl Blender {
    fn add(&mut self, m: &MergedRadiance, px: usize, py: usize, wx: &[f64], wy: &[f64]) {
        let (tw, th) = m.radiance.dims();
        let width = self.total.width();
        for y in 0..th {
            for x in 0..tw {
                let w = wx[x] * wy[y];
                if w == 0.0 {
                    continue;
                }
                let i = (py + y) * width + px + x;
                let t = self.total.data()[i] + w;
                self.total.data_mut()[i] = t;
                let r = w / t;
                for c in 0..4 {
                    let mv = &mut self.mean.planes[c].data_mut()[i];
                    *mv += (m.radiance.planes[c].get(x, y) - *mv) * r;
                    let cv = &mut self.conf.planes[c].data_mut()[i];
                    *cv += (m.confidence.planes[c].get(x, y) - *cv) * r;
                }
            }
        }
    }
}

/// Restore overlapping tiles independently and blend them.
///
/// Gains, flow and merge priors are computed from each tile's own data.
/// Tiles are merged at packed resolution and blended with a raised-cosine
/// window over the overlap; demosaic and tone map then run once on the
/// blended radiance. Tiles are processed in batches of the thread count so
/// working memory scales with the tile size.
pub fn tiled_restore(scene: &BurstScene, tile: usize, overlap: usize, cfg: &RestoreConfig) -> Result<RgbImage> {
    Ok(restore_merged(&tiled_merge(scene, tile, overlap, cfg)?.radiance, scene.cfa(), scene.headroom)?)
}

pub fn tiled_merge(scene: &BurstScene, tile: usize, overlap: usize, cfg: &RestoreConfig) -> Result<MergedRadiance> {
    let bad = |msg: String| Err(Error::Validation(msg).at(Stage::Tiling));
    if tile % 2 != 0 || overlap % 2 != 0 {
        return bad(format!("tile ({tile}) and overlap ({overlap}) must be even"));
    }
    if tile <= 2 * overlap {
        return bad(format!("tile ({tile}) must exceed twice the overlap ({overlap})"));
    }
    if overlap % 8 != 0 {
        return bad(format!("overlap ({overlap}) must be a multiple of 8"));
    }
    let (w, h) = (scene.width(), scene.height());
    let xs = tile_origins(w, tile, overlap);
    let ys = tile_origins(h, tile, overlap);
    let tiles: Vec<(usize, usize)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    let (tw, th) = (tile.min(w), tile.min(h));

    let (pw, ph) = (w / 2, h / 2);
    let mut blend = Blender {
        mean: PackedRaw::filled(pw, ph, 0.0),
        conf: ValidityMask::filled(pw, ph, 0.0),
        total: ImagePlane::new(pw, ph),
    };
    // In packed samples: the ramp fills the middle half of the overlap.
    let shared = overlap / 2;
    let ramp = shared / 2;
    let margin = (shared - ramp) / 2;
    let batch = rayon::current_num_threads().max(1);
    for chunk in tiles.chunks(batch) {
        let results: Vec<MergedRadiance> = chunk
            .par_iter()
            .map(|&(x0, y0)| {
                let frames = scene
                    .frames
                    .iter()
                    .map(|f| f.crop(x0, y0, tw, th))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| e.at(Stage::Tiling))?;
                Ok(align_and_merge(&frames, cfg)?.1)
            })
            .collect::<Result<_>>()?;
        for (&(x0, y0), m) in chunk.iter().zip(&results) {
            let wx = axis_window(tw / 2, margin, ramp, x0 == 0, x0 + tw == w);
            let wy = axis_window(th / 2, margin, ramp, y0 == 0, y0 + th == h);
            blend.add(m, x0 / 2, y0 / 2, &wx, &wy);
        }
    }
    Ok(MergedRadiance {
        radiance: blend.mean,
        confidence: blend.conf,
    })
}

/// Pack the reference frame; convenience for callers that need packed input.
pub fn reference_packed(scene: &BurstScene) -> Result<PackedRaw> {
    pack_cfa(&scene.frames[0]).map_err(|e| e.at(Stage::Pack))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origins_cover_and_end_flush() {
        assert_eq!(tile_origins(100, 200, 10), vec![0]);
        assert_eq!(tile_origins(768, 256, 32), vec![0, 224, 448, 512]);
        assert_eq!(tile_origins(512, 256, 32), vec![0, 224, 256]);
        assert_eq!(tile_origins(256, 256, 32), vec![0]);
    }

    #[test]
    fn window_shape() {
        let w = axis_window(16, 2, 4, false, false);
        assert_eq!(&w[..2], &[0.0, 0.0]);
        assert!(w[2..14].iter().all(|&v| v > 0.0 && v <= 1.0));
        assert_eq!(w[7], 1.0);
        assert!((w[2] - (std::f64::consts::PI / 16.0).sin().powi(2)).abs() < 1e-15);
        assert_eq!(w[2], w[13]);
        let edge = axis_window(16, 2, 4, true, true);
        assert!(edge.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn complementary_ramps_sum_to_one() {
        // Neighbouring tiles sharing `2 * margin + ramp` samples form a
        // partition of unity over the shared band.
        let (margin, ramp) = (4, 8);
        let shared = 2 * margin + ramp;
        let a = axis_window(64, margin, ramp, true, false);
        let b = axis_window(64, margin, ramp, false, true);
        for u in 0..shared {
            let s = a[64 - shared + u] + b[u];
            assert!((s - 1.0).abs() < 1e-12, "{u}: {s}");
        }
    }
}
