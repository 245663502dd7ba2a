use crate::cfa::{CfaColor, RawFrame};
use crate::error::Result;
use crate::image::{BitDepth, ImagePlane, RgbImage};

// 3x3 interpolation weights, indexed [dy + 1][dx + 1].
const RB_WEIGHTS: [[f64; 3]; 3] = [[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]];
const G_WEIGHTS: [[f64; 3]; 3] = [[0.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 1.0, 0.0]];

/// Bilinear demosaic.
///
/// Each missing sample is the weighted mean of same-colour neighbours in the
/// 3x3 window that lie inside the image; at the border this renormalizes over
/// the neighbours that exist. Measured samples pass through unchanged.
pub fn demosaic_bilinear(raw: &RawFrame) -> Result<RgbImage> {
    let (w, h) = raw.plane.dims();
    crate::cfa::check_even(w, h)?;
    let cfa = raw.cfa;
    let src = &raw.plane;
    let channel = |want: CfaColor| {
        let weights = if want == CfaColor::Green {
            &G_WEIGHTS
        } else {
            &RB_WEIGHTS
        };
        ImagePlane::from_fn(w, h, |x, y| {
            if cfa.color_at(x, y) == want {
                return src.get(x, y);
            }
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for dy in -1isize..=1 {
                let yy = y as isize + dy;
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                for dx in -1isize..=1 {
                    let xx = x as isize + dx;
                    if xx < 0 || xx >= w as isize {
                        continue;
                    }
                    let (xu, yu) = (xx as usize, yy as usize);
                    let wt = weights[(dy + 1) as usize][(dx + 1) as usize];
                    if wt > 0.0 && cfa.color_at(xu, yu) == want {
                        acc += wt * src.get(xu, yu);
                        wsum += wt;
                    }
                }
            }
            acc / wsum
        })
    };
    RgbImage::new(
        channel(CfaColor::Red),
        channel(CfaColor::Green),
        channel(CfaColor::Blue),
        BitDepth::Sixteen,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfa::{CfaPattern, ExposureGroup};
    use crate::synth::mosaic;

    const PATTERNS: [CfaPattern; 4] = [
        CfaPattern::Rggb,
        CfaPattern::Grbg,
        CfaPattern::Gbrg,
        CfaPattern::Bggr,
    ];

    #[test]
    fn constant_colour_is_reconstructed_everywhere() {
        for cfa in PATTERNS {
            let img = RgbImage::filled(10, 8, [0.3, 0.55, 0.8], BitDepth::Sixteen);
            let out = demosaic_bilinear(&mosaic(&img, cfa).unwrap()).unwrap();
            for (o, i) in out.channels().iter().zip(img.channels()) {
                for (a, b) in o.data().iter().zip(i.data()) {
                    assert!((a - b).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn pure_red_stays_in_red() {
        let img = RgbImage::filled(8, 8, [0.7, 0.0, 0.0], BitDepth::Sixteen);
        let out = demosaic_bilinear(&mosaic(&img, CfaPattern::Rggb).unwrap()).unwrap();
        assert!(out.g.data().iter().all(|&v| v == 0.0));
        assert!(out.b.data().iter().all(|&v| v == 0.0));
        assert!(out.r.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn measured_samples_pass_through() {
        let plane = ImagePlane::from_fn(8, 6, |x, y| ((x * 13 + y * 7) % 11) as f64 / 11.0);
        let raw = RawFrame::new(plane.clone(), CfaPattern::Grbg, 1.0, ExposureGroup::Mid, None).unwrap();
        let out = demosaic_bilinear(&raw).unwrap();
        for y in 0..6 {
            for x in 0..8 {
                let ch = match raw.cfa.color_at(x, y) {
                    CfaColor::Red => &out.r,
                    CfaColor::Green => &out.g,
                    CfaColor::Blue => &out.b,
                };
                assert_eq!(ch.get(x, y), plane.get(x, y));
            }
        }
    }

    #[test]
    fn linear_ramp_is_exact_in_interior() {
        for cfa in PATTERNS {
            let ramp = |x: usize, _y: usize| 0.01 + 0.013 * x as f64;
            let p = ImagePlane::from_fn(16, 12, ramp);
            let img = RgbImage::new(p.clone(), p.map(|v| 0.5 * v), p.map(|v| 1.0 - v), BitDepth::Sixteen).unwrap();
            let out = demosaic_bilinear(&mosaic(&img, cfa).unwrap()).unwrap();
            for (o, i) in out.channels().iter().zip(img.channels()) {
                for y in 1..11 {
                    for x in 1..15 {
                        assert!((o.get(x, y) - i.get(x, y)).abs() <= 1e-6);
                    }
                }
            }
        }
    }
}
