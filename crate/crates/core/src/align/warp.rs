use super::exposure::ValidityMask;
use super::flow::FlowField;
use crate::cfa::PackedRaw;
use crate::error::{Error, Result};
use crate::image::ImagePlane;

/// Resample `target` at `p + flow(p)` with zero padding.
///
/// The returned mask is the share of bilinear weight that landed inside the
/// target: 1 for fully interior samples, 0 when the whole footprint is
/// outside, fractional in between.
pub fn warp_bilinear(target: &PackedRaw, flow: &FlowField) -> Result<(PackedRaw, ValidityMask)> {
    let (w, h) = target.dims();
    if flow.dims() != (w, h) {
        return Err(Error::Dimension(format!(
            "flow {:?} does not match frame {:?}",
            flow.dims(),
            (w, h)
        )));
    }
    let mut cover = ImagePlane::new(w, h);
    let mut planes: [ImagePlane; 4] = std::array::from_fn(|_| ImagePlane::new(w, h));
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = flow.at(x, y);
            let (sx, sy) = (x as f64 + dx, y as f64 + dy);
            for c in 0..4 {
                let (v, m) = target.planes[c].sample_bilinear(sx, sy);
                planes[c].set(x, y, v);
                if c == 0 {
                    cover.set(x, y, m);
                }
            }
        }
    }
    Ok((PackedRaw { planes }, ValidityMask::uniform(cover)))
}

/// Carry a validity mask along a flow, taking the minimum over the in-frame
/// taps that contribute to each sample. Out-of-frame taps are ignored here;
/// they are accounted for by the padding mask of [`warp_bilinear`].
pub fn warp_mask_min(mask: &ValidityMask, flow: &FlowField) -> ValidityMask {
    let (w, h) = mask.dims();
    let planes = std::array::from_fn(|c| {
        let src = &mask.planes[c];
        ImagePlane::from_fn(w, h, |x, y| {
            let (dx, dy) = flow.at(x, y);
            let (sx, sy) = (x as f64 + dx, y as f64 + dy);
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (xi, yi) = (x0 as isize, y0 as isize);
            let mut m = f64::INFINITY;
            for (tx, ty, wt) in [
                (xi, yi, (1.0 - fx) * (1.0 - fy)),
                (xi + 1, yi, fx * (1.0 - fy)),
                (xi, yi + 1, (1.0 - fx) * fy),
                (xi + 1, yi + 1, fx * fy),
            ] {
                if wt > 0.0 && tx >= 0 && ty >= 0 && (tx as usize) < w && (ty as usize) < h {
                    m = m.min(src.get(tx as usize, ty as usize));
                }
            }
            if m.is_finite() {
                m
            } else {
                0.0
            }
        })
    });
    ValidityMask { planes }
}
