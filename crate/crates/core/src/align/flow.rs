//! Coarse-to-fine tile flow: integer block matching on a mean-pooled
//! luminance pyramid, Lucas-Kanade subpixel refinement, bilinear
//! densification of the tile vectors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exposure::{median, ValidityMask};
use crate::cfa::PackedRaw;
use crate::error::{Error, Result};
use crate::image::ImagePlane;

/// Dense displacement field at packed resolution: the reference pixel `p`
/// corresponds to the target at `p + (dx, dy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub dx: ImagePlane,
    pub dy: ImagePlane,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            dx: ImagePlane::new(width, height),
            dy: ImagePlane::new(width, height),
        }
    }

    pub fn uniform(width: usize, height: usize, dx: f64, dy: f64) -> Self {
        Self {
            dx: ImagePlane::filled(width, height, dx),
            dy: ImagePlane::filled(width, height, dy),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dx.dims()
    }

    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        (self.dx.get(x, y), self.dy.get(x, y))
    }

    pub fn max_magnitude(&self) -> f64 {
        self.dx
            .data()
            .iter()
            .zip(self.dy.data())
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub levels: usize,
    /// Integer search radius per level, in that level's pixels.
    pub radius: usize,
    /// Tile side in pixels at every level.
    pub block: usize,
    pub lk_iters: usize,
    pub lk_damping: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            radius: 4,
            block: 16,
            lk_iters: 5,
            lk_damping: 1e-3,
        }
    }
}

impl FlowConfig {
    /// Largest displacement the search can reach along one axis.
    pub fn search_budget(&self) -> f64 {
        // Each level contributes its radius plus at most one pixel of
        // refinement, doubled for every finer level below it.
        ((1usize << self.levels) - 1) as f64 * (self.radius as f64 + 1.0)
    }

    pub fn validate_dims(&self, width: usize, height: usize) -> Result<()> {
        if self.levels == 0 || self.block == 0 {
            return Err(Error::Validation("flow needs >= 1 level and block > 0".into()));
        }
        let div = 1usize << (self.levels - 1);
        if width % div != 0 || height % div != 0 || width < div || height < div {
            return Err(Error::Dimension(format!(
                "packed size {width}x{height} is not divisible by 2^(levels-1) = {div}"
            )));
        }
        Ok(())
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Bilinear sample with clamped coordinates; equal neighbours reproduce
/// their value exactly.
fn sample_clamped(p: &ImagePlane, x: f64, y: f64) -> f64 {
    let (w, h) = p.dims();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = lerp(p.get(x0, y0), p.get(x1, y0), fx);
    let bot = lerp(p.get(x0, y1), p.get(x1, y1), fx);
    lerp(top, bot, fy)
}

fn mean_pool(p: &ImagePlane) -> ImagePlane {
    ImagePlane::from_fn(p.width() / 2, p.height() / 2, |x, y| {
        (p.get(2 * x, 2 * y) + p.get(2 * x + 1, 2 * y) + p.get(2 * x, 2 * y + 1) + p.get(2 * x + 1, 2 * y + 1))
            * 0.25
    })
}

fn min_pool(p: &ImagePlane) -> ImagePlane {
    ImagePlane::from_fn(p.width() / 2, p.height() / 2, |x, y| {
        p.get(2 * x, 2 * y)
            .min(p.get(2 * x + 1, 2 * y))
            .min(p.get(2 * x, 2 * y + 1))
            .min(p.get(2 * x + 1, 2 * y + 1))
    })
}

/// Slope of the bilinear interpolant at `(x, y)`: one-sided within a cell,
/// central on grid lines where the interpolant has a kink.
fn interp_slope(p: &ImagePlane, x: f64, y: f64) -> (f64, f64) {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (xi, yi) = (x0 as isize, y0 as isize);
    let g = |a: isize, b: isize| p.get_clamped(a, b);
    let sx = |row: isize| {
        if fx == 0.0 {
            (g(xi + 1, row) - g(xi - 1, row)) * 0.5
        } else {
            g(xi + 1, row) - g(xi, row)
        }
    };
    let sy = |col: isize| {
        if fy == 0.0 {
            (g(col, yi + 1) - g(col, yi - 1)) * 0.5
        } else {
            g(col, yi + 1) - g(col, yi)
        }
    };
    (lerp(sx(yi), sx(yi + 1), fy), lerp(sy(xi), sy(xi + 1), fx))
}

struct Level {
    reference: ImagePlane,
    target: ImagePlane,
    ref_mask: ImagePlane,
    tgt_mask: ImagePlane,
}

#[derive(Debug, Clone, Copy)]
struct Tile {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
}

impl Tile {
    fn center(&self) -> (f64, f64) {
        (
            self.x0 as f64 + (self.w as f64 - 1.0) * 0.5,
            self.y0 as f64 + (self.h as f64 - 1.0) * 0.5,
        )
    }
}

/// Tile grid: `ceil(n / block)` tiles per axis, the last one possibly short.
fn tile_grid(width: usize, height: usize, block: usize) -> (usize, usize, Vec<Tile>) {
    let nx = width.div_ceil(block);
    let ny = height.div_ceil(block);
    let mut tiles = Vec::with_capacity(nx * ny);
    for ty in 0..ny {
        for tx in 0..nx {
            let (x0, y0) = (tx * block, ty * block);
            tiles.push(Tile {
                x0,
                y0,
                w: block.min(width - x0),
                h: block.min(height - y0),
            });
        }
    }
    (nx, ny, tiles)
}

/// Minimum share of a tile's pixels that must be valid for a candidate.
const MIN_SUPPORT: f64 = 0.1;
/// Gradient energy per unit weight below which a tile counts as flat.
const FLAT_ENERGY: f64 = 1e-12;

/// Bound on the brightness ratio fitted per tile during matching.
const MAX_TILE_SCALE: f64 = 1.5;

/// Masked mean absolute difference for an integer displacement after fitting
/// a brightness ratio between the overlapping samples, or `None` when too few
/// pixels are valid.
fn block_cost(level: &Level, t: &Tile, dx: isize, dy: isize) -> Option<(f64, f64)> {
    let (w, h) = level.reference.dims();
    let ys = (t.y0 as isize).max(-dy)..((t.y0 + t.h) as isize).min(h as isize - dy);
    let xs = (t.x0 as isize).max(-dx)..((t.x0 + t.w) as isize).min(w as isize - dx);
    let rows = || {
        ys.clone().map(|y| {
            let (y, sy) = (y as usize, (y + dy) as usize);
            (
                level.reference.row(y),
                level.ref_mask.row(y),
                level.target.row(sy),
                level.tgt_mask.row(sy),
            )
        })
    };
    let (mut sr, mut st, mut wsum) = (0.0, 0.0, 0.0);
    for (rrow, mrow, trow, tmrow) in rows() {
        for x in xs.clone() {
            let (x, sx) = (x as usize, (x + dx) as usize);
            let wt = mrow[x] * tmrow[sx];
            sr += wt * rrow[x];
            st += wt * trow[sx];
            wsum += wt;
        }
    }
    if wsum < MIN_SUPPORT * (t.w * t.h) as f64 || wsum <= 0.0 {
        return None;
    }
    let scale = if st > 0.0 && sr > 0.0 {
        (sr / st).clamp(1.0 / MAX_TILE_SCALE, MAX_TILE_SCALE)
    } else {
        1.0
    };
    let mut sad = 0.0;
    for (rrow, mrow, trow, tmrow) in rows() {
        for x in xs.clone() {
            let (x, sx) = (x as usize, (x + dx) as usize);
            let wt = mrow[x] * tmrow[sx];
            sad += wt * (rrow[x] - scale * trow[sx]).abs();
        }
    }
    Some((sad / wsum, wsum))
}

/// Candidates whose cost is within `best * MATCH_REL_TOL + MATCH_ABS_TOL` of
/// the best count as ties; the absolute term covers 16-bit quantization after
/// exposure normalization.
const MATCH_REL_TOL: f64 = 0.01;
const MATCH_ABS_TOL: f64 = 2e-4;

/// A tile is ambiguous when the median candidate cost is within
/// `best * FLAT_SE_MULT / sqrt(support)` of the best: the whole search window
/// is then indistinguishable within the sampling spread of a mean absolute
/// difference of noise, and the tile defers to its prior.
const FLAT_SE_MULT: f64 = 3.0;

/// Best integer displacement around `base` with its cost, or `None` when the
/// tile lacks support or is ambiguous. Costs within the tie margin of the
/// minimum are resolved towards the smallest offset norm, then smallest dy,
/// then smallest dx.
fn block_match(level: &Level, t: &Tile, base: (isize, isize), radius: isize) -> Option<(f64, (isize, isize))> {
    let mut costs = Vec::with_capacity(((2 * radius + 1) * (2 * radius + 1)) as usize);
    for oy in -radius..=radius {
        for ox in -radius..=radius {
            if let Some((cost, support)) = block_cost(level, t, base.0 + ox, base.1 + oy) {
                costs.push((cost, support, (ox * ox + oy * oy, oy, ox)));
            }
        }
    }
    let &(best, support, _) = costs.iter().min_by(|a, b| a.0.total_cmp(&b.0))?;
    let mut all: Vec<f64> = costs.iter().map(|c| c.0).collect();
    if median(&mut all) - best <= best * FLAT_SE_MULT / support.sqrt() {
        return None;
    }
    let margin = tie_margin(best);
    costs
        .iter()
        .filter(|c| c.0 <= best + margin)
        .min_by_key(|c| c.2)
        .map(|&(cost, _, (_, oy, ox))| (cost, (base.0 + ox, base.1 + oy)))
}

fn tie_margin(best: f64) -> f64 {
    best * MATCH_REL_TOL + MATCH_ABS_TOL
}

/// Most search starts per tile: its own prior, the four neighbouring tiles'
/// priors and zero.
pub(crate) const MAX_SEARCH_STARTS: usize = 6;

/// Search around each start and keep the cheapest match. A later start only
/// wins when it beats the earlier ones by more than the tie margin, so the
/// tile's own prior is preferred. Extra starts let a tile escape a wrong
/// coarse-level estimate that its neighbours did not share.
fn multi_start_match(level: &Level, t: &Tile, starts: &[(isize, isize)], radius: isize) -> Option<(isize, isize)> {
    let mut best: Option<(f64, (isize, isize))> = None;
    for (i, &s) in starts.iter().enumerate() {
        if starts[..i].contains(&s) {
            continue;
        }
        if let Some((cost, d)) = block_match(level, t, s, radius) {
            if best.is_none_or(|(bc, _)| cost + tie_margin(cost) < bc) {
                best = Some((cost, d));
            }
        }
    }
    best.map(|(_, d)| d)
}

/// Solve the symmetric 3x3 system `h u = b` by Cramer's rule.
fn solve3(h: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let det = det3(h);
    if !(det.abs() > f64::MIN_POSITIVE) {
        return None;
    }
    let col = |k: usize| {
        let mut m = h;
        for r in 0..3 {
            m[r][k] = b[r];
        }
        det3(m) / det
    };
    Some([col(0), col(1), col(2)])
}

/// Gauss-Newton refinement of the tile displacement starting from an integer
/// match. A per-tile brightness scale is solved alongside the displacement so
/// residual exposure mismatch does not bias it. Stays within one pixel of the
/// start. Also returns the share of the tile's samples that took part.
fn refine_lk(level: &Level, t: &Tile, start: (f64, f64), cfg: &FlowConfig) -> ((f64, f64), f64) {
    let (mut dx, mut dy) = start;
    let mut scale = 1.0;
    let mut support = 0.0;
    for _ in 0..cfg.lk_iters {
        let mut h = [[0.0f64; 3]; 3];
        let mut b = [0.0f64; 3];
        let mut wsum = 0.0;
        for y in t.y0..t.y0 + t.h {
            for x in t.x0..t.x0 + t.w {
                let wr = level.ref_mask.get(x, y);
                if wr <= 0.0 {
                    continue;
                }
                let (sx, sy) = (x as f64 + dx, y as f64 + dy);
                let (v, cover) = level.target.sample_bilinear(sx, sy);
                if cover < 1.0 {
                    continue;
                }
                let (mt, _) = level.tgt_mask.sample_bilinear(sx, sy);
                let wt = wr * mt;
                if wt <= 0.0 {
                    continue;
                }
                let (gx, gy) = interp_slope(&level.target, sx, sy);
                let j = [scale * gx, scale * gy, v];
                let e = scale * v - level.reference.get(x, y);
                for r in 0..3 {
                    for c in 0..3 {
                        h[r][c] += wt * j[r] * j[c];
                    }
                    b[r] -= wt * j[r] * e;
                }
                wsum += wt;
            }
        }
        support = wsum / (t.w * t.h) as f64;
        if wsum <= 0.0 || h[0][0] + h[1][1] <= FLAT_ENERGY * wsum || h[2][2] <= 0.0 {
            break;
        }
        // Damping relative to the gradient energy keeps the step scale-free.
        let lambda = cfg.lk_damping * 0.5 * (h[0][0] + h[1][1]);
        h[0][0] += lambda;
        h[1][1] += lambda;
        h[2][2] *= 1.0 + cfg.lk_damping;
        let Some([ux, uy, us]) = solve3(h, b) else {
            break;
        };
        let (nx, ny) = (dx + ux, dy + uy);
        if (nx - start.0).abs() > 1.0 || (ny - start.1).abs() > 1.0 || scale + us <= 0.0 {
            break;
        }
        dx = nx;
        dy = ny;
        scale += us;
        if ux.hypot(uy) < 1e-4 {
            break;
        }
    }
    ((dx, dy), support)
}

/// Bilinear interpolation between tile centres, clamped at the outer ring.
fn densify(width: usize, height: usize, nx: usize, ny: usize, tiles: &[Tile], vals: &[(f64, f64)]) -> FlowField {
    let cx: Vec<f64> = (0..nx).map(|i| tiles[i].center().0).collect();
    let cy: Vec<f64> = (0..ny).map(|j| tiles[j * nx].center().1).collect();
    let bracket = |centers: &[f64], p: f64| -> (usize, usize, f64) {
        if centers.len() == 1 || p <= centers[0] {
            return (0, 0, 0.0);
        }
        let last = centers.len() - 1;
        if p >= centers[last] {
            return (last, last, 0.0);
        }
        let i = centers.partition_point(|&c| c <= p) - 1;
        (i, i + 1, (p - centers[i]) / (centers[i + 1] - centers[i]))
    };
    let xb: Vec<_> = (0..width).map(|x| bracket(&cx, x as f64)).collect();
    let yb: Vec<_> = (0..height).map(|y| bracket(&cy, y as f64)).collect();
    let comp = |k: usize| {
        ImagePlane::from_fn(width, height, |x, y| {
            let (i0, i1, fx) = xb[x];
            let (j0, j1, fy) = yb[y];
            let g = |i: usize, j: usize| if k == 0 { vals[j * nx + i].0 } else { vals[j * nx + i].1 };
            lerp(lerp(g(i0, j0), g(i1, j0), fx), lerp(g(i0, j1), g(i1, j1), fx), fy)
        })
    };
    FlowField { dx: comp(0), dy: comp(1) }
}

/// Double resolution and displacement.
fn upsample(flow: &FlowField, width: usize, height: usize) -> FlowField {
    let comp = |p: &ImagePlane| {
        ImagePlane::from_fn(width, height, |x, y| {
            2.0 * sample_clamped(p, (x as f64 + 0.5) * 0.5 - 0.5, (y as f64 + 0.5) * 0.5 - 0.5)
        })
    };
    FlowField {
        dx: comp(&flow.dx),
        dy: comp(&flow.dy),
    }
}

/// Fill tiles without a match from their matched neighbours.
fn fill_holes(nx: usize, ny: usize, vals: &mut [(f64, f64)], known: &mut [bool]) -> bool {
    if !known.iter().any(|&k| k) {
        return false;
    }
    while known.iter().any(|&k| !k) {
        let snapshot = known.to_vec();
        for j in 0..ny {
            for i in 0..nx {
                let idx = j * nx + i;
                if snapshot[idx] {
                    continue;
                }
                let (mut sx, mut sy, mut n) = (0.0, 0.0, 0);
                for (di, dj) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                    let (ii, jj) = (i as isize + di, j as isize + dj);
                    if ii < 0 || jj < 0 || ii >= nx as isize || jj >= ny as isize {
                        continue;
                    }
                    let k = jj as usize * nx + ii as usize;
                    if snapshot[k] {
                        sx += vals[k].0;
                        sy += vals[k].1;
                        n += 1;
                    }
                }
                if n > 0 {
                    vals[idx] = (sx / n as f64, sy / n as f64);
                    known[idx] = true;
                }
            }
        }
    }
    true
}

/// Component-wise median over each tile's 3x3 neighbourhood; removes isolated
/// mismatches while leaving locally linear fields untouched.
fn median3(nx: usize, ny: usize, vals: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(vals.len());
    let mut xs = Vec::with_capacity(9);
    let mut ys = Vec::with_capacity(9);
    for j in 0..ny {
        for i in 0..nx {
            xs.clear();
            ys.clear();
            for jj in j.saturating_sub(1)..(j + 2).min(ny) {
                for ii in i.saturating_sub(1)..(i + 2).min(nx) {
                    xs.push(vals[jj * nx + ii].0);
                    ys.push(vals[jj * nx + ii].1);
                }
            }
            out.push((median(&mut xs), median(&mut ys)));
        }
    }
    out
}

/// Smallest plane-fit weight, so tiles without support still count when
/// nothing better is nearby.
const MIN_FIT_WEIGHT: f64 = 1e-3;

/// Tiles on each side of the plane-fit window.
const FIT_RADIUS: usize = 1;

/// Weighted least-squares plane through each tile's 3x3 neighbourhood,
/// evaluated at the tile. Averages out estimation noise while reproducing
/// translations and rotations exactly, including on the border where the
/// window is one-sided. Weights are the squared sample support, so tiles cut
/// by the frame edge or masked out count less.
fn plane_fit(nx: usize, ny: usize, vals: &[(f64, f64)], support: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(vals.len());
    for j in 0..ny {
        for i in 0..nx {
            // Offsets relative to the tile keep the system well conditioned.
            let mut m = [[0.0f64; 3]; 3];
            let mut bx = [0.0f64; 3];
            let mut by = [0.0f64; 3];
            for jj in j.saturating_sub(FIT_RADIUS)..(j + FIT_RADIUS + 1).min(ny) {
                for ii in i.saturating_sub(FIT_RADIUS)..(i + FIT_RADIUS + 1).min(nx) {
                    let basis = [1.0, ii as f64 - i as f64, jj as f64 - j as f64];
                    let k = jj * nx + ii;
                    let wt = (support[k] * support[k]).max(MIN_FIT_WEIGHT);
                    let v = vals[k];
                    for r in 0..3 {
                        for c in 0..3 {
                            m[r][c] += wt * basis[r] * basis[c];
                        }
                        bx[r] += wt * basis[r] * v.0;
                        by[r] += wt * basis[r] * v.1;
                    }
                }
            }
            // Degenerate windows (a single row or column) fall back to the
            // mean along the available axis.
            for r in 1..3 {
                if m[r][r] == 0.0 {
                    m[r][r] = 1.0;
                }
            }
            let fit = |b: [f64; 3]| solve3(m, b).map_or(f64::NAN, |c| c[0]);
            let (fx, fy) = (fit(bx), fit(by));
            out.push(if fx.is_finite() && fy.is_finite() { (fx, fy) } else { vals[j * nx + i] });
        }
    }
    out
}

/// Flow from `reference` to `target` with every sample valid.
pub fn estimate_flow(reference: &PackedRaw, target: &PackedRaw, cfg: &FlowConfig) -> Result<FlowField> {
    let (w, h) = reference.dims();
    let ones = ValidityMask::ones(w, h);
    estimate_flow_masked(reference, target, &ones, &ones, cfg)
}

/// Flow from `reference` to `target`, ignoring samples with zero mask weight.
pub fn estimate_flow_masked(
    reference: &PackedRaw,
    target: &PackedRaw,
    ref_mask: &ValidityMask,
    tgt_mask: &ValidityMask,
    cfg: &FlowConfig,
) -> Result<FlowField> {
    let (w, h) = reference.dims();
    if target.dims() != (w, h) || ref_mask.dims() != (w, h) || tgt_mask.dims() != (w, h) {
        return Err(Error::Dimension("flow inputs differ in size".into()));
    }
    cfg.validate_dims(w, h)?;

    let mut levels = Vec::with_capacity(cfg.levels);
    let mut r = reference.luminance();
    let mut t = target.luminance();
    let mut rm = ref_mask.min_plane();
    let mut tm = tgt_mask.min_plane();
    for l in 0..cfg.levels {
        if l > 0 {
            r = mean_pool(&r);
            t = mean_pool(&t);
            rm = min_pool(&rm);
            tm = min_pool(&tm);
        }
        levels.push(Level {
            reference: r.clone(),
            target: t.clone(),
            ref_mask: rm.clone(),
            tgt_mask: tm.clone(),
        });
    }

    let radius = cfg.radius as isize;
    let mut prior: Option<FlowField> = None;
    for (li, level) in levels.iter().enumerate().rev() {
        let (lw, lh) = level.reference.dims();
        let (nx, ny, tiles) = tile_grid(lw, lh, cfg.block);
        let results: Vec<Option<((f64, f64), f64)>> = tiles
            .par_iter()
            .map(|tile| {
                let (cx, cy) = tile.center();
                let at = |x: f64, y: f64| {
                    let p = prior
                        .as_ref()
                        .map(|f| (sample_clamped(&f.dx, x, y), sample_clamped(&f.dy, x, y)))
                        .unwrap_or((0.0, 0.0));
                    (p.0.round() as isize, p.1.round() as isize)
                };
                let b = cfg.block as f64;
                let starts = [at(cx, cy), at(cx - b, cy), at(cx + b, cy), at(cx, cy - b), at(cx, cy + b), (0, 0)];
                let (ix, iy) = multi_start_match(level, tile, &starts, radius)?;
                Some(refine_lk(level, tile, (ix as f64, iy as f64), cfg))
            })
            .collect();

        let mut known: Vec<bool> = results.iter().map(Option::is_some).collect();
        let support: Vec<f64> = results.iter().map(|r| r.map_or(0.0, |r| r.1)).collect();
        let mut vals: Vec<(f64, f64)> = results
            .iter()
            .zip(&tiles)
            .map(|(r, tile)| {
                r.map(|r| r.0).unwrap_or_else(|| {
                    let (cx, cy) = tile.center();
                    prior
                        .as_ref()
                        .map(|f| (sample_clamped(&f.dx, cx, cy), sample_clamped(&f.dy, cx, cy)))
                        .unwrap_or((0.0, 0.0))
                })
            })
            .collect();
        if prior.is_none() {
            // Nothing coarser to fall back on: borrow from matched neighbours.
            fill_holes(nx, ny, &mut vals, &mut known);
        }
        let vals = plane_fit(nx, ny, &median3(nx, ny, &vals), &support);
        let dense = densify(lw, lh, nx, ny, &tiles, &vals);
        prior = Some(if li == 0 {
            dense
        } else {
            let (fw, fh) = levels[li - 1].reference.dims();
            upsample(&dense, fw, fh)
        });
    }
    Ok(prior.expect("at least one level"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::procedural_hdr;

    /// Packed frame from the procedural generator: R, G, G, B radiance at
    /// half resolution.
    fn textured(seed: u64, w: usize, h: usize) -> PackedRaw {
        let hdr = procedural_hdr(seed, w, h).unwrap();
        PackedRaw {
            planes: [
                hdr.rgb.r.clone(),
                hdr.rgb.g.clone(),
                hdr.rgb.g.map(|v| v * 0.9),
                hdr.rgb.b.clone(),
            ],
        }
    }

    fn shift(p: &PackedRaw, sx: f64, sy: f64) -> PackedRaw {
        // target(x, y) = source(x - sx, y - sy)
        PackedRaw {
            planes: std::array::from_fn(|c| {
                let src = &p.planes[c];
                ImagePlane::from_fn(src.width(), src.height(), |x, y| {
                    src.sample_bilinear(x as f64 - sx, y as f64 - sy).0
                })
            }),
        }
    }

    fn interior(f: &FlowField, block: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (w, h) = f.dims();
        let (nx, ny) = (w / block, h / block);
        (1..ny - 1).flat_map(move |j| {
            (1..nx - 1).map(move |i| {
                let (x, y) = (i * block + block / 2, j * block + block / 2);
                f.at(x, y)
            })
        })
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let r = textured(1, 128, 96);
        let f = estimate_flow(&r, &r, &FlowConfig::default()).unwrap();
        assert!(f.dx.data().iter().chain(f.dy.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn integer_shift_recovered_exactly() {
        let r = textured(2, 128, 96);
        let t = shift(&r, 3.0, 2.0);
        let f = estimate_flow(&r, &t, &FlowConfig::default()).unwrap();
        for (dx, dy) in interior(&f, 16) {
            assert_eq!((dx, dy), (3.0, 2.0));
        }
    }

    #[test]
    fn half_pixel_shift_refined() {
        // Box-filtered captures of a finer image, one fine pixel apart: an
        // exact half-pixel displacement at this resolution.
        let fine = textured(3, 256, 192);
        let pool = |ox: usize| PackedRaw {
            planes: std::array::from_fn(|c| {
                let p = &fine.planes[c];
                ImagePlane::from_fn(128, 96, |x, y| {
                    let xs = |dx: usize| (2 * x + dx + ox).min(255);
                    (p.get(xs(0), 2 * y) + p.get(xs(1), 2 * y) + p.get(xs(0), 2 * y + 1) + p.get(xs(1), 2 * y + 1))
                        * 0.25
                })
            }),
        };
        let r = pool(1);
        let t = pool(0);
        let f = estimate_flow(&r, &t, &FlowConfig::default()).unwrap();
        // Nearly flat tiles carry little information about a subpixel shift,
        // so judge the bulk of the field rather than every tile.
        let v: Vec<(f64, f64)> = interior(&f, 16).collect();
        let good = v
            .iter()
            .filter(|(dx, dy)| (0.4..=0.6).contains(dx) && dy.abs() < 0.1)
            .count();
        assert!(good as f64 >= 0.8 * v.len() as f64, "{good}/{}", v.len());
        let mut xs: Vec<f64> = v.iter().map(|p| p.0).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[xs.len() / 2] - 0.5).abs() < 0.05);
    }

    #[test]
    fn indivisible_size_rejected() {
        let r = PackedRaw::filled(30, 32, 0.5);
        assert!(matches!(
            estimate_flow(&r, &r, &FlowConfig::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn flat_frames_keep_zero_flow() {
        let r = PackedRaw::filled(64, 64, 0.5);
        let f = estimate_flow(&r, &r, &FlowConfig::default()).unwrap();
        assert_eq!(f.max_magnitude(), 0.0);
    }

    #[test]
    fn gain_scaled_target_after_normalization() {
        use crate::align::exposure::{normalize_exposure, GainEstimate, Thresholds};
        // Keep every sample above the dark floor at all tested gains.
        let r = textured(4, 128, 96).map(|v| 0.1 + v * 0.4);
        let moved = shift(&r, -2.0, 1.0);
        for c in [0.5, 0.8, 1.3, 2.0] {
            let scaled = moved.scale(c);
            let (n, m) = normalize_exposure(
                &scaled,
                &GainEstimate {
                    gain: 1.0 / c,
                    inlier_fraction: 1.0,
                },
                &Thresholds::default(),
            )
            .unwrap();
            let ones = ValidityMask::ones(128, 96);
            let f = estimate_flow_masked(&r, &n, &ones, &m, &FlowConfig::default()).unwrap();
            for (dx, dy) in interior(&f, 16) {
                assert!((dx + 2.0).abs() < 0.1 && (dy - 1.0).abs() < 0.1, "c={c}: ({dx},{dy})");
            }
        }
    }

    #[test]
    fn flow_stays_within_budget() {
        let r = textured(5, 128, 128);
        let t = textured(6, 128, 128);
        let cfg = FlowConfig::default();
        let f = estimate_flow(&r, &t, &cfg).unwrap();
        assert!(f.max_magnitude() <= cfg.search_budget() * std::f64::consts::SQRT_2);
    }
}
