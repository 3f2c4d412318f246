use rayon::prelude::*;

use crate::cmap::CorrespondenceMap;
use crate::error::{Error, Result};
use crate::features::{dot, FeatureMap};

use super::correlation::{Correlation4D, SENTINEL};

/// Vertex offset of the parabola through `(-1, left)`, `(0, center)`, `(1, right)`,
/// clamped to `±0.5`. Zero when the fit is not a maximum or a neighbour is missing.
#[inline]
pub fn parabola_offset(left: f32, center: f32, right: f32) -> f64 {
    if !(left.is_finite() && right.is_finite() && center.is_finite()) {
        return 0.0;
    }
    let (l, c, r) = (left as f64, center as f64, right as f64);
    let denom = l - 2.0 * c + r;
    if denom >= 0.0 {
        return 0.0;
    }
    ((l - r) / (2.0 * denom)).clamp(-0.5, 0.5)
}

/// Argmax decode of a (filtered) volume into a map on the target grid.
///
/// Ties resolve to the smallest `(s_y, s_x)`. Rows without a positive finite
/// score are invalid.
pub fn decode_coarse_map(corr: &Correlation4D, subpixel: bool) -> CorrespondenceMap {
    let (th, tw) = corr.target_dims();
    let (sh, sw) = corr.source_dims();
    CorrespondenceMap::from_fn(th, tw, sh, sw, |ty, tx| {
        let row = corr.row(ty * tw + tx);
        let mut best = 0usize;
        let mut best_score = SENTINEL;
        for (s, &v) in row.iter().enumerate() {
            if v > best_score {
                best_score = v;
                best = s;
            }
        }
        if !(best_score > 0.0) {
            return None;
        }
        let (by, bx) = (best / sw, best % sw);
        let (mut x, mut y) = (bx as f64, by as f64);
        if subpixel {
            if bx > 0 && bx + 1 < sw {
                x += parabola_offset(row[best - 1], best_score, row[best + 1]);
            }
            if by > 0 && by + 1 < sh {
                y += parabola_offset(row[best - sw], best_score, row[best + sw]);
            }
        }
        Some((x, y))
    })
}

/// One coarse-to-fine step.
///
/// `prev` lives on a grid half the size of `target` and points into a source
/// frame half the size of `source`. It is upsampled (pixel-center aligned,
/// coordinates rescaled) and every target pixel then searches the integer
/// source positions within `radius` of its prior (per axis) for the best
/// descriptor inner product. A radius of 0 returns the upsampled prior.
pub fn refine_level(
    prev: &CorrespondenceMap,
    source: &FeatureMap,
    target: &FeatureMap,
    radius: usize,
    subpixel: bool,
) -> Result<CorrespondenceMap> {
    if source.channels() != target.channels() {
        return Err(Error::ChannelMismatch {
            left: source.channels(),
            right: target.channels(),
        });
    }
    let (th, tw) = (target.height(), target.width());
    let (sh, sw) = (source.height(), source.width());
    if radius == 0 {
        return Ok(prev.resample(th, tw, (sh / 2, sw / 2), (sh, sw)));
    }
    // priors may drift up to half a pixel past the outer pixel centers and
    // still lie on the image; anything farther out is dropped
    let prior = prev.resample_coords(th, tw, (sh / 2, sw / 2), (sh, sw));
    let on_image = |x: f64, y: f64| x >= -0.5 && y >= -0.5 && x <= sw as f64 - 0.5 && y <= sh as f64 - 0.5;

    let c = source.channels();
    let src = source.values();
    let src_zero: Vec<bool> = src.chunks(c).map(|p| p.iter().all(|&v| v == 0.0)).collect();
    let score_at = |tv: &[f32], sy: usize, sx: usize| -> f32 {
        let i = sy * sw + sx;
        if src_zero[i] {
            SENTINEL
        } else {
            dot(tv, &src[i * c..(i + 1) * c])
        }
    };
    let r = radius as f64;

    let rows: Vec<Vec<Option<[f32; 2]>>> = (0..th)
        .into_par_iter()
        .map(|ty| {
            (0..tw)
                .map(|tx| {
                    let (ex, ey) = prior[ty * tw + tx].filter(|&(x, y)| on_image(x, y))?;
                    let tv = target.pixel(ty, tx);
                    if tv.iter().all(|&v| v == 0.0) {
                        return None;
                    }
                    let x_lo = (ex - r).ceil().max(0.0);
                    let x_hi = (ex + r).floor().min((sw - 1) as f64);
                    let y_lo = (ey - r).ceil().max(0.0);
                    let y_hi = (ey + r).floor().min((sh - 1) as f64);
                    if x_lo > x_hi || y_lo > y_hi {
                        return None;
                    }
                    let (x_lo, x_hi, y_lo, y_hi) = (x_lo as usize, x_hi as usize, y_lo as usize, y_hi as usize);
                    let mut best = SENTINEL;
                    let mut at = (0usize, 0usize);
                    for sy in y_lo..=y_hi {
                        for sx in x_lo..=x_hi {
                            let v = score_at(tv, sy, sx);
                            if v > best {
                                best = v;
                                at = (sy, sx);
                            }
                        }
                    }
                    if best == SENTINEL {
                        return None;
                    }
                    let (by, bx) = at;
                    let (mut x, mut y) = (bx as f64, by as f64);
                    if subpixel {
                        if bx > 0 && bx + 1 < sw {
                            x += parabola_offset(score_at(tv, by, bx - 1), best, score_at(tv, by, bx + 1));
                        }
                        if by > 0 && by + 1 < sh {
                            y += parabola_offset(score_at(tv, by - 1, bx), best, score_at(tv, by + 1, bx));
                        }
                    }
                    Some([x as f32, y as f32])
                })
                .collect()
        })
        .collect();

    let mut out = CorrespondenceMap::invalid(th, tw);
    for (ty, row) in rows.into_iter().enumerate() {
        for (tx, v) in row.into_iter().enumerate() {
            out.set(ty, tx, v);
        }
    }
    Ok(out)
}

/// Component-wise median of the displacement over the valid pixels of each
/// `(2 * radius + 1)²` window. Invalid pixels stay invalid, as do results
/// more than half a pixel outside the `source` frame; results closer than that
/// are clamped onto it.
pub fn median_filter(map: &CorrespondenceMap, radius: usize, source: (usize, usize)) -> CorrespondenceMap {
    if radius == 0 {
        return map.clone();
    }
    let (h, w) = (map.height(), map.width());
    let r = radius as isize;
    let mut dx = Vec::new();
    let mut dy = Vec::new();
    CorrespondenceMap::from_fn(h, w, source.0, source.1, |y, x| {
        map.get(y, x)?;
        dx.clear();
        dy.clear();
        for ny in (y as isize - r).max(0)..=(y as isize + r).min(h as isize - 1) {
            for nx in (x as isize - r).max(0)..=(x as isize + r).min(w as isize - 1) {
                if let Some([cx, cy]) = map.get(ny as usize, nx as usize) {
                    dx.push(cx - nx as f32);
                    dy.push(cy - ny as f32);
                }
            }
        }
        let fx = x as f64 + median(&mut dx) as f64;
        let fy = y as f64 + median(&mut dy) as f64;
        // within half a pixel of the outer centers the point is still on the image
        let (wmax, hmax) = ((source.1 - 1) as f64, (source.0 - 1) as f64);
        if fx < -0.5 || fy < -0.5 || fx > wmax + 0.5 || fy > hmax + 0.5 {
            return None;
        }
        Some((fx.clamp(0.0, wmax), fy.clamp(0.0, hmax)))
    })
}

fn median(v: &mut [f32]) -> f32 {
    let n = v.len();
    let (lower, &mut upper, _) = v.select_nth_unstable_by(n / 2, |a, b| a.total_cmp(b));
    if n % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        0.5 * (below + upper)
    }
}
