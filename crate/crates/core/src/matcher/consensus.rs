//! Parameter-free neighbourhood consensus on a 4D correlation volume.
//!
//! Stage 1 is a soft mutual-nearest-neighbour reweighting,
//! `c'(t,s) = c(t,s)² / (max_k c(k,s) · max_l c(t,l))`, on scores clamped at 0.
//! Stage 2 averages `c'` over a `k×k` window that moves jointly in the target
//! and source grids, `(t + δ, s + δ)` for `|δ|∞ ≤ k/2`. A match supported by
//! neighbours that move the same way is reinforced; isolated peaks are diluted.
//! Offsets that leave either grid are dropped from the mean.
//!
//! Sentinel (texture-free) entries stay sentinel and contribute 0 to their
//! neighbours' averages. Target rows without any positive score stay at 0.

use crate::error::{Error, Result};

use super::correlation::{Correlation4D, SENTINEL};

pub fn neighborhood_consensus(corr: &Correlation4D, neighborhood: usize) -> Result<Correlation4D> {
    if neighborhood == 0 || neighborhood % 2 == 0 {
        return Err(Error::Config(format!(
            "neighborhood must be odd and >= 1, got {neighborhood}"
        )));
    }
    let mutual = mutual_nn(corr);
    let mut aggregated = box_average(&mutual, corr.target, corr.source, neighborhood / 2);

    let ns = corr.source_len();
    for t in 0..corr.target_len() {
        let row = corr.row(t);
        let supported = row.iter().any(|&v| v > 0.0);
        let out = &mut aggregated[t * ns..(t + 1) * ns];
        for (o, &c) in out.iter_mut().zip(row) {
            if c == SENTINEL {
                *o = SENTINEL;
            } else if !supported {
                *o = 0.0;
            }
        }
    }
    Correlation4D::from_scores(corr.target, corr.source, aggregated)
}

/// Stage 1 on clamped scores; sentinels map to 0 here and are restored later.
pub(crate) fn mutual_nn(corr: &Correlation4D) -> Vec<f32> {
    let (nt, ns) = (corr.target_len(), corr.source_len());
    let clamped: Vec<f32> = corr.scores.iter().map(|&v| v.max(0.0)).collect();
    let mut row_max = vec![0.0f32; nt];
    let mut col_max = vec![0.0f32; ns];
    for t in 0..nt {
        for s in 0..ns {
            let v = clamped[t * ns + s];
            row_max[t] = row_max[t].max(v);
            col_max[s] = col_max[s].max(v);
        }
    }
    let mut out = vec![0.0f32; nt * ns];
    for t in 0..nt {
        for s in 0..ns {
            let v = clamped[t * ns + s];
            let denom = row_max[t] * col_max[s];
            out[t * ns + s] = if denom > 0.0 { (v * v) / denom } else { 0.0 };
        }
    }
    out
}

/// Mean of `values` over the co-moving window `(t + δ, s + δ)`, `|δ|∞ ≤ r`.
fn box_average(values: &[f32], target: (usize, usize), source: (usize, usize), r: usize) -> Vec<f32> {
    if r == 0 {
        return values.to_vec();
    }
    let (th, tw) = target;
    let (sh, sw) = source;
    let ns = sh * sw;
    let r = r as isize;
    let mut out = vec![0.0f32; values.len()];
    for ty in 0..th as isize {
        for tx in 0..tw as isize {
            let row = &mut out[(ty as usize * tw + tx as usize) * ns..][..ns];
            for sy in 0..sh as isize {
                // offsets keeping both the target and source row in range
                let dy_lo = (-r).max(-ty).max(-sy);
                let dy_hi = r.min(th as isize - 1 - ty).min(sh as isize - 1 - sy);
                for sx in 0..sw as isize {
                    let dx_lo = (-r).max(-tx).max(-sx);
                    let dx_hi = r.min(tw as isize - 1 - tx).min(sw as isize - 1 - sx);
                    let mut acc = 0.0f64;
                    for dy in dy_lo..=dy_hi {
                        let t_base = (ty + dy) as usize * tw;
                        let s_base = (sy + dy) as usize * sw;
                        for dx in dx_lo..=dx_hi {
                            let t = t_base + (tx + dx) as usize;
                            let s = s_base + (sx + dx) as usize;
                            acc += values[t * ns + s] as f64;
                        }
                    }
                    let n = ((dy_hi - dy_lo + 1) * (dx_hi - dx_lo + 1)) as f64;
                    row[sy as usize * sw + sx as usize] = (acc / n) as f32;
                }
            }
        }
    }
    out
}
