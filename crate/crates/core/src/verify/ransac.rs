use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cmap::{CorrespondenceMap, Mask};
use crate::error::{Error, Result};

use super::homography::{fit_homography_dlt, four_point, Homography, PointPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Symmetric transfer error bound, pixels.
    pub inlier_threshold: f64,
    pub min_inliers: usize,
    pub seed: u64,
    /// Hypotheses are scored on every `sample_stride`-th row and column.
    pub sample_stride: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            inlier_threshold: 3.0,
            min_inliers: 20,
            seed: 0,
            sample_stride: 2,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Config("ransac iterations must be >= 1".into()));
        }
        if !(self.inlier_threshold > 0.0 && self.inlier_threshold.is_finite()) {
            return Err(Error::Config("inlier_threshold must be positive".into()));
        }
        if self.sample_stride < 1 {
            return Err(Error::Config("sample_stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// RANSAC outcome for one map.
#[derive(Debug, Clone, PartialEq)]
pub struct RansacOutput {
    pub model: Option<Homography>,
    /// Inliers of the final model over the full valid grid.
    pub inliers: Mask,
}

/// Flattened correspondences: target grid points and their source coordinates.
struct Points {
    tx: Vec<f64>,
    ty: Vec<f64>,
    sx: Vec<f64>,
    sy: Vec<f64>,
}

impl Points {
    fn collect(map: &CorrespondenceMap, stride: usize) -> Self {
        let mut p = Points {
            tx: Vec::new(),
            ty: Vec::new(),
            sx: Vec::new(),
            sy: Vec::new(),
        };
        for y in (0..map.height()).step_by(stride) {
            for x in (0..map.width()).step_by(stride) {
                if let Some([cx, cy]) = map.get(y, x) {
                    p.tx.push(x as f64);
                    p.ty.push(y as f64);
                    p.sx.push(cx as f64);
                    p.sy.push(cy as f64);
                }
            }
        }
        p
    }

    fn len(&self) -> usize {
        self.tx.len()
    }
}

/// Pre-extracted model coefficients for the symmetric transfer test.
struct Transfer {
    f: [f64; 9],
    b: [f64; 9],
    thr2: f64,
}

impl Transfer {
    fn new(h: &Homography, threshold: f64) -> Option<Self> {
        let inv = h.inverse().ok()?;
        Some(Self {
            f: h.to_array(),
            b: inv.to_array(),
            thr2: threshold * threshold,
        })
    }

    /// `‖H t − s‖² + ‖H⁻¹ s − t‖² ≤ thr²`, with the forward term checked first.
    #[inline(always)]
    fn is_inlier(&self, tx: f64, ty: f64, sx: f64, sy: f64) -> bool {
        let f = &self.f;
        let w = f[6] * tx + f[7] * ty + f[8];
        if w.abs() < 1e-12 {
            return false;
        }
        let ex = (f[0] * tx + f[1] * ty + f[2]) / w - sx;
        let ey = (f[3] * tx + f[4] * ty + f[5]) / w - sy;
        let fwd = ex * ex + ey * ey;
        if !(fwd <= self.thr2) {
            return false;
        }
        let b = &self.b;
        let w = b[6] * sx + b[7] * sy + b[8];
        if w.abs() < 1e-12 {
            return false;
        }
        let bx = (b[0] * sx + b[1] * sy + b[2]) / w - tx;
        let by = (b[3] * sx + b[4] * sy + b[5]) / w - ty;
        fwd + bx * bx + by * by <= self.thr2
    }
}

fn count_inliers(t: &Transfer, p: &Points, must_beat: usize) -> usize {
    let n = p.len();
    let mut count = 0usize;
    for i in 0..n {
        if t.is_inlier(p.tx[i], p.ty[i], p.sx[i], p.sy[i]) {
            count += 1;
        } else if count + (n - i - 1) <= must_beat {
            // cannot strictly exceed the incumbent any more
            return count;
        }
    }
    count
}

fn full_grid_inliers(map: &CorrespondenceMap, model: &Homography, threshold: f64) -> (Mask, Vec<PointPair>) {
    let mut mask = Mask::new(map.height(), map.width());
    let mut pairs = Vec::new();
    if let Some(t) = Transfer::new(model, threshold) {
        for y in 0..map.height() {
            for x in 0..map.width() {
                if let Some([cx, cy]) = map.get(y, x) {
                    if t.is_inlier(x as f64, y as f64, cx as f64, cy as f64) {
                        mask.set(y, x, true);
                        pairs.push(([x as f64, y as f64], [cx as f64, cy as f64]));
                    }
                }
            }
        }
    }
    (mask, pairs)
}

/// Robust homography from the target grid of `map` to its source frame.
///
/// Minimal samples of four subgrid correspondences are drawn from a ChaCha8
/// stream seeded with `config.seed`. The hypothesis with the most subgrid
/// inliers wins (earlier iterations win ties), is refit by DLT on its inliers
/// over the full grid, and the refit model defines the returned mask.
pub fn ransac_homography(map: &CorrespondenceMap, config: &RansacConfig) -> Result<RansacOutput> {
    config.validate()?;
    let no_model = || RansacOutput {
        model: None,
        inliers: Mask::new(map.height(), map.width()),
    };
    if map.valid_count() < config.min_inliers.max(4) {
        return Ok(no_model());
    }
    let pts = Points::collect(map, config.sample_stride);
    let n = pts.len();
    if n < 4 {
        return Ok(no_model());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(Homography, usize)> = None;
    for _ in 0..config.iterations {
        let mut idx = [0usize; 4];
        for k in 0..4 {
            loop {
                let c = rng.gen_range(0..n);
                if !idx[..k].contains(&c) {
                    idx[k] = c;
                    break;
                }
            }
        }
        let from = idx.map(|i| [pts.tx[i], pts.ty[i]]);
        let to = idx.map(|i| [pts.sx[i], pts.sy[i]]);
        let Some(h) = four_point(&from, &to) else {
            continue;
        };
        let Some(t) = Transfer::new(&h, config.inlier_threshold) else {
            continue;
        };
        let incumbent = best.as_ref().map_or(0, |b| b.1);
        let count = count_inliers(&t, &pts, incumbent);
        if count > incumbent {
            best = Some((h, count));
        }
    }
    let Some((hypothesis, _)) = best else {
        return Ok(no_model());
    };

    let (_, support) = full_grid_inliers(map, &hypothesis, config.inlier_threshold);
    let model = fit_homography_dlt(&support).unwrap_or(hypothesis);
    let (mask, _) = full_grid_inliers(map, &model, config.inlier_threshold);
    if mask.count() < config.min_inliers {
        return Ok(no_model());
    }
    Ok(RansacOutput {
        model: Some(model),
        inliers: mask,
    })
}
