use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{dot, FeatureMap};

/// Score assigned to pairs involving a texture-free (all-zero) descriptor.
pub const SENTINEL: f32 = f32::NEG_INFINITY;

/// Dense 4D score volume indexed `(t_y, t_x, s_y, s_x)`: target cells are rows,
/// source cells are columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation4D {
    pub(crate) target: (usize, usize),
    pub(crate) source: (usize, usize),
    pub(crate) scores: Vec<f32>,
}

impl Correlation4D {
    pub fn from_scores(target: (usize, usize), source: (usize, usize), scores: Vec<f32>) -> Result<Self> {
        if scores.len() != target.0 * target.1 * source.0 * source.1 {
            return Err(Error::DimensionMismatch(format!(
                "{} scores for a {target:?} x {source:?} volume",
                scores.len()
            )));
        }
        Ok(Self {
            target,
            source,
            scores,
        })
    }

    /// `(height, width)` of the target grid.
    pub fn target_dims(&self) -> (usize, usize) {
        self.target
    }

    /// `(height, width)` of the source grid.
    pub fn source_dims(&self) -> (usize, usize) {
        self.source
    }

    pub fn target_len(&self) -> usize {
        self.target.0 * self.target.1
    }

    pub fn source_len(&self) -> usize {
        self.source.0 * self.source.1
    }

    pub fn scores(&self) -> &[f32] {
        &self.scores
    }

    #[inline]
    pub fn get(&self, ty: usize, tx: usize, sy: usize, sx: usize) -> f32 {
        self.scores[(ty * self.target.1 + tx) * self.source_len() + sy * self.source.1 + sx]
    }

    /// Row of scores for flattened target index `t`.
    #[inline]
    pub fn row(&self, t: usize) -> &[f32] {
        let n = self.source_len();
        &self.scores[t * n..(t + 1) * n]
    }

    /// Volume with target and source roles swapped.
    pub fn transposed(&self) -> Correlation4D {
        let (nt, ns) = (self.target_len(), self.source_len());
        let mut scores = vec![0.0; nt * ns];
        for t in 0..nt {
            for s in 0..ns {
                scores[s * nt + t] = self.scores[t * ns + s];
            }
        }
        Correlation4D {
            target: self.source,
            source: self.target,
            scores,
        }
    }
}

/// Exhaustive cosine similarity between every target cell of `target` and
/// every source cell of `source`. Both maps must be unit-normalized.
pub fn global_correlation(source: &FeatureMap, target: &FeatureMap) -> Result<Correlation4D> {
    if source.channels() != target.channels() {
        return Err(Error::ChannelMismatch {
            left: source.channels(),
            right: target.channels(),
        });
    }
    let ns = source.height() * source.width();
    let c = source.channels();
    let src_zero: Vec<bool> = source
        .values()
        .chunks(c.max(1))
        .map(|p| p.iter().all(|&v| v == 0.0))
        .collect();
    let mut scores = vec![0.0f32; target.height() * target.width() * ns];
    scores.par_chunks_mut(ns).enumerate().for_each(|(t, row)| {
        let tv = &target.values()[t * c..(t + 1) * c];
        let t_zero = tv.iter().all(|&v| v == 0.0);
        for (s, out) in row.iter_mut().enumerate() {
            *out = if t_zero || src_zero[s] {
                SENTINEL
            } else {
                dot(tv, &source.values()[s * c..(s + 1) * c])
            };
        }
    });
    Ok(Correlation4D {
        target: (target.height(), target.width()),
        source: (source.height(), source.width()),
        scores,
    })
}
