//! Geometric verification of dense correspondences.
//!
//! RANSAC fits a homography to each direction's map; the inliers that also
//! survive the forward-backward check form `C`. `S` combines the two counts,
//! `S_L` measures hypercolumn agreement over the cyclically consistent pixels,
//! and `S_F` fuses both with the global dissimilarity `G`.

mod cyclic;
mod homography;
mod ransac;
mod scores;

use serde::{Deserialize, Serialize, Serializer};

pub use cyclic::{cyclic_coverage, cyclic_mask};
pub use homography::{fit_homography_dlt, Homography, PointPair};
pub(crate) use homography::four_point;
pub use ransac::{ransac_homography, RansacConfig, RansacOutput};
pub use scores::{
    s_f_inverted, score_G, score_S, score_S_F, score_S_L, score_variant, Variant, VariantInputs,
};

use crate::cmap::{CorrespondenceMap, Mask};
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::matcher::{match_prepared, MatchConfig, PreparedImage};
use crate::pyramid::{compute_global_descriptor, extract_hypercolumn};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub ransac: RansacConfig,
    /// Round-trip tolerance in working-resolution pixels.
    pub cyclic_epsilon: f64,
    /// `β` of the structural score; `None` uses the map's pixel count.
    pub beta: Option<f64>,
    /// Side of the square grid at which hypercolumns are compared.
    pub hypercolumn_size: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            ransac: RansacConfig::default(),
            cyclic_epsilon: 2.0,
            beta: None,
            hypercolumn_size: 480,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        self.ransac.validate()?;
        if !(self.cyclic_epsilon > 0.0 && self.cyclic_epsilon.is_finite()) {
            return Err(Error::Config("cyclic_epsilon must be positive".into()));
        }
        if let Some(b) = self.beta {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Config("beta must be positive".into()));
            }
        }
        if self.hypercolumn_size == 0 {
            return Err(Error::Config("hypercolumn_size must be positive".into()));
        }
        Ok(())
    }

    fn beta_for(&self, map: &CorrespondenceMap) -> f64 {
        self.beta.unwrap_or((map.height() * map.width()) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Scored on `O_AB` (B's grid).
    AToB,
    /// Scored on `O_BA` (A's grid).
    BToA,
}

/// One direction's RANSAC and cyclic-consistency outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationResult {
    pub direction: Direction,
    pub homography: Option<Homography>,
    /// `I`.
    pub inliers: Mask,
    /// Forward-backward consistent pixels, regardless of the model.
    pub cyclic: Mask,
    /// `C = cyclic ∧ I`.
    pub consistent: Mask,
}

impl VerificationResult {
    pub fn inlier_count(&self) -> usize {
        self.inliers.count()
    }

    pub fn consistent_count(&self) -> usize {
        self.consistent.count()
    }
}

/// Verify one direction: `map` is scored, `reverse` closes the cycle.
pub fn verify_direction(
    map: &CorrespondenceMap,
    reverse: &CorrespondenceMap,
    direction: Direction,
    config: &VerifyConfig,
) -> Result<VerificationResult> {
    let RansacOutput { model, inliers } = ransac_homography(map, &config.ransac)?;
    let cyclic = cyclic_mask(map, reverse, config.cyclic_epsilon);
    let consistent = cyclic.and(&inliers)?;
    Ok(VerificationResult {
        direction,
        homography: model,
        inliers,
        cyclic,
        consistent,
    })
}

/// Structural score of a pair in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct PairStructure {
    /// `max(S_A, S_B)`.
    pub s: f64,
    pub s_a: f64,
    pub s_b: f64,
    pub forward: VerificationResult,
    pub backward: VerificationResult,
}

impl PairStructure {
    /// The direction that produced `S` (forward on ties).
    pub fn best(&self) -> &VerificationResult {
        if self.s_b > self.s_a {
            &self.backward
        } else {
            &self.forward
        }
    }
}

/// `S = max(S_A, S_B)` from the two maps of a pair.
#[allow(non_snake_case)]
pub fn score_pair_S(
    ab: &CorrespondenceMap,
    ba: &CorrespondenceMap,
    config: &VerifyConfig,
) -> Result<PairStructure> {
    config.validate()?;
    let (forward, backward) = rayon::join(
        || verify_direction(ab, ba, Direction::AToB, config),
        || verify_direction(ba, ab, Direction::BToA, config),
    );
    let (forward, backward) = (forward?, backward?);
    let s_a = score_S(forward.inlier_count(), forward.consistent_count(), config.beta_for(ab));
    let s_b = score_S(backward.inlier_count(), backward.consistent_count(), config.beta_for(ba));
    Ok(PairStructure {
        s: s_a.max(s_b),
        s_a,
        s_b,
        forward,
        backward,
    })
}

fn serialize_score<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

/// Full score record for one image pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct PairScores {
    pub G: f64,
    pub S: f64,
    pub S_A: f64,
    pub S_B: f64,
    pub S_L: f64,
    /// `null` in JSON when `S_L · S = 0`.
    #[serde(serialize_with = "serialize_score")]
    pub S_F: f64,
    /// `S_L · S ∈ (0, 1)`; see [`s_f_inverted`].
    pub inverted_regime: bool,
    /// `|I|` of the direction that produced `S`.
    pub inliers: usize,
    /// `|C|` of the direction that produced `S`.
    pub consistent: usize,
    /// Row-major homography of that direction, if any.
    pub model: Option<[f64; 9]>,
}

impl PairScores {
    pub fn variant_inputs(&self) -> VariantInputs {
        VariantInputs {
            inliers: self.inliers,
            consistent: self.consistent,
            s: self.S,
            s_l: self.S_L,
            g: self.G,
        }
    }
}

/// `S_L` at hypercolumn resolution, using the forward map and its cyclic mask.
pub fn local_similarity(
    hyper_a: &FeatureMap,
    hyper_b: &FeatureMap,
    structure: &PairStructure,
    ab: &CorrespondenceMap,
    a_working: (usize, usize),
) -> Result<f64> {
    score_S_L(hyper_a, hyper_b, ab, a_working, &structure.forward.cyclic)
}

/// Hypercolumns of a prepared image at the configured size.
pub fn hypercolumns(image: &PreparedImage, config: &VerifyConfig) -> Result<FeatureMap> {
    extract_hypercolumn(&image.pyramid, (config.hypercolumn_size, config.hypercolumn_size))
}

/// Assemble the score record from a structural result, `S_L` and `G`.
pub fn pair_scores(structure: &PairStructure, s_l: f64, g: f64) -> PairScores {
    let best = structure.best();
    PairScores {
        G: g,
        S: structure.s,
        S_A: structure.s_a,
        S_B: structure.s_b,
        S_L: s_l,
        S_F: score_S_F(s_l, structure.s, g),
        inverted_regime: s_f_inverted(s_l, structure.s),
        inliers: best.inlier_count(),
        consistent: best.consistent_count(),
        model: best.homography.map(|h| h.to_array()),
    }
}

/// Match and fully score a pair of prepared images. `G` comes from the
/// pyramids' global descriptors.
pub fn verify_pair(
    a: &PreparedImage,
    b: &PreparedImage,
    match_config: &MatchConfig,
    config: &VerifyConfig,
) -> Result<PairScores> {
    let dense = match_prepared(a, b, match_config)?;
    let structure = score_pair_S(&dense.ab, &dense.ba, config)?;
    let (ha, hb) = rayon::join(|| hypercolumns(a, config), || hypercolumns(b, config));
    let a_dims = (a.image.height(), a.image.width());
    let s_l = local_similarity(&ha?, &hb?, &structure, &dense.ab, a_dims)?;
    let g = score_G(
        &compute_global_descriptor(&a.pyramid)?,
        &compute_global_descriptor(&b.pyramid)?,
    )?;
    Ok(pair_scores(&structure, s_l, g))
}
