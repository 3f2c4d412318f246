//! Training-free dense matching between two images.
//!
//! Coarse correspondences come from an exhaustive correlation of the coarsest
//! pyramid level, filtered by neighbourhood consensus and decoded by argmax.
//! Each finer level upsamples the previous map and searches a small window
//! around the prior for the best descriptor match, with parabolic subpixel
//! refinement. Every level's map is median-filtered to suppress isolated
//! mismatches. Matching runs in both directions.

mod consensus;
mod correlation;
mod refine;

use serde::{Deserialize, Serialize};

pub use consensus::neighborhood_consensus;
pub use correlation::{global_correlation, Correlation4D, SENTINEL};
pub use refine::{decode_coarse_map, median_filter, parabola_offset, refine_level};

use crate::cmap::CorrespondenceMap;
use crate::error::{Error, Result};
use crate::image::{resize_image, Image};
use crate::pyramid::{build_pyramid, DescriptorConfig, FeaturePyramid};

/// Side length of the square working resolution used for dense matching.
pub const WORKING_SIZE: usize = 240;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchConfig {
    pub refine_radius: usize,
    pub nc_neighborhood: usize,
    pub subpixel: bool,
    /// Half-width of the median filter applied to the decoded coarse map and
    /// after every refinement. 0 disables it.
    pub median_radius: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            refine_radius: 4,
            nc_neighborhood: 7,
            subpixel: true,
            median_radius: 3,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.refine_radius < 1 {
            return Err(Error::Config("refine_radius must be >= 1".into()));
        }
        if self.nc_neighborhood == 0 || self.nc_neighborhood % 2 == 0 {
            return Err(Error::Config(format!(
                "nc_neighborhood must be odd and >= 1, got {}",
                self.nc_neighborhood
            )));
        }
        Ok(())
    }
}

/// Forward and backward maps for one image pair.
#[derive(Debug, Clone)]
pub struct DenseMatch {
    /// On B's grid, pointing into A.
    pub ab: CorrespondenceMap,
    /// On A's grid, pointing into B.
    pub ba: CorrespondenceMap,
}

/// Grayscale working-resolution copy of `image`.
pub fn to_working(image: &Image) -> Result<Image> {
    let gray = image.to_gray();
    if gray.height() == WORKING_SIZE && gray.width() == WORKING_SIZE {
        return Ok(gray);
    }
    resize_image(&gray, WORKING_SIZE, WORKING_SIZE)
}

/// A working image together with its descriptor pyramid, reusable across pairs.
#[derive(Debug, Clone)]
pub struct PreparedImage {
    pub image: Image,
    pub pyramid: FeaturePyramid,
    /// Constant images cannot be matched.
    pub degenerate: bool,
}

impl PreparedImage {
    pub fn new(image: &Image, descriptor: &DescriptorConfig) -> Result<Self> {
        let working = to_working(image)?;
        let pyramid = build_pyramid(&working, descriptor)?;
        Ok(Self {
            degenerate: working.is_constant(),
            image: working,
            pyramid,
        })
    }
}

/// Map on `target`'s finest grid pointing into `source`.
pub fn match_one_way(
    source: &FeaturePyramid,
    target: &FeaturePyramid,
    config: &MatchConfig,
) -> Result<CorrespondenceMap> {
    let corr = global_correlation(source.coarsest(), target.coarsest())?;
    let filtered = neighborhood_consensus(&corr, config.nc_neighborhood)?;
    let coarse = source.coarsest();
    let mut map = median_filter(
        &decode_coarse_map(&filtered, config.subpixel),
        config.median_radius,
        (coarse.height(), coarse.width()),
    );
    for (fa, fb) in source.levels().iter().zip(target.levels()).skip(1) {
        map = refine_level(&map, fa, fb, config.refine_radius, config.subpixel)?;
        map = median_filter(&map, config.median_radius, (fa.height(), fa.width()));
    }
    Ok(map)
}

/// Dense matching of two prepared images in both directions.
pub fn match_prepared(a: &PreparedImage, b: &PreparedImage, config: &MatchConfig) -> Result<DenseMatch> {
    config.validate()?;
    let (ha, wa) = (a.image.height(), a.image.width());
    let (hb, wb) = (b.image.height(), b.image.width());
    if a.degenerate || b.degenerate {
        return Ok(DenseMatch {
            ab: CorrespondenceMap::invalid(hb, wb),
            ba: CorrespondenceMap::invalid(ha, wa),
        });
    }
    let (ab, ba) = rayon::join(
        || match_one_way(&a.pyramid, &b.pyramid, config),
        || match_one_way(&b.pyramid, &a.pyramid, config),
    );
    Ok(DenseMatch { ab: ab?, ba: ba? })
}

/// Full pipeline: resize both images to the working resolution, build
/// pyramids, and estimate `O_AB` and `O_BA`.
pub fn match_dense(
    a: &Image,
    b: &Image,
    config: &MatchConfig,
    descriptor: &DescriptorConfig,
) -> Result<DenseMatch> {
    config.validate()?;
    let (pa, pb) = rayon::join(
        || PreparedImage::new(a, descriptor),
        || PreparedImage::new(b, descriptor),
    );
    match_prepared(&pa?, &pb?, config)
}
