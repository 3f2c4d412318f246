//! Deterministic multi-resolution dense descriptors.
//!
//! Each pixel gets a Gaussian-weighted histogram of gradient orientations over
//! a square window, optionally followed by the weighted local mean and
//! standard deviation of intensity, then L2-normalized:
//!
//! ```text
//! g = ((I[y][x+1] - I[y][x-1]) / 2, (I[y+1][x] - I[y-1][x]) / 2)   replicate border
//! w(dx, dy) = exp(-(dx² + dy²) / (2σ²)),  |dx|, |dy| <= radius, in-image only
//! hist[k] = Σ w · |g| · softbin_k(atan2(gy, gx))     signed angle, bin centers at k·2π/B
//! mean = Σ w I / Σ w,   std = sqrt(max(0, Σ w I² / Σ w - mean²))
//! ```
//!
//! The pyramid halves the working image four times, giving five levels
//! (15, 30, 60, 120 and 240 pixels on a side for the 240×240 working size).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{normalize_in_place, FeatureMap, GlobalDescriptor};
use crate::image::{resize_image, Image};

pub const PYRAMID_LEVELS: usize = 5;

/// Generalized-mean pooling exponent for the global descriptor.
pub const GEM_POWER: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescriptorConfig {
    pub orientation_bins: usize,
    pub window_radius: usize,
    pub gaussian_sigma: f64,
    pub include_intensity_stats: bool,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            orientation_bins: 8,
            window_radius: 4,
            gaussian_sigma: 2.0,
            include_intensity_stats: true,
        }
    }
}

impl DescriptorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.orientation_bins < 4 {
            return Err(Error::Config(format!(
                "orientation_bins must be >= 4, got {}",
                self.orientation_bins
            )));
        }
        if self.window_radius < 1 {
            return Err(Error::Config("window_radius must be >= 1".into()));
        }
        if !(self.gaussian_sigma.is_finite() && self.gaussian_sigma > 0.0) {
            return Err(Error::Config("gaussian_sigma must be positive".into()));
        }
        Ok(())
    }

    pub fn descriptor_len(&self) -> usize {
        self.orientation_bins + if self.include_intensity_stats { 2 } else { 0 }
    }

    /// 1D window weights `exp(-d² / 2σ²)` for `d = -radius..=radius`.
    pub(crate) fn kernel(&self) -> Vec<f64> {
        let r = self.window_radius as i64;
        let s2 = 2.0 * self.gaussian_sigma * self.gaussian_sigma;
        (-r..=r).map(|d| (-(d * d) as f64 / s2).exp()).collect()
    }
}

/// Descriptor maps at every level, coarsest first.
#[derive(Debug, Clone)]
pub struct FeaturePyramid {
    levels: Vec<FeatureMap>,
}

impl FeaturePyramid {
    pub fn from_levels(levels: Vec<FeatureMap>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidInput("pyramid without levels".into()));
        }
        let c = levels[0].channels();
        if let Some(bad) = levels.iter().find(|l| l.channels() != c) {
            return Err(Error::ChannelMismatch {
                left: c,
                right: bad.channels(),
            });
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[FeatureMap] {
        &self.levels
    }

    pub fn coarsest(&self) -> &FeatureMap {
        &self.levels[0]
    }

    pub fn finest(&self) -> &FeatureMap {
        self.levels.last().unwrap()
    }

    pub fn level_resolutions(&self) -> Vec<(usize, usize)> {
        self.levels.iter().map(|l| (l.height(), l.width())).collect()
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Per-pixel signed orientation soft-binning: returns `(bin0, bin1, weight1)`.
#[inline]
pub(crate) fn soft_bin(gx: f32, gy: f32, bins: usize) -> (usize, usize, f32) {
    let mut angle = (gy as f64).atan2(gx as f64);
    if angle < 0.0 {
        angle += std::f64::consts::TAU;
    }
    let pos = angle / std::f64::consts::TAU * bins as f64;
    let k0 = pos.floor();
    let frac = (pos - k0) as f32;
    let k0 = (k0 as usize) % bins;
    (k0, (k0 + 1) % bins, frac)
}

#[inline]
pub(crate) fn gradient(image: &Image, y: usize, x: usize) -> (f32, f32) {
    let (h, w) = (image.height(), image.width());
    let xl = x.saturating_sub(1);
    let xr = (x + 1).min(w - 1);
    let yu = y.saturating_sub(1);
    let yd = (y + 1).min(h - 1);
    (
        (image.get(y, xr, 0) - image.get(y, xl, 0)) * 0.5,
        (image.get(yd, x, 0) - image.get(yu, x, 0)) * 0.5,
    )
}

/// Unnormalized dense descriptors of a grayscale image.
pub fn dense_descriptors_raw(image: &Image, config: &DescriptorConfig) -> Result<FeatureMap> {
    config.validate()?;
    if image.channels() != 1 {
        return Err(Error::InvalidInput("descriptors need a grayscale image".into()));
    }
    let (h, w) = (image.height(), image.width());
    let bins = config.orientation_bins;
    let stats = config.include_intensity_stats;
    let planes = bins + if stats { 3 } else { 0 };

    // pointwise planes: orientation contributions, then [1, I, I²]
    let mut point = vec![0.0f64; h * w * planes];
    point.par_chunks_mut(w * planes).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let px = &mut row[x * planes..(x + 1) * planes];
            let (gx, gy) = gradient(image, y, x);
            let mag = ((gx * gx + gy * gy) as f64).sqrt();
            if mag > 0.0 {
                let (k0, k1, f) = soft_bin(gx, gy, bins);
                let f = f as f64;
                px[k0] += mag * (1.0 - f);
                px[k1] += mag * f;
            }
            if stats {
                let v = image.get(y, x, 0) as f64;
                px[bins] = 1.0;
                px[bins + 1] = v;
                px[bins + 2] = v * v;
            }
        }
    });

    let kernel = config.kernel();
    let smoothed = separable_window_sum(&point, h, w, planes, &kernel);

    let len = config.descriptor_len();
    let mut out = vec![0.0f32; h * w * len];
    out.par_chunks_mut(len).enumerate().for_each(|(i, d)| {
        let s = &smoothed[i * planes..(i + 1) * planes];
        for (o, &v) in d[..bins].iter_mut().zip(&s[..bins]) {
            *o = v as f32;
        }
        if stats {
            let (s0, s1, s2) = (s[bins], s[bins + 1], s[bins + 2]);
            let mean = s1 / s0;
            let var = (s2 / s0 - mean * mean).max(0.0);
            d[bins] = mean as f32;
            d[bins + 1] = var.sqrt() as f32;
        }
    });
    FeatureMap::new(h, w, len, out)
}

/// Unit-normalized dense descriptors of a grayscale image.
pub fn dense_descriptors(image: &Image, config: &DescriptorConfig) -> Result<FeatureMap> {
    Ok(dense_descriptors_raw(image, config)?.normalized())
}

/// Zero-padded separable window sum over interleaved planes.
fn separable_window_sum(src: &[f64], h: usize, w: usize, planes: usize, kernel: &[f64]) -> Vec<f64> {
    let r = kernel.len() / 2;
    let mut horiz = vec![0.0f64; src.len()];
    horiz.par_chunks_mut(w * planes).enumerate().for_each(|(y, row)| {
        let srow = &src[y * w * planes..(y + 1) * w * planes];
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            let out = &mut row[x * planes..(x + 1) * planes];
            for xx in lo..=hi {
                let k = kernel[xx + r - x];
                let s = &srow[xx * planes..(xx + 1) * planes];
                for p in 0..planes {
                    out[p] += k * s[p];
                }
            }
        }
    });
    let mut out = vec![0.0f64; src.len()];
    out.par_chunks_mut(w * planes).enumerate().for_each(|(y, row)| {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for yy in lo..=hi {
            let k = kernel[yy + r - y];
            let s = &horiz[yy * w * planes..(yy + 1) * w * planes];
            for (o, v) in row.iter_mut().zip(s) {
                *o += k * v;
            }
        }
    });
    out
}

/// Build the five-level pyramid from a grayscale working image whose sides are
/// multiples of 16.
pub fn build_pyramid(image: &Image, config: &DescriptorConfig) -> Result<FeaturePyramid> {
    config.validate()?;
    let factor = 1 << (PYRAMID_LEVELS - 1);
    if image.height() % factor != 0 || image.width() % factor != 0 {
        return Err(Error::InvalidInput(format!(
            "working image {}x{} is not divisible by {factor}",
            image.height(),
            image.width()
        )));
    }
    let gray = image.to_gray();
    // finest first, each level a 2x box-downscale of the previous one
    let mut images = vec![gray];
    for _ in 1..PYRAMID_LEVELS {
        let prev = images.last().unwrap();
        let next = downscale_half(prev);
        images.push(next);
    }
    images.reverse();
    let levels = images
        .par_iter()
        .map(|img| dense_descriptors(img, config))
        .collect::<Result<Vec<_>>>()?;
    FeaturePyramid::from_levels(levels)
}

fn downscale_half(image: &Image) -> Image {
    let (h, w) = (image.height() / 2, image.width() / 2);
    if h >= crate::image::MIN_SIDE && w >= crate::image::MIN_SIDE {
        return resize_image(image, h, w).expect("target checked");
    }
    // below the resampler's minimum side, a pixel-center half-scale is a 2x2 block mean
    Image::from_fn(h, w, |y, x| {
        let s = image.get(2 * y, 2 * x, 0)
            + image.get(2 * y, 2 * x + 1, 0)
            + image.get(2 * y + 1, 2 * x, 0)
            + image.get(2 * y + 1, 2 * x + 1, 0);
        s * 0.25
    })
}

/// Upsample every level to `target` resolution, normalize each level's part,
/// concatenate and renormalize.
pub fn extract_hypercolumn(pyramid: &FeaturePyramid, target: (usize, usize)) -> Result<FeatureMap> {
    let (th, tw) = target;
    let coarse = pyramid.coarsest();
    if th < coarse.height() || tw < coarse.width() {
        return Err(Error::InvalidInput(format!(
            "hypercolumn target {th}x{tw} below coarsest level {}x{}",
            coarse.height(),
            coarse.width()
        )));
    }
    let widths: Vec<usize> = pyramid.levels().iter().map(|l| l.channels()).collect();
    let total: usize = widths.iter().sum();
    let taps: Vec<(Vec<(usize, usize, f32)>, Vec<(usize, usize, f32)>)> = pyramid
        .levels()
        .iter()
        .map(|l| {
            (
                (0..th).map(|i| clamp_taps(i, l.height(), th)).collect(),
                (0..tw).map(|i| clamp_taps(i, l.width(), tw)).collect(),
            )
        })
        .collect();

    let mut values = vec![0.0f32; th * tw * total];
    values.par_chunks_mut(tw * total).enumerate().for_each(|(y, row)| {
        for x in 0..tw {
            let px = &mut row[x * total..(x + 1) * total];
            let mut offset = 0;
            for (li, level) in pyramid.levels().iter().enumerate() {
                let c = widths[li];
                let part = &mut px[offset..offset + c];
                let (y0, y1, fy) = taps[li].0[y];
                let (x0, x1, fx) = taps[li].1[x];
                let corners = [
                    (level.pixel(y0, x0), (1.0 - fx) * (1.0 - fy)),
                    (level.pixel(y0, x1), fx * (1.0 - fy)),
                    (level.pixel(y1, x0), (1.0 - fx) * fy),
                    (level.pixel(y1, x1), fx * fy),
                ];
                for (v, wgt) in corners {
                    if wgt != 0.0 {
                        for (p, &s) in part.iter_mut().zip(v) {
                            *p += wgt * s;
                        }
                    }
                }
                normalize_in_place(part);
                offset += c;
            }
            normalize_in_place(px);
        }
    });
    let mut map = FeatureMap::new(th, tw, total, values)?;
    map.set_unit_normalized(true);
    Ok(map)
}

fn clamp_taps(i: usize, src_len: usize, dst_len: usize) -> (usize, usize, f32) {
    let s = crate::image::resample_coord(i, src_len, dst_len).clamp(0.0, (src_len - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, (s - i0 as f64) as f32)
}

/// Generalized-mean pooling (p = 3) of the coarsest level, L2-normalized.
pub fn compute_global_descriptor(pyramid: &FeaturePyramid) -> Result<GlobalDescriptor> {
    let level = pyramid.coarsest();
    let c = level.channels();
    let n = (level.height() * level.width()) as f64;
    let mut acc = vec![0.0f64; c];
    for px in level.values().chunks(c) {
        for (a, &v) in acc.iter_mut().zip(px) {
            *a += (v.max(0.0) as f64).powf(GEM_POWER);
        }
    }
    let pooled = acc
        .iter()
        .map(|&s| (s / n).powf(1.0 / GEM_POWER) as f32)
        .collect();
    GlobalDescriptor::from_unnormalized(pooled)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(h: usize, w: usize, seed: u64) -> Image {
        let mut s = seed;
        let mut noise = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 40) as f32 / (1u64 << 24) as f32
        };
        let v: Vec<f32> = (0..h * w).map(|_| noise()).collect();
        Image::new(h, w, 1, v).unwrap()
    }

    #[test]
    fn constant_image_carries_only_mean() {
        let cfg = DescriptorConfig::default();
        let f = dense_descriptors(&Image::constant(16, 16, 0.4), &cfg).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let d = f.pixel(y, x);
                assert!(d[..8].iter().all(|&v| v == 0.0));
                assert!((d[8] - 1.0).abs() < 1e-6 && d[9].abs() < 1e-6);
            }
        }
        let no_stats = DescriptorConfig {
            include_intensity_stats: false,
            ..cfg
        };
        let f = dense_descriptors(&Image::constant(16, 16, 0.4), &no_stats).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_step_edge_is_horizontal_and_symmetric() {
        let img = Image::from_fn(20, 20, |_, x| if x < 10 { 0.2 } else { 0.8 });
        let cfg = DescriptorConfig::default();
        let raw = dense_descriptors_raw(&img, &cfg).unwrap();
        for y in 0..20 {
            for d in 0..5 {
                let left = raw.pixel(y, 9 - d);
                let right = raw.pixel(y, 10 + d);
                for k in 0..8 {
                    assert!((left[k] - right[k]).abs() < 1e-6);
                }
                // all orientation mass in bin 0 (rightward gradient)
                let mass: f32 = left[..8].iter().sum();
                assert!(mass > 0.0);
                assert!((left[0] - mass).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pyramid_has_five_unit_levels() {
        let img = textured(240, 240, 9);
        let p = build_pyramid(&img, &DescriptorConfig::default()).unwrap();
        assert_eq!(
            p.level_resolutions(),
            vec![(15, 15), (30, 30), (60, 60), (120, 120), (240, 240)]
        );
        assert!(p.levels().iter().all(|l| l.norms_ok() && l.is_unit_normalized()));
    }

    #[test]
    fn single_level_hypercolumn_is_identity() {
        let img = textured(16, 16, 4);
        let level = dense_descriptors(&img, &DescriptorConfig::default()).unwrap();
        let p = FeaturePyramid::from_levels(vec![level.clone()]).unwrap();
        let hc = extract_hypercolumn(&p, (16, 16)).unwrap();
        for (a, b) in hc.values().iter().zip(level.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn identical_unit_levels_split_by_sqrt2() {
        let img = textured(16, 16, 5);
        let level = dense_descriptors(&img, &DescriptorConfig::default()).unwrap();
        let p = FeaturePyramid::from_levels(vec![level.clone(), level.clone()]).unwrap();
        let hc = extract_hypercolumn(&p, (16, 16)).unwrap();
        let s = std::f32::consts::FRAC_1_SQRT_2;
        for y in 0..16 {
            for x in 0..16 {
                let want = level.pixel(y, x);
                let got = hc.pixel(y, x);
                for k in 0..10 {
                    assert!((got[k] - want[k] * s).abs() < 1e-6);
                    assert!((got[k + 10] - want[k] * s).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn hypercolumn_rejects_target_below_coarsest() {
        let p = build_pyramid(&textured(64, 64, 1), &DescriptorConfig::default()).unwrap();
        assert!(extract_hypercolumn(&p, (3, 4)).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = DescriptorConfig {
            orientation_bins: 3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = DescriptorConfig {
            window_radius: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
