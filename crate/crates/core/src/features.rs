//! Dense feature maps and whole-image descriptors.

use crate::error::{Error, Result};
use crate::sample::Grid;

/// Tolerance on per-pixel unit norms.
pub const UNIT_NORM_TOL: f32 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f32>,
    unit_normalized: bool,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} feature values for {height}x{width}x{channels}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            values,
            unit_normalized: false,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            values: vec![0.0; height * width * channels],
            unit_normalized: false,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        self.unit_normalized = false;
        &mut self.values
    }

    pub fn is_unit_normalized(&self) -> bool {
        self.unit_normalized
    }

    /// Channel vector at `(y, x)`.
    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let base = (y * self.width + x) * self.channels;
        &self.values[base..base + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [f32] {
        let base = (y * self.width + x) * self.channels;
        &mut self.values[base..base + self.channels]
    }

    /// L2-normalize every pixel in place; all-zero pixels stay zero.
    pub fn normalize_pixels(&mut self) {
        if self.channels > 0 {
            for px in self.values.chunks_mut(self.channels) {
                normalize_in_place(px);
            }
        }
        self.unit_normalized = true;
    }

    pub fn normalized(mut self) -> Self {
        self.normalize_pixels();
        self
    }

    /// True when the pixel's descriptor is the all-zero vector.
    #[inline]
    pub fn is_zero(&self, y: usize, x: usize) -> bool {
        self.pixel(y, x).iter().all(|&v| v == 0.0)
    }

    /// Checks the unit-norm invariant: every pixel norm is 0 or within tolerance of 1.
    pub fn norms_ok(&self) -> bool {
        self.values.chunks(self.channels.max(1)).all(|px| {
            let n = px.iter().map(|v| v * v).sum::<f32>().sqrt();
            n == 0.0 || (n - 1.0).abs() <= UNIT_NORM_TOL
        })
    }

    pub(crate) fn set_unit_normalized(&mut self, flag: bool) {
        self.unit_normalized = flag;
    }
}

impl Grid for FeatureMap {
    fn grid_height(&self) -> usize {
        self.height
    }
    fn grid_width(&self) -> usize {
        self.width
    }
    fn grid_channels(&self) -> usize {
        self.channels
    }
    #[inline]
    fn cell(&self, y: usize, x: usize, c: usize) -> f32 {
        self.values[(y * self.width + x) * self.channels + c]
    }
}

/// Normalize in place; returns the original norm. Zero vectors are left untouched.
#[inline]
pub fn normalize_in_place(v: &mut [f32]) -> f32 {
    let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if norm > 0.0 {
        let inv = 1.0 / norm;
        for x in v.iter_mut() {
            *x = (*x as f64 * inv) as f32;
        }
    }
    norm as f32
}

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit-norm whole-image descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalDescriptor {
    values: Vec<f32>,
}

impl GlobalDescriptor {
    /// Normalizes `values`; an all-zero input becomes the vector of equal components.
    pub fn from_unnormalized(mut values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty global descriptor".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite descriptor entry".into()));
        }
        if normalize_in_place(&mut values) == 0.0 {
            let c = 1.0 / (values.len() as f32).sqrt();
            values.iter_mut().for_each(|v| *v = c);
        }
        Ok(Self { values })
    }

    /// Wrap values that are already unit-norm (as read back from disk) without renormalizing.
    pub(crate) fn from_stored(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("invalid stored descriptor".into()));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt()
    }

    /// Euclidean distance between descriptors; the global dissimilarity `G`.
    pub fn distance(&self, other: &GlobalDescriptor) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::ChannelMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum::<f64>()
            .sqrt())
    }
}
