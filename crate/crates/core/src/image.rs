//! Dense intensity images and resampling.
//!
//! Pixels are stored row-major and channel-interleaved as `f32` in `[0, 1]`.
//! Coordinates follow the pixel-center convention used everywhere in the
//! crate: `(0, 0)` is the center of the top-left pixel, `x` indexes columns
//! and `y` indexes rows.

use crate::error::{Error, Result};

/// Smallest side length accepted by resampling and the matcher.
pub const MIN_SIDE: usize = 8;

const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "images carry 1 or 3 channels, got {channels}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput("image has an empty side".into()));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} pixel values for a {height}x{width}x{channels} image",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!(
                "pixel value {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    /// Grayscale image built from a per-pixel function; values are clamped to `[0, 1]`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut pixels = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                let v = f(y, x);
                pixels.push(if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 });
            }
        }
        Self {
            height,
            width,
            channels: 1,
            pixels,
        }
    }

    pub fn constant(height: usize, width: usize, value: f32) -> Self {
        Self::from_fn(height, width, |_, _| value)
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

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    /// Luma of pixel `(y, x)` (identity for grayscale images).
    #[inline]
    pub fn luma(&self, y: usize, x: usize) -> f32 {
        if self.channels == 1 {
            self.get(y, x, 0)
        } else {
            let base = (y * self.width + x) * 3;
            LUMA[0] * self.pixels[base] + LUMA[1] * self.pixels[base + 1] + LUMA[2] * self.pixels[base + 2]
        }
    }

    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        Image::from_fn(self.height, self.width, |y, x| self.luma(y, x))
    }

    /// True when every pixel carries the same value.
    pub fn is_constant(&self) -> bool {
        match self.pixels.first() {
            Some(&first) => self.pixels.iter().all(|&v| v == first),
            None => true,
        }
    }

    /// Quantize to 8 bits the way the PNM writer does.
    pub fn quantized(&self) -> Image {
        Image {
            pixels: self
                .pixels
                .iter()
                .map(|&v| quantize(v) as f32 / 255.0)
                .collect(),
            ..self.clone()
        }
    }
}

#[inline]
pub(crate) fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Source coordinate of destination index `i` when resampling `src_len` cells onto `dst_len`.
#[inline]
pub(crate) fn resample_coord(i: usize, src_len: usize, dst_len: usize) -> f64 {
    (i as f64 + 0.5) * (src_len as f64 / dst_len as f64) - 0.5
}

/// Bilinear resampling with pixel-center alignment and edge clamping.
pub fn resize_image(image: &Image, new_height: usize, new_width: usize) -> Result<Image> {
    if new_height < MIN_SIDE || new_width < MIN_SIDE {
        return Err(Error::InvalidInput(format!(
            "resize target {new_height}x{new_width} below minimum side {MIN_SIDE}"
        )));
    }
    let (h, w, c) = (image.height, image.width, image.channels);
    let xs: Vec<(usize, usize, f32)> = (0..new_width).map(|i| axis_taps(i, w, new_width)).collect();
    let ys: Vec<(usize, usize, f32)> = (0..new_height).map(|i| axis_taps(i, h, new_height)).collect();

    let mut pixels = Vec::with_capacity(new_height * new_width * c);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let p00 = image.get(y0, x0, ch);
                let p01 = image.get(y0, x1, ch);
                let p10 = image.get(y1, x0, ch);
                let p11 = image.get(y1, x1, ch);
                let top = p00 + (p01 - p00) * fx;
                let bottom = p10 + (p11 - p10) * fx;
                pixels.push((top + (bottom - top) * fy).clamp(0.0, 1.0));
            }
        }
    }
    Ok(Image {
        height: new_height,
        width: new_width,
        channels: c,
        pixels,
    })
}

fn axis_taps(i: usize, src_len: usize, dst_len: usize) -> (usize, usize, f32) {
    let s = resample_coord(i, src_len, dst_len).clamp(0.0, (src_len - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, (s - i0 as f64) as f32)
}

impl crate::sample::Grid for Image {
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
        self.pixels[(y * self.width + x) * self.channels + c]
    }
}
