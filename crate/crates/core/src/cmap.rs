//! Dense correspondence maps and per-pixel masks.
//!
//! A map `O_AB` lives on the grid of image B and stores, for every B pixel,
//! absolute `(x, y)` coordinates in image A. Sampling A at `O_AB` therefore
//! warps A into B's frame.

use crate::error::{Error, Result};
use crate::sample::{sample_into, Grid, Taps};

#[derive(Debug, Clone)]
pub struct CorrespondenceMap {
    height: usize,
    width: usize,
    coords: Vec<[f32; 2]>,
    valid: Vec<bool>,
}

/// Equal dimensions, validity and coordinates at valid pixels.
impl PartialEq for CorrespondenceMap {
    fn eq(&self, other: &Self) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.valid == other.valid
            && self
                .coords
                .iter()
                .zip(&other.coords)
                .zip(&self.valid)
                .all(|((a, b), &v)| !v || a == b)
    }
}

impl CorrespondenceMap {
    /// Build from raw parts. Invalid entries are stored as `NaN`.
    pub fn from_parts(
        height: usize,
        width: usize,
        coords: Vec<[f32; 2]>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        if coords.len() != height * width || valid.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "correspondence map {height}x{width} with {} coords and {} flags",
                coords.len(),
                valid.len()
            )));
        }
        let mut map = Self {
            height,
            width,
            coords,
            valid,
        };
        for i in 0..map.coords.len() {
            let [x, y] = map.coords[i];
            if !(x.is_finite() && y.is_finite()) {
                map.valid[i] = false;
            }
        }
        Ok(map)
    }

    /// Map from a per-pixel function. Coordinates outside the
    /// `source_height x source_width` frame (or non-finite) are marked invalid.
    pub fn from_fn(
        height: usize,
        width: usize,
        source_height: usize,
        source_width: usize,
        mut f: impl FnMut(usize, usize) -> Option<(f64, f64)>,
    ) -> Self {
        let mut coords = Vec::with_capacity(height * width);
        let mut valid = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                match f(y, x) {
                    Some((sx, sy)) if in_frame(sx, sy, source_width, source_height) => {
                        coords.push([sx as f32, sy as f32]);
                        valid.push(true);
                    }
                    _ => {
                        coords.push([f32::NAN, f32::NAN]);
                        valid.push(false);
                    }
                }
            }
        }
        Self {
            height,
            width,
            coords,
            valid,
        }
    }

    pub fn identity(height: usize, width: usize) -> Self {
        Self::from_fn(height, width, height, width, |y, x| Some((x as f64, y as f64)))
    }

    /// Map with every pixel invalid.
    pub fn invalid(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            coords: vec![[f32::NAN, f32::NAN]; height * width],
            valid: vec![false; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> Option<[f32; 2]> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.coords[i])
    }

    #[inline]
    pub fn is_valid(&self, y: usize, x: usize) -> bool {
        self.valid[y * self.width + x]
    }

    /// Raw coordinate storage (row-major, `NaN` where invalid).
    pub fn coords(&self) -> &[[f32; 2]] {
        &self.coords
    }

    pub fn valid_flags(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn set(&mut self, y: usize, x: usize, value: Option<[f32; 2]>) {
        let i = y * self.width + x;
        match value {
            Some(c) if c[0].is_finite() && c[1].is_finite() => {
                self.coords[i] = c;
                self.valid[i] = true;
            }
            _ => {
                self.coords[i] = [f32::NAN, f32::NAN];
                self.valid[i] = false;
            }
        }
    }

    /// Bilinearly sample the map at `(x, y)` on its own grid. `None` when out of
    /// bounds or when any contributing cell is invalid.
    pub fn sample(&self, x: f64, y: f64) -> Option<[f32; 2]> {
        let mut out = [0.0f32; 2];
        sample_into(self, x, y, &mut out).then_some(out)
    }

    /// Valid-pixel mask of the map.
    pub fn valid_mask(&self) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            bits: self.valid.clone(),
        }
    }

    /// Resample onto a `new_height x new_width` grid with pixel-center
    /// alignment. Coordinates are rescaled into a source frame of
    /// `source_height x source_width` → `new_source_height x new_source_width`.
    ///
    /// Interpolation extrapolates linearly at the borders so affine maps are
    /// reproduced exactly; a pixel is invalid when any contributing cell is
    /// invalid or the rescaled coordinate leaves the new source frame.
    pub fn resample(
        &self,
        new_height: usize,
        new_width: usize,
        source: (usize, usize),
        new_source: (usize, usize),
    ) -> CorrespondenceMap {
        let coords = self.resample_coords(new_height, new_width, source, new_source);
        CorrespondenceMap::from_fn(new_height, new_width, new_source.0, new_source.1, |y, x| {
            coords[y * new_width + x]
        })
    }

    /// Row-major coordinates of [`resample`](Self::resample) before the frame
    /// check; `None` only where an input tap is invalid.
    pub(crate) fn resample_coords(
        &self,
        new_height: usize,
        new_width: usize,
        source: (usize, usize),
        new_source: (usize, usize),
    ) -> Vec<Option<(f64, f64)>> {
        let sy = new_source.0 as f64 / source.0 as f64;
        let sx = new_source.1 as f64 / source.1 as f64;
        let rx: Vec<(usize, usize, f64)> = (0..new_width)
            .map(|i| extrapolating_axis(i, self.width, new_width))
            .collect();
        let ry: Vec<(usize, usize, f64)> = (0..new_height)
            .map(|i| extrapolating_axis(i, self.height, new_height))
            .collect();
        let mut out = Vec::with_capacity(new_height * new_width);
        for y in 0..new_height {
            for x in 0..new_width {
                out.push(self.resample_at(&ry[y], &rx[x], sx, sy));
            }
        }
        out
    }

    fn resample_at(&self, ry: &(usize, usize, f64), rx: &(usize, usize, f64), sx: f64, sy: f64) -> Option<(f64, f64)> {
        let (y0, y1, fy) = *ry;
        let (x0, x1, fx) = *rx;
        let taps = [
            (y0, x0, (1.0 - fx) * (1.0 - fy)),
            (y0, x1, fx * (1.0 - fy)),
            (y1, x0, (1.0 - fx) * fy),
            (y1, x1, fx * fy),
        ];
        let mut acc = [0.0f64; 2];
        for &(ty, tx, w) in &taps {
            if w == 0.0 {
                continue;
            }
            let c = self.get(ty, tx)?;
            acc[0] += w * c[0] as f64;
            acc[1] += w * c[1] as f64;
        }
        Some(((acc[0] + 0.5) * sx - 0.5, (acc[1] + 0.5) * sy - 0.5))
    }

    /// Mean of `‖O(p) − p‖` over valid pixels, useful as a quick identity check.
    pub fn mean_displacement(&self) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for y in 0..self.height {
            for x in 0..self.width {
                if let Some([cx, cy]) = self.get(y, x) {
                    sum += ((cx as f64 - x as f64).powi(2) + (cy as f64 - y as f64).powi(2)).sqrt();
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum / n as f64)
    }
}

impl Grid for CorrespondenceMap {
    fn grid_height(&self) -> usize {
        self.height
    }
    fn grid_width(&self) -> usize {
        self.width
    }
    fn grid_channels(&self) -> usize {
        2
    }
    #[inline]
    fn cell(&self, y: usize, x: usize, c: usize) -> f32 {
        self.coords[y * self.width + x][c]
    }
    #[inline]
    fn cell_valid(&self, y: usize, x: usize) -> bool {
        self.valid[y * self.width + x]
    }
}

#[inline]
pub(crate) fn in_frame(x: f64, y: f64, width: usize, height: usize) -> bool {
    Taps::at(x, y, width, height).is_some()
}

fn extrapolating_axis(i: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let s = crate::image::resample_coord(i, src_len, dst_len);
    if src_len == 1 {
        return (0, 0, 0.0);
    }
    let i0 = (s.floor().max(0.0) as usize).min(src_len - 2);
    (i0, i0 + 1, s - i0 as f64)
}

/// Per-pixel boolean mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![true; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "mask {height}x{width} with {} bits",
                bits.len()
            )));
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        self.check_dims(other)?;
        Ok(Mask {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect(),
        })
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn implies(&self, other: &Mask) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample_nearest(&self, factor: usize) -> Mask {
        let (h, w) = (self.height * factor, self.width * factor);
        let mut bits = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                bits.push(self.get(y / factor, x / factor));
            }
        }
        Mask {
            height: h,
            width: w,
            bits,
        }
    }

    fn check_dims(&self, other: &Mask) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::DimensionMismatch(format!(
                "mask {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}
