//! Bilinear sampling over dense grids.

use crate::error::{Error, Result};

/// Read access to a dense `height x width x channels` grid of reals.
pub trait Grid {
    fn grid_height(&self) -> usize;
    fn grid_width(&self) -> usize;
    fn grid_channels(&self) -> usize;
    fn cell(&self, y: usize, x: usize, c: usize) -> f32;
    /// Whether the cell carries a usable value; invalid cells poison samples that touch them.
    fn cell_valid(&self, _y: usize, _x: usize) -> bool {
        true
    }
}

/// The four interpolation taps around a continuous coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Taps {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub fx: f32,
    pub fy: f32,
}

impl Taps {
    /// Taps for `(x, y)` on a `width x height` grid, or `None` when the point is
    /// outside `[0, width-1] x [0, height-1]` or not finite.
    #[inline]
    pub fn at(x: f64, y: f64, width: usize, height: usize) -> Option<Taps> {
        if !(x >= 0.0 && y >= 0.0 && x <= (width - 1) as f64 && y <= (height - 1) as f64) {
            return None;
        }
        let (x0, fx) = axis(x, width);
        let (y0, fy) = axis(y, height);
        Some(Taps {
            x0,
            y0,
            x1: (x0 + 1).min(width - 1),
            y1: (y0 + 1).min(height - 1),
            fx,
            fy,
        })
    }

    #[inline]
    pub fn weights(&self) -> [f32; 4] {
        let (fx, fy) = (self.fx, self.fy);
        [
            (1.0 - fx) * (1.0 - fy),
            fx * (1.0 - fy),
            (1.0 - fx) * fy,
            fx * fy,
        ]
    }
}

#[inline]
fn axis(v: f64, len: usize) -> (usize, f32) {
    if len == 1 {
        return (0, 0.0);
    }
    let i0 = (v.floor() as usize).min(len - 2);
    (i0, (v - i0 as f64) as f32)
}

/// Bilinear interpolation of every channel of `grid` at `(x, y)`.
///
/// Exact at integer coordinates. Out-of-bounds coordinates, and samples whose
/// support touches an invalid cell, yield [`Error::InvalidSample`].
pub fn bilinear_sample<G: Grid + ?Sized>(grid: &G, x: f64, y: f64) -> Result<Vec<f32>> {
    let mut out = vec![0.0; grid.grid_channels()];
    if sample_into(grid, x, y, &mut out) {
        Ok(out)
    } else {
        Err(Error::InvalidSample {
            x,
            y,
            width: grid.grid_width(),
            height: grid.grid_height(),
        })
    }
}

/// Allocation-free variant of [`bilinear_sample`]; returns false for an invalid sample.
#[inline]
pub fn sample_into<G: Grid + ?Sized>(grid: &G, x: f64, y: f64, out: &mut [f32]) -> bool {
    let Some(t) = Taps::at(x, y, grid.grid_width(), grid.grid_height()) else {
        return false;
    };
    let w = t.weights();
    let corners = [(t.y0, t.x0), (t.y0, t.x1), (t.y1, t.x0), (t.y1, t.x1)];
    for (k, &(cy, cx)) in corners.iter().enumerate() {
        if w[k] != 0.0 && !grid.cell_valid(cy, cx) {
            return false;
        }
    }
    for (c, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0f32;
        for (k, &(cy, cx)) in corners.iter().enumerate() {
            if w[k] != 0.0 {
                acc += w[k] * grid.cell(cy, cx, c);
            }
        }
        *o = acc;
    }
    true
}
