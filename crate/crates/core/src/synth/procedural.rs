//! Procedural grayscale source images.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::image::Image;
use crate::rng::stream;

/// Smooth value noise: a random lattice with `cells` cells per side,
/// smoothstep-interpolated.
fn value_noise(h: usize, w: usize, cells: usize, rng: &mut impl Rng) -> Vec<f32> {
    let n = cells + 1;
    let lattice: Vec<f32> = (0..n * n).map(|_| rng.gen::<f32>()).collect();
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        let gy = y as f32 / h as f32 * cells as f32;
        let (y0, ty) = (gy.floor() as usize, gy.fract());
        let sy = ty * ty * (3.0 - 2.0 * ty);
        for x in 0..w {
            let gx = x as f32 / w as f32 * cells as f32;
            let (x0, tx) = (gx.floor() as usize, gx.fract());
            let sx = tx * tx * (3.0 - 2.0 * tx);
            let v00 = lattice[y0 * n + x0];
            let v01 = lattice[y0 * n + x0 + 1];
            let v10 = lattice[(y0 + 1) * n + x0];
            let v11 = lattice[(y0 + 1) * n + x0 + 1];
            let top = v00 + (v01 - v00) * sx;
            let bottom = v10 + (v11 - v10) * sx;
            out[y * w + x] = top + (bottom - top) * sy;
        }
    }
    out
}

/// Layered texture: multi-octave value noise, random ellipses and
/// rectangles, and a few straight strokes. Every seed gives a different scene.
pub fn textured_image(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = stream(seed, "texture", 0);
    let mut px = vec![0.0f32; height * width];
    let mut amp = 0.5f32;
    for octave in 0..4 {
        let cells = 3usize << octave;
        for (p, v) in px.iter_mut().zip(value_noise(height, width, cells, &mut rng)) {
            *p += amp * v;
        }
        amp *= 0.6;
    }
    let (hf, wf) = (height as f32, width as f32);
    let shapes = rng.gen_range(10..18);
    for _ in 0..shapes {
        let cx = rng.gen::<f32>() * wf;
        let cy = rng.gen::<f32>() * hf;
        let rx = (0.03 + 0.12 * rng.gen::<f32>()) * wf;
        let ry = (0.03 + 0.12 * rng.gen::<f32>()) * hf;
        let level = rng.gen::<f32>();
        let alpha = 0.5 + 0.5 * rng.gen::<f32>();
        let ellipse = rng.gen_bool(0.5);
        let (c, s) = {
            let t = rng.gen::<f32>() * std::f32::consts::PI;
            (t.cos(), t.sin())
        };
        for y in 0..height {
            for x in 0..width {
                let dx = x as f32 - cx;
                let dy = y as f32 - cy;
                let u = (c * dx + s * dy) / rx;
                let v = (-s * dx + c * dy) / ry;
                let inside = if ellipse { u * u + v * v <= 1.0 } else { u.abs() <= 1.0 && v.abs() <= 1.0 };
                if inside {
                    let p = &mut px[y * width + x];
                    *p = *p * (1.0 - alpha) + level * alpha;
                }
            }
        }
    }
    let strokes = rng.gen_range(3..7);
    for _ in 0..strokes {
        let (x0, y0) = (rng.gen::<f32>() * wf, rng.gen::<f32>() * hf);
        let (x1, y1) = (rng.gen::<f32>() * wf, rng.gen::<f32>() * hf);
        let level = if rng.gen_bool(0.5) { 0.05 } else { 0.95 };
        let half = 0.8 + 1.5 * rng.gen::<f32>();
        let (dx, dy) = (x1 - x0, y1 - y0);
        let len2 = (dx * dx + dy * dy).max(1e-6);
        for y in 0..height {
            for x in 0..width {
                let (px_, py_) = (x as f32 - x0, y as f32 - y0);
                let t = ((px_ * dx + py_ * dy) / len2).clamp(0.0, 1.0);
                let (ex, ey) = (px_ - t * dx, py_ - t * dy);
                if ex * ex + ey * ey <= half * half {
                    px[y * width + x] = level;
                }
            }
        }
    }
    // stretch to the full range so every image has comparable contrast
    let (lo, hi) = px.iter().fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let span = (hi - lo).max(1e-6);
    let mut i = 0;
    Image::from_fn(height, width, |_, _| {
        let v = (px[i] - lo) / span;
        i += 1;
        0.05 + 0.9 * v
    })
}

/// Independent uniform noise in `[0, 1]`.
pub fn noise_image(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = stream(seed, "noise", 0);
    Image::from_fn(height, width, |_, _| rng.gen::<f32>())
}

/// Brightness offset and additive Gaussian noise, clamped to `[0, 1]`.
pub fn photometric_jitter(image: &Image, brightness: f32, sigma: f32, seed: u64) -> Image {
    let mut rng = stream(seed, "jitter", 0);
    let normal = Normal::new(0.0f32, sigma.max(0.0)).expect("sigma is finite");
    let px: Vec<f32> = image
        .pixels()
        .iter()
        .map(|&v| {
            let n = if sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            (v + brightness + n).clamp(0.0, 1.0)
        })
        .collect();
    Image::new(image.height(), image.width(), image.channels(), px).expect("same shape")
}
