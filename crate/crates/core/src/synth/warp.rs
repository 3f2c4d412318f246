use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cmap::{in_frame, CorrespondenceMap};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::stream;
use crate::sample::sample_into;
use crate::verify::Homography;

/// Resampling attempts before a magnitude is declared too extreme.
pub const MAX_WARP_ATTEMPTS: usize = 100;
const PROBE: usize = 16;
const MIN_JACOBIAN: f64 = 0.05;
const MAX_JACOBIAN: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarpKind {
    Affine,
    Homography,
    Tps,
}

impl WarpKind {
    pub const ALL: [WarpKind; 3] = [WarpKind::Affine, WarpKind::Homography, WarpKind::Tps];

    pub fn name(self) -> &'static str {
        match self {
            WarpKind::Affine => "affine",
            WarpKind::Homography => "homography",
            WarpKind::Tps => "tps",
        }
    }
}

impl std::str::FromStr for WarpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "affine" => Ok(WarpKind::Affine),
            "homography" => Ok(WarpKind::Homography),
            "tps" => Ok(WarpKind::Tps),
            _ => Err(Error::Config(format!("unknown warp kind `{s}`"))),
        }
    }
}

/// Warp parameters. Affine and homography matrices map original pixel
/// coordinates to warped ones; the TPS maps warped coordinates back to the
/// original frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WarpParams {
    /// Row-major 2×3 matrix.
    Affine { matrix: [f64; 6] },
    /// Row-major 3×3 matrix.
    Homography { matrix: [f64; 9] },
    Tps {
        /// Control points on the warped grid.
        control: Vec<[f64; 2]>,
        /// Displacement of each control point into the original frame.
        displacement: Vec<[f64; 2]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpSpec {
    pub kind: WarpKind,
    pub magnitude: f64,
    pub seed: u64,
    /// Frame the warp is defined on, `(height, width)`.
    pub frame: (usize, usize),
    pub params: WarpParams,
}

/// Thin-plate spline `f(p) = a + A p + Σ wᵢ U(‖p − cᵢ‖)` per output coordinate.
#[derive(Debug, Clone)]
struct Tps {
    control: Vec<[f64; 2]>,
    /// Per output coordinate: kernel weights followed by `a, A_x, A_y`.
    coef: [Vec<f64>; 2],
}

#[inline]
fn kernel(r2: f64) -> f64 {
    if r2 <= 0.0 {
        0.0
    } else {
        r2 * r2.ln()
    }
}

impl Tps {
    fn fit(control: &[[f64; 2]], values: &[[f64; 2]]) -> Result<Tps> {
        let n = control.len();
        let mut l = DMatrix::<f64>::zeros(n + 3, n + 3);
        for i in 0..n {
            for j in 0..n {
                let dx = control[i][0] - control[j][0];
                let dy = control[i][1] - control[j][1];
                l[(i, j)] = kernel(dx * dx + dy * dy);
            }
            let row = [1.0, control[i][0], control[i][1]];
            for (k, v) in row.into_iter().enumerate() {
                l[(i, n + k)] = v;
                l[(n + k, i)] = v;
            }
        }
        let lu = l.lu();
        let mut coef = [Vec::new(), Vec::new()];
        for (d, c) in coef.iter_mut().enumerate() {
            let mut rhs = DVector::<f64>::zeros(n + 3);
            for i in 0..n {
                rhs[i] = values[i][d];
            }
            let sol = lu
                .solve(&rhs)
                .ok_or_else(|| Error::InvalidInput("singular thin-plate system".into()))?;
            *c = sol.iter().copied().collect();
        }
        Ok(Tps {
            control: control.to_vec(),
            coef,
        })
    }

    fn eval(&self, p: [f64; 2]) -> [f64; 2] {
        let n = self.control.len();
        let mut out = [0.0; 2];
        for (d, o) in out.iter_mut().enumerate() {
            let c = &self.coef[d];
            let mut v = c[n] + c[n + 1] * p[0] + c[n + 2] * p[1];
            for (i, q) in self.control.iter().enumerate() {
                let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
                v += c[i] * kernel(dx * dx + dy * dy);
            }
            *o = v;
        }
        out
    }

    /// Row-major 2×2 Jacobian.
    fn jacobian(&self, p: [f64; 2]) -> [f64; 4] {
        let n = self.control.len();
        let mut j = [0.0; 4];
        for d in 0..2 {
            let c = &self.coef[d];
            let (mut gx, mut gy) = (c[n + 1], c[n + 2]);
            for (i, q) in self.control.iter().enumerate() {
                let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
                let r2 = dx * dx + dy * dy;
                if r2 > 0.0 {
                    // d/dp [r² ln r²] = 2 (ln r² + 1) (p − q)
                    let g = 2.0 * (r2.ln() + 1.0);
                    gx += c[i] * g * dx;
                    gy += c[i] * g * dy;
                }
            }
            j[2 * d] = gx;
            j[2 * d + 1] = gy;
        }
        j
    }
}

/// A warp ready for evaluation in both directions.
#[derive(Debug, Clone)]
pub struct Warp {
    spec: WarpSpec,
    model: Model,
}

#[derive(Debug, Clone)]
enum Model {
    /// Original → warped, and its inverse.
    Projective { fwd: Matrix3<f64>, inv: Matrix3<f64> },
    /// Warped → original.
    Tps(Tps),
}

fn project(m: &Matrix3<f64>, p: [f64; 2]) -> Option<[f64; 2]> {
    let w = m[(2, 0)] * p[0] + m[(2, 1)] * p[1] + m[(2, 2)];
    if !(w > 1e-9) {
        return None;
    }
    Some([
        (m[(0, 0)] * p[0] + m[(0, 1)] * p[1] + m[(0, 2)]) / w,
        (m[(1, 0)] * p[0] + m[(1, 1)] * p[1] + m[(1, 2)]) / w,
    ])
}

impl Warp {
    pub fn new(spec: WarpSpec) -> Result<Warp> {
        let model = match &spec.params {
            WarpParams::Affine { matrix: a } => {
                let fwd = Matrix3::new(a[0], a[1], a[2], a[3], a[4], a[5], 0.0, 0.0, 1.0);
                let inv = fwd
                    .try_inverse()
                    .ok_or_else(|| Error::InvalidInput("singular affine warp".into()))?;
                Model::Projective { fwd, inv }
            }
            WarpParams::Homography { matrix } => {
                let h = Homography::from_row_slice(matrix)?;
                let inv = *h.inverse()?.matrix();
                Model::Projective { fwd: *h.matrix(), inv }
            }
            WarpParams::Tps {
                control,
                displacement,
            } => {
                if control.len() != displacement.len() || control.len() < 3 {
                    return Err(Error::InvalidInput("malformed thin-plate spec".into()));
                }
                let values: Vec<[f64; 2]> = control
                    .iter()
                    .zip(displacement)
                    .map(|(c, d)| [c[0] + d[0], c[1] + d[1]])
                    .collect();
                Model::Tps(Tps::fit(control, &values)?)
            }
        };
        Ok(Warp { spec, model })
    }

    pub fn spec(&self) -> &WarpSpec {
        &self.spec
    }

    /// Where warped pixel `p` comes from in the original frame (unbounded).
    pub fn source_of(&self, p: [f64; 2]) -> Option<[f64; 2]> {
        match &self.model {
            Model::Projective { inv, .. } => project(inv, p),
            Model::Tps(t) => Some(t.eval(p)),
        }
    }

    /// Where original pixel `q` lands in the warped frame (unbounded).
    pub fn target_of(&self, q: [f64; 2]) -> Option<[f64; 2]> {
        match &self.model {
            Model::Projective { fwd, .. } => project(fwd, q),
            Model::Tps(t) => invert_tps(t, q),
        }
    }

    /// Determinant of `∂ source_of / ∂ p`, or `None` at a singular point.
    fn source_jacobian_det(&self, p: [f64; 2]) -> Option<f64> {
        match &self.model {
            Model::Projective { inv, .. } => {
                let w = inv[(2, 0)] * p[0] + inv[(2, 1)] * p[1] + inv[(2, 2)];
                if !(w > 1e-9) {
                    return None;
                }
                // det of the projective Jacobian is det(H) / w³
                Some(inv.determinant() / (w * w * w))
            }
            Model::Tps(t) => {
                let j = t.jacobian(p);
                Some(j[0] * j[3] - j[1] * j[2])
            }
        }
    }

    /// Jacobian determinant within `[MIN_JACOBIAN, MAX_JACOBIAN]` on a
    /// 16×16 probe grid over the frame, and projective denominators positive.
    pub fn passes_invertibility_probe(&self) -> bool {
        let (h, w) = self.spec.frame;
        for i in 0..PROBE {
            for j in 0..PROBE {
                let p = [
                    (w - 1) as f64 * j as f64 / (PROBE - 1) as f64,
                    (h - 1) as f64 * i as f64 / (PROBE - 1) as f64,
                ];
                match self.source_jacobian_det(p) {
                    Some(d) if (MIN_JACOBIAN..=MAX_JACOBIAN).contains(&d) => {}
                    _ => return false,
                }
                if let Model::Projective { fwd, .. } = &self.model {
                    if project(fwd, p).is_none() {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Newton iterations for `t(p) = q`, started from the fixed-point guess.
fn invert_tps(t: &Tps, q: [f64; 2]) -> Option<[f64; 2]> {
    let f0 = t.eval(q);
    let mut p = [2.0 * q[0] - f0[0], 2.0 * q[1] - f0[1]];
    for _ in 0..50 {
        let f = t.eval(p);
        let r = [f[0] - q[0], f[1] - q[1]];
        if r[0].abs() < 1e-9 && r[1].abs() < 1e-9 {
            return Some(p);
        }
        let j = t.jacobian(p);
        let det = j[0] * j[3] - j[1] * j[2];
        if det.abs() < 1e-12 {
            return None;
        }
        let dx = (j[3] * r[0] - j[1] * r[1]) / det;
        let dy = (-j[2] * r[0] + j[0] * r[1]) / det;
        p = [p[0] - dx, p[1] - dy];
        if !(p[0].is_finite() && p[1].is_finite()) {
            return None;
        }
    }
    let f = t.eval(p);
    ((f[0] - q[0]).hypot(f[1] - q[1]) <= 1e-6).then_some(p)
}

fn identity_params(kind: WarpKind, frame: (usize, usize)) -> WarpParams {
    match kind {
        WarpKind::Affine => WarpParams::Affine {
            matrix: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        },
        WarpKind::Homography => WarpParams::Homography {
            matrix: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        },
        WarpKind::Tps => WarpParams::Tps {
            control: tps_grid(frame),
            displacement: vec![[0.0, 0.0]; 9],
        },
    }
}

fn tps_grid((h, w): (usize, usize)) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(9);
    for i in 0..3 {
        for j in 0..3 {
            out.push([(w - 1) as f64 * j as f64 / 2.0, (h - 1) as f64 * i as f64 / 2.0]);
        }
    }
    out
}

fn sample_params(kind: WarpKind, m: f64, frame: (usize, usize), rng: &mut impl Rng) -> WarpParams {
    let (h, w) = frame;
    let wf = w as f64;
    let mut sym = |bound: f64| if bound > 0.0 { rng.gen_range(-bound..=bound) } else { 0.0 };
    match kind {
        WarpKind::Affine => {
            let theta = sym(25.0 * m) * PI / 180.0;
            let scale = 1.0 + sym(0.3 * m);
            let shear = sym(0.2 * m);
            let (tx, ty) = (sym(0.15 * m * wf), sym(0.15 * m * wf));
            let (c, s) = (theta.cos(), theta.sin());
            // rotation · scale · shear, about the frame center
            let a = [scale * c, scale * (c * shear - s), scale * s, scale * (s * shear + c)];
            let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
            WarpParams::Affine {
                matrix: [
                    a[0],
                    a[1],
                    cx - a[0] * cx - a[1] * cy + tx,
                    a[2],
                    a[3],
                    cy - a[2] * cx - a[3] * cy + ty,
                ],
            }
        }
        WarpKind::Homography => {
            let (x1, y1) = ((w - 1) as f64, (h - 1) as f64);
            let corners = [[0.0, 0.0], [x1, 0.0], [x1, y1], [0.0, y1]];
            let moved = corners.map(|c| [c[0] + sym(0.2 * m * wf), c[1] + sym(0.2 * m * wf)]);
            let matrix = crate::verify::four_point(&corners, &moved)
                .map(|h| h.to_array())
                .unwrap_or([f64::NAN; 9]);
            WarpParams::Homography { matrix }
        }
        WarpKind::Tps => {
            let control = tps_grid(frame);
            let displacement = control
                .iter()
                .map(|_| [sym(0.1 * m * wf), sym(0.1 * m * wf)])
                .collect();
            WarpParams::Tps {
                control,
                displacement,
            }
        }
    }
}

/// Draw a warp of `kind` at `magnitude` on a `frame = (height, width)`,
/// resampling until it passes the invertibility probe.
pub fn random_warp(kind: WarpKind, magnitude: f64, seed: u64, frame: (usize, usize)) -> Result<Warp> {
    if !(0.0..=1.0).contains(&magnitude) {
        return Err(Error::Config(format!("magnitude {magnitude} outside [0, 1]")));
    }
    if frame.0 < 2 || frame.1 < 2 {
        return Err(Error::InvalidInput("warp frame must be at least 2x2".into()));
    }
    if magnitude == 0.0 {
        return Warp::new(WarpSpec {
            kind,
            magnitude,
            seed,
            frame,
            params: identity_params(kind, frame),
        });
    }
    let mut rng = stream(seed, kind.name(), 0);
    for _ in 0..MAX_WARP_ATTEMPTS {
        let params = sample_params(kind, magnitude, frame, &mut rng);
        let spec = WarpSpec {
            kind,
            magnitude,
            seed,
            frame,
            params,
        };
        if let Ok(w) = Warp::new(spec) {
            if w.passes_invertibility_probe() {
                return Ok(w);
            }
        }
    }
    Err(Error::WarpRejected {
        attempts: MAX_WARP_ATTEMPTS,
        magnitude,
    })
}

/// A warped image with its analytic ground truth.
#[derive(Debug, Clone)]
pub struct WarpedPair {
    pub image: Image,
    /// On the warped grid, pointing into the original.
    pub gt_forward: CorrespondenceMap,
    /// On the original grid, pointing into the warped image.
    pub gt_backward: CorrespondenceMap,
}

/// Inverse-mapping bilinear warp. Sources outside the frame repeat the nearest
/// edge pixel; pixels with no source at all are 0.
pub fn warp_image(image: &Image, warp: &Warp) -> Image {
    let (h, w, c) = (image.height(), image.width(), image.channels());
    let mut px = vec![0.0f32; h * w * c];
    let mut buf = vec![0.0f32; c];
    for y in 0..h {
        for x in 0..w {
            if let Some([sx, sy]) = warp.source_of([x as f64, y as f64]) {
                let (sx, sy) = (sx.clamp(0.0, (w - 1) as f64), sy.clamp(0.0, (h - 1) as f64));
                if sample_into(image, sx, sy, &mut buf) {
                    px[(y * w + x) * c..(y * w + x + 1) * c].copy_from_slice(&buf);
                }
            }
        }
    }
    Image::new(h, w, c, px).expect("same shape as input")
}

pub fn ground_truth(warp: &Warp, height: usize, width: usize) -> (CorrespondenceMap, CorrespondenceMap) {
    let inside = |p: Option<[f64; 2]>| {
        p.filter(|q| in_frame(q[0], q[1], width, height))
            .map(|q| (q[0], q[1]))
    };
    let fwd = CorrespondenceMap::from_fn(height, width, height, width, |y, x| {
        inside(warp.source_of([x as f64, y as f64]))
    });
    let bwd = CorrespondenceMap::from_fn(height, width, height, width, |y, x| {
        inside(warp.target_of([x as f64, y as f64]))
    });
    (fwd, bwd)
}

/// Warp `image` and compute both ground-truth maps.
pub fn apply_warp(image: &Image, warp: &Warp) -> Result<WarpedPair> {
    if (image.height(), image.width()) != warp.spec().frame {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs warp frame {:?}",
            image.height(),
            image.width(),
            warp.spec().frame
        )));
    }
    let (gt_forward, gt_backward) = ground_truth(warp, image.height(), image.width());
    Ok(WarpedPair {
        image: warp_image(image, warp),
        gt_forward,
        gt_backward,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Image {
        Image::from_fn(32, 32, |y, x| ((x * 7 + y * 3) % 32) as f32 / 31.0)
    }

    #[test]
    fn magnitude_zero_is_identity() {
        let img = ramp();
        for kind in WarpKind::ALL {
            let w = random_warp(kind, 0.0, 5, (32, 32)).unwrap();
            let pair = apply_warp(&img, &w).unwrap();
            assert_eq!(pair.image, img, "{kind:?}");
            assert_eq!(pair.gt_forward, CorrespondenceMap::identity(32, 32));
            assert_eq!(pair.gt_backward, CorrespondenceMap::identity(32, 32));
        }
    }

    #[test]
    fn fixed_seed_gives_identical_spec() {
        for kind in WarpKind::ALL {
            let a = random_warp(kind, 0.5, 11, (240, 240)).unwrap();
            let b = random_warp(kind, 0.5, 11, (240, 240)).unwrap();
            assert_eq!(a.spec(), b.spec());
            let c = random_warp(kind, 0.5, 12, (240, 240)).unwrap();
            assert_ne!(a.spec(), c.spec());
        }
    }

    #[test]
    fn translation_gives_constant_offset() {
        let spec = WarpSpec {
            kind: WarpKind::Affine,
            magnitude: 0.1,
            seed: 0,
            frame: (20, 20),
            params: WarpParams::Affine {
                matrix: [1.0, 0.0, 3.0, 0.0, 1.0, -2.0],
            },
        };
        let (fwd, _) = ground_truth(&Warp::new(spec).unwrap(), 20, 20);
        for y in 0..18 {
            for x in 3..20 {
                assert_eq!(fwd.get(y, x), Some([x as f32 - 3.0, y as f32 + 2.0]));
            }
        }
        assert!(!fwd.is_valid(0, 0));
    }

    #[test]
    fn tps_inverse_round_trips() {
        let w = random_warp(WarpKind::Tps, 0.8, 3, (240, 240)).unwrap();
        for &p in &[[10.0, 20.0], [120.0, 119.5], [230.0, 5.0]] {
            let q = w.source_of(p).unwrap();
            let back = w.target_of(q).unwrap();
            assert!((back[0] - p[0]).abs() < 1e-6 && (back[1] - p[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn out_of_range_magnitude_is_rejected() {
        assert!(random_warp(WarpKind::Affine, 1.5, 0, (32, 32)).is_err());
    }
}
