//! Planar homographies and their direct linear transform estimate.

use nalgebra::{Matrix3, SMatrix, SVector, SymmetricEigen, Vector3};

use crate::error::{Error, Result};

/// Point pair `(from, to)` with `to ≈ H · from`.
pub type PointPair = ([f64; 2], [f64; 2]);

const DET_EPS: f64 = 1e-12;

/// 3×3 projective transform normalized to `h33 = 1` (Frobenius norm 1 when
/// `h33` vanishes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NoModel("non-finite homography entry".into()));
        }
        let norm = m.norm();
        if norm == 0.0 {
            return Err(Error::NoModel("zero homography".into()));
        }
        let scaled = if m[(2, 2)].abs() > 1e-9 * norm {
            m / m[(2, 2)]
        } else {
            m / norm
        };
        let det_scale = scaled.norm().powi(3);
        if scaled.determinant().abs() <= DET_EPS * det_scale.max(1.0) {
            return Err(Error::NoModel("singular homography".into()));
        }
        Ok(Self { m: scaled })
    }

    /// Row-major entries.
    pub fn from_row_slice(v: &[f64; 9]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_row_slice(v))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// Row-major entries.
    pub fn to_array(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = self.m[(r, c)];
            }
        }
        out
    }

    pub fn inverse(&self) -> Result<Homography> {
        let inv = self
            .m
            .try_inverse()
            .ok_or_else(|| Error::NoModel("homography not invertible".into()))?;
        Homography::from_matrix(inv)
    }

    /// Apply to a point; `None` when it maps to infinity.
    #[inline]
    pub fn apply(&self, p: [f64; 2]) -> Option<[f64; 2]> {
        let v = self.m * Vector3::new(p[0], p[1], 1.0);
        if v.z.abs() < 1e-12 {
            return None;
        }
        Some([v.x / v.z, v.y / v.z])
    }

    /// Largest displacement between `self` and `other` over the corners of a
    /// `width × height` frame (pixel-center coordinates).
    pub fn max_corner_error(&self, other: &Homography, width: usize, height: usize) -> f64 {
        let (w, h) = ((width - 1) as f64, (height - 1) as f64);
        [[0.0, 0.0], [w, 0.0], [0.0, h], [w, h]]
            .iter()
            .map(|&c| match (self.apply(c), other.apply(c)) {
                (Some(a), Some(b)) => ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt(),
                _ => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }
}

/// Similarity transform moving the centroid to the origin with mean distance √2.
fn normalizer(points: impl Iterator<Item = [f64; 2]> + Clone) -> Option<Matrix3<f64>> {
    let mut n = 0.0;
    let (mut cx, mut cy) = (0.0, 0.0);
    for p in points.clone() {
        cx += p[0];
        cy += p[1];
        n += 1.0;
    }
    cx /= n;
    cy /= n;
    let mean_dist = points
        .map(|p| ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if !(mean_dist > 1e-12) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Some(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

#[inline]
fn transform(t: &Matrix3<f64>, p: [f64; 2]) -> [f64; 2] {
    [
        t[(0, 0)] * p[0] + t[(0, 2)],
        t[(1, 1)] * p[1] + t[(1, 2)],
    ]
}

/// Twice the signed area of triangle `abc`.
#[inline]
fn cross(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// True when some three of the four points are (nearly) collinear.
pub(crate) fn has_collinear_triple(p: &[[f64; 2]; 4]) -> bool {
    let scale = p
        .iter()
        .flat_map(|a| p.iter().map(move |b| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)))
        .fold(0.0, f64::max);
    let tol = 1e-9 * scale.max(1e-300);
    [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
        .iter()
        .any(|&(i, j, k)| cross(p[i], p[j], p[k]).abs() <= tol)
}

/// Least-squares homography minimizing the algebraic error on
/// Hartley-normalized coordinates. Exact for four non-degenerate pairs.
pub fn fit_homography_dlt(pairs: &[PointPair]) -> Result<Homography> {
    if pairs.len() < 4 {
        return Err(Error::NoModel(format!("{} correspondences, need 4", pairs.len())));
    }
    if pairs.len() == 4 {
        let from = [pairs[0].0, pairs[1].0, pairs[2].0, pairs[3].0];
        let to = [pairs[0].1, pairs[1].1, pairs[2].1, pairs[3].1];
        if has_collinear_triple(&from) || has_collinear_triple(&to) {
            return Err(Error::NoModel("collinear minimal sample".into()));
        }
    }
    let tf = normalizer(pairs.iter().map(|p| p.0)).ok_or_else(|| Error::NoModel("coincident points".into()))?;
    let tt = normalizer(pairs.iter().map(|p| p.1)).ok_or_else(|| Error::NoModel("coincident points".into()))?;

    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    for &(f, t) in pairs {
        let [x, y] = transform(&tf, f);
        let [u, v] = transform(&tt, t);
        let r1 = SVector::<f64, 9>::from_row_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        let r2 = SVector::<f64, 9>::from_row_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
        ata += r1 * r1.transpose();
        ata += r2 * r2.transpose();
    }
    let eig = SymmetricEigen::new(ata);
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[8]].abs().max(1e-300);
    if eig.eigenvalues[order[1]].abs() <= 1e-10 * largest {
        return Err(Error::NoModel("rank-deficient correspondence set".into()));
    }
    let h = eig.eigenvectors.column(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let tt_inv = tt
        .try_inverse()
        .ok_or_else(|| Error::NoModel("degenerate normalization".into()))?;
    Homography::from_matrix(tt_inv * hn * tf)
}

/// Exact homography through four pairs via the 8×8 system with `h33 = 1`.
/// Faster than [`fit_homography_dlt`] for RANSAC hypotheses.
pub(crate) fn four_point(from: &[[f64; 2]; 4], to: &[[f64; 2]; 4]) -> Option<Homography> {
    if has_collinear_triple(from) || has_collinear_triple(to) {
        return None;
    }
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for i in 0..4 {
        let [x, y] = from[i];
        let [u, v] = to[i];
        let r = 2 * i;
        a.set_row(r, &SMatrix::<f64, 1, 8>::from_row_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]));
        a.set_row(r + 1, &SMatrix::<f64, 1, 8>::from_row_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]));
        b[r] = u;
        b[r + 1] = v;
    }
    let h = a.lu().solve(&b)?;
    Homography::from_matrix(Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0)).ok()
}
