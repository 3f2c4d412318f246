use serde::{Deserialize, Serialize};

use crate::cmap::{CorrespondenceMap, Mask};
use crate::error::{Error, Result};
use crate::features::{dot, normalize_in_place, FeatureMap, GlobalDescriptor};
use crate::sample::sample_into;

/// Structural similarity `(|C| / |I|) · exp(−β / |C|)`; 0 when either count is 0.
#[allow(non_snake_case)]
pub fn score_S(inliers: usize, consistent: usize, beta: f64) -> f64 {
    if inliers == 0 || consistent == 0 {
        return 0.0;
    }
    let (i, c) = (inliers as f64, consistent as f64);
    (c / i) * (-beta / c).exp()
}

/// Global dissimilarity `G = ‖g_q − g_db‖₂`.
#[allow(non_snake_case)]
pub fn score_G(query: &GlobalDescriptor, db: &GlobalDescriptor) -> Result<f64> {
    query.distance(db)
}

/// Fused score `log₁₀(S_L · S) · 10^(−G)`. A non-positive product gives −∞.
#[allow(non_snake_case)]
pub fn score_S_F(s_l: f64, s: f64, g: f64) -> f64 {
    let p = s_l * s;
    if !(p > 0.0) {
        return f64::NEG_INFINITY;
    }
    p.log10() * 10f64.powf(-g)
}

/// True when `S_L · S ∈ (0, 1)`: the log is negative and a larger `G` pulls
/// the fused score toward zero, i.e. *up*, inverting the intended ordering.
pub fn s_f_inverted(s_l: f64, s: f64) -> bool {
    let p = s_l * s;
    p > 0.0 && p < 1.0
}

/// Local similarity: sum over masked target pixels `a` of `f_A(O_AB[a]) · f_B[a]`.
///
/// `hyper_b` defines the grid. When `map` and `mask` are coarser than it
/// (by an integer factor), the map is resampled onto the hypercolumn grid with
/// coordinates rescaled into `hyper_a`'s frame from `map_source` (the frame
/// the map's coordinates live in), and the mask is upsampled nearest-neighbour.
/// Bilinear samples of `hyper_a` are renormalized; unsampleable pixels add 0.
#[allow(non_snake_case)]
pub fn score_S_L(
    hyper_a: &FeatureMap,
    hyper_b: &FeatureMap,
    map: &CorrespondenceMap,
    map_source: (usize, usize),
    mask: &Mask,
) -> Result<f64> {
    if hyper_a.channels() != hyper_b.channels() {
        return Err(Error::ChannelMismatch {
            left: hyper_a.channels(),
            right: hyper_b.channels(),
        });
    }
    if (map.height(), map.width()) != (mask.height(), mask.width()) {
        return Err(Error::DimensionMismatch("map and mask grids differ".into()));
    }
    let (h, w) = (hyper_b.height(), hyper_b.width());
    let factor = h / map.height();
    if factor == 0 || h % map.height() != 0 || factor * map.width() != w {
        return Err(Error::DimensionMismatch(format!(
            "map grid {}x{} is not an integer downscale of {h}x{w}",
            map.height(),
            map.width()
        )));
    }
    if mask.count() == 0 {
        return Ok(0.0);
    }
    let (map, mask) = if factor == 1 && map_source == (hyper_a.height(), hyper_a.width()) {
        (map.clone(), mask.clone())
    } else {
        (
            map.resample(h, w, map_source, (hyper_a.height(), hyper_a.width())),
            mask.upsample_nearest(factor),
        )
    };

    let mut buf = vec![0.0f32; hyper_a.channels()];
    let mut total = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            if !mask.get(y, x) {
                continue;
            }
            let Some([qx, qy]) = map.get(y, x) else {
                continue;
            };
            if !sample_into(hyper_a, qx as f64, qy as f64, &mut buf) {
                continue;
            }
            if normalize_in_place(&mut buf) == 0.0 {
                continue;
            }
            total += dot(&buf, hyper_b.pixel(y, x)) as f64;
        }
    }
    Ok(total)
}

/// Everything a scoring variant may read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantInputs {
    pub inliers: usize,
    pub consistent: usize,
    pub s: f64,
    pub s_l: f64,
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Term {
    Inliers,
    Consistent,
    ConsistentRatio,
    S,
    SL,
    SLTimesS,
    LogSLS,
    FiveOverG,
    Pow10,
}

impl Term {
    fn parse(name: &str) -> Option<Term> {
        Some(match name {
            "I" => Term::Inliers,
            "C" => Term::Consistent,
            "C_over_I" => Term::ConsistentRatio,
            "S" => Term::S,
            "S_L_only" => Term::SL,
            "S_L_times_S" => Term::SLTimesS,
            "log_S_L_S" => Term::LogSLS,
            "Q_5_over_G" => Term::FiveOverG,
            "Q_pow10" => Term::Pow10,
            _ => return None,
        })
    }

    fn is_r(self) -> bool {
        matches!(self, Term::SL | Term::SLTimesS | Term::LogSLS)
    }

    fn is_q(self) -> bool {
        matches!(self, Term::FiveOverG | Term::Pow10)
    }

    fn eval(self, v: &VariantInputs) -> f64 {
        match self {
            Term::Inliers => v.inliers as f64,
            Term::Consistent => v.consistent as f64,
            Term::ConsistentRatio => {
                if v.inliers == 0 {
                    0.0
                } else {
                    v.consistent as f64 / v.inliers as f64
                }
            }
            Term::S => v.s,
            Term::SL => v.s_l,
            Term::SLTimesS => v.s_l * v.s,
            Term::LogSLS => {
                let p = v.s_l * v.s;
                if p > 0.0 {
                    p.log10()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Term::FiveOverG => 5.0 / v.g,
            Term::Pow10 => 10f64.powf(-v.g),
        }
    }
}

/// A parsed scoring variant: a single term, or `R*Q` with `R` a local term
/// and `Q` a global weighting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variant {
    name: String,
    terms: Vec<Term>,
}

impl Variant {
    pub fn parse(name: &str) -> Result<Variant> {
        let parts: Vec<&str> = name.split('*').map(str::trim).collect();
        let unknown = || Error::Config(format!("unknown scoring variant `{name}`"));
        let terms = parts
            .iter()
            .map(|p| Term::parse(p).ok_or_else(unknown))
            .collect::<Result<Vec<_>>>()?;
        match terms.as_slice() {
            [_] => {}
            [r, q] if r.is_r() && q.is_q() => {}
            _ => return Err(unknown()),
        }
        Ok(Variant {
            name: name.to_string(),
            terms,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// True when the variant reads `S_L` (and therefore needs hypercolumns).
    pub fn needs_local(&self) -> bool {
        self.terms.iter().any(|t| t.is_r())
    }

    /// Higher is better. Undefined products (0 · ∞, −∞ · 0) become −∞.
    pub fn eval(&self, v: &VariantInputs) -> f64 {
        let out = self.terms.iter().map(|t| t.eval(v)).fold(1.0, |acc, x| {
            if acc == 0.0 || x == 0.0 {
                0.0
            } else {
                acc * x
            }
        });
        if out.is_nan() {
            f64::NEG_INFINITY
        } else {
            out
        }
    }
}

/// Evaluate a named variant such as `C`, `C_over_I` or `log_S_L_S*Q_5_over_G`.
pub fn score_variant(name: &str, inputs: &VariantInputs) -> Result<f64> {
    Ok(Variant::parse(name)?.eval(inputs))
}
