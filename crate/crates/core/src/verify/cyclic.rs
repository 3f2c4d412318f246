use crate::cmap::{CorrespondenceMap, Mask};

/// Forward-backward check on B's grid.
///
/// Pixel `p` is set when `O_AB[p]` is valid, the bilinear sample of `O_BA`
/// at `O_AB[p]` is valid, and it lands within `epsilon` of `p`.
pub fn cyclic_mask(ab: &CorrespondenceMap, ba: &CorrespondenceMap, epsilon: f64) -> Mask {
    let mut mask = Mask::new(ab.height(), ab.width());
    let eps2 = epsilon * epsilon;
    for y in 0..ab.height() {
        for x in 0..ab.width() {
            let Some([qx, qy]) = ab.get(y, x) else {
                continue;
            };
            let Some([bx, by]) = ba.sample(qx as f64, qy as f64) else {
                continue;
            };
            let dx = bx as f64 - x as f64;
            let dy = by as f64 - y as f64;
            if dx * dx + dy * dy <= eps2 {
                mask.set(y, x, true);
            }
        }
    }
    mask
}

/// Fraction of pixels valid in `ab` whose round trip returns within `epsilon`.
/// `None` when `ab` has no valid pixel.
pub fn cyclic_coverage(ab: &CorrespondenceMap, ba: &CorrespondenceMap, epsilon: f64) -> Option<f64> {
    let valid = ab.valid_count();
    (valid > 0).then(|| cyclic_mask(ab, ba, epsilon).count() as f64 / valid as f64)
}
