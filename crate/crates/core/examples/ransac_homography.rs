//! Robust homography fit on a correspondence map with injected outliers.

use corrverify::synth::{ground_truth, random_warp, WarpKind, WarpParams};
use corrverify::verify::{ransac_homography, Homography, RansacConfig};
use corrverify::CorrespondenceMap;
use rand::{Rng, SeedableRng};

fn main() -> corrverify::Result<()> {
    let warp = random_warp(WarpKind::Homography, 0.4, 3, (240, 240))?;
    let (exact, _) = ground_truth(&warp, 240, 240);

    // replace 40% of the correspondences with random points
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let noisy = CorrespondenceMap::from_fn(240, 240, 240, 240, |y, x| {
        if rng.gen_bool(0.4) {
            Some((rng.gen_range(0.0..239.0), rng.gen_range(0.0..239.0)))
        } else {
            exact.get(y, x).map(|[u, v]| (u as f64, v as f64))
        }
    });

    let out = ransac_homography(&noisy, &RansacConfig::default())?;
    let WarpParams::Homography { matrix } = &warp.spec().params else { unreachable!() };
    let truth = Homography::from_row_slice(matrix)?.inverse()?;
    let model = out.model.expect("a model");
    println!("inliers: {} of {} valid", out.inliers.count(), noisy.valid_count());
    println!("max corner error vs truth: {:.4} px", model.max_corner_error(&truth, 240, 240));
    println!("model: {:.5?}", model.to_array());
    Ok(())
}
