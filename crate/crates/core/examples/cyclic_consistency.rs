//! Forward-backward consistency of exact and of estimated maps.

use corrverify::matcher::{match_dense, MatchConfig};
use corrverify::pyramid::DescriptorConfig;
use corrverify::synth::{ground_truth, noise_image, random_warp, textured_image, WarpKind};
use corrverify::verify::cyclic_coverage;

fn main() -> corrverify::Result<()> {
    for kind in WarpKind::ALL {
        let warp = random_warp(kind, 0.3, 5, (240, 240))?;
        let (fwd, bwd) = ground_truth(&warp, 240, 240);
        println!("{kind:?} ground truth, eps 0.5: {:.4}", cyclic_coverage(&fwd, &bwd, 0.5).unwrap_or(0.0));
    }

    let (mc, dc) = (MatchConfig::default(), DescriptorConfig::default());
    let a = textured_image(240, 240, 5);
    let same = match_dense(&a, &a, &mc, &dc)?;
    println!("identical images, eps 2: {:.4}", cyclic_coverage(&same.ab, &same.ba, 2.0).unwrap_or(0.0));
    let noise = match_dense(&noise_image(240, 240, 1), &noise_image(240, 240, 2), &mc, &dc)?;
    println!("unrelated noise, eps 2: {:.4}", cyclic_coverage(&noise.ab, &noise.ba, 2.0).unwrap_or(0.0));
    Ok(())
}
