//! Pair verification scores for a true match and for an unrelated image.

use corrverify::matcher::{MatchConfig, PreparedImage};
use corrverify::pyramid::DescriptorConfig;
use corrverify::synth::{apply_warp, random_warp, textured_image, WarpKind};
use corrverify::verify::{verify_pair, VerifyConfig};

fn main() -> corrverify::Result<()> {
    let dc = DescriptorConfig::default();
    let query = textured_image(240, 240, 11);
    let positive = apply_warp(&query, &random_warp(WarpKind::Affine, 0.3, 11, (240, 240))?)?.image;
    let unrelated = textured_image(240, 240, 12);

    let q = PreparedImage::new(&query, &dc)?;
    for (name, img) in [("positive", &positive), ("unrelated", &unrelated)] {
        let p = PreparedImage::new(img, &dc)?;
        let s = verify_pair(&q, &p, &MatchConfig::default(), &VerifyConfig::default())?;
        println!(
            "{name:>9}: G {:.3}  S {:.4}  S_L {:.1}  S_F {:.3}  inliers {}  consistent {}",
            s.G, s.S, s.S_L, s.S_F, s.inliers, s.consistent
        );
    }
    Ok(())
}
