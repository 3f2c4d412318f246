//! Dense matching of an image against a warped copy, scored against ground truth.
//!
//! `cargo run --release --example dense_matching [OUT_DIR]` also writes the
//! pair and a match visualization.

use corrverify::cli::draw_matches;
use corrverify::formats::{save_image, write_cmap};
use corrverify::matcher::{match_dense, MatchConfig};
use corrverify::metrics::{aepe_interior, pck_interior};
use corrverify::pyramid::DescriptorConfig;
use corrverify::synth::{apply_warp, random_warp, textured_image, WarpKind};
use corrverify::verify::cyclic_mask;

fn main() -> corrverify::Result<()> {
    let a = textured_image(240, 240, 7);
    let warp = random_warp(WarpKind::Homography, 0.3, 7, (240, 240))?;
    let pair = apply_warp(&a, &warp)?;

    let dense = match_dense(&a, &pair.image, &MatchConfig::default(), &DescriptorConfig::default())?;
    println!("valid: {} of {} target pixels", dense.ab.valid_count(), dense.ab.len());
    println!("AEPE (16 px border): {:.3} px", aepe_interior(&dense.ab, &pair.gt_forward, 16)?);
    for t in [1.0, 3.0, 5.0] {
        println!("PCK@{t}: {:.3}", pck_interior(&dense.ab, &pair.gt_forward, t, 16)?);
    }

    if let Some(dir) = std::env::args().nth(1) {
        let dir = std::path::PathBuf::from(dir);
        std::fs::create_dir_all(&dir).expect("create output directory");
        save_image(&a, dir.join("a.pgm"))?;
        save_image(&pair.image, dir.join("b.pgm"))?;
        write_cmap(&dense.ab, dir.join("ab.cmap"))?;
        let mask = cyclic_mask(&dense.ab, &dense.ba, 2.0);
        save_image(&draw_matches(&a, &pair.image, &dense.ab, &mask, 16)?, dir.join("matches.ppm"))?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
