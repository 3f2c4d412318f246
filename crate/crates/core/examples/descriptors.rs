//! Descriptor pyramid, hypercolumns and the global descriptor of one image.

use corrverify::matcher::PreparedImage;
use corrverify::pyramid::{compute_global_descriptor, extract_hypercolumn, DescriptorConfig};
use corrverify::synth::textured_image;

fn main() -> corrverify::Result<()> {
    let image = textured_image(320, 256, 1);
    let prepared = PreparedImage::new(&image, &DescriptorConfig::default())?;
    for (i, level) in prepared.pyramid.levels().iter().enumerate() {
        println!("level {i}: {}x{} x {} channels", level.height(), level.width(), level.channels());
    }
    let px = prepared.pyramid.levels().last().unwrap().pixel(120, 120);
    println!("descriptor at (120, 120): {px:.3?}");

    let hyper = extract_hypercolumn(&prepared.pyramid, (480, 480))?;
    println!("hypercolumns: {}x{} x {}", hyper.height(), hyper.width(), hyper.channels());

    let g = compute_global_descriptor(&prepared.pyramid)?;
    println!("global descriptor: {:.3?}", g.values());
    Ok(())
}
