//! Write a small synthetic benchmark with ground-truth maps to disk.
//!
//! `cargo run --release --example synth_benchmark [OUT_DIR]`

use corrverify::synth::{gen_benchmark, procedural_sources, write_benchmark, BenchmarkConfig, WarpKind};

fn main() -> corrverify::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("corrverify-bench").display().to_string());
    let config = BenchmarkConfig {
        kinds: vec![WarpKind::Homography, WarpKind::Tps],
        n_queries: 3,
        positives_per_query: 2,
        n_distractors: 5,
        ..Default::default()
    };
    let sources = procedural_sources(config.sources_needed(), config.size, config.seed);
    let bench = gen_benchmark(&sources, &config)?;
    for q in &bench.manifest.queries {
        println!("{} ({:?}): positives {:?}", q.id, q.warp.kind, q.positives);
    }
    write_benchmark(&bench, &out, true)?;
    println!("wrote {} database images to {out}", bench.database.len());
    Ok(())
}
