//! Synthetic retrieval: global ranking, then structural and fused re-ranking.

use corrverify::metrics::recall_at_n;
use corrverify::rerank::{run_query, Index, PipelineConfig};
use corrverify::synth::{gen_benchmark, procedural_sources, BenchmarkConfig};

fn main() -> corrverify::Result<()> {
    let bc = BenchmarkConfig { n_queries: 4, positives_per_query: 3, n_distractors: 20, seed: 2, ..Default::default() };
    let bench = gen_benchmark(&procedural_sources(bc.sources_needed(), bc.size, bc.seed), &bc)?;
    let pc = PipelineConfig { n1: 15, n2: 5, ..Default::default() };

    let items = bench
        .manifest
        .database
        .iter()
        .map(|e| (e.id.clone(), bench.database_image(&e.id).unwrap().clone(), format!("{}.pgm", e.id).into()))
        .collect();
    // a noisy global descriptor leaves work for the re-ranking stages
    let index = Index::from_images(items, &pc.descriptor)?.with_descriptor_noise(0.07, 2)?;

    let mut stages = [vec![], vec![], vec![]];
    for q in &bench.manifest.queries {
        let r = run_query(&q.id, bench.query(&q.id).unwrap(), &index, &bench, &pc)?;
        println!("{}: global {:?}  stage 2 {:?}", q.id, &r.global.ids()[..3], &r.stage2.ids()[..3]);
        for (s, list) in stages.iter_mut().zip([&r.global, &r.stage1, &r.stage2]) {
            s.push((q.id.clone(), list.ids()));
        }
    }
    let relevance = bench.manifest.relevance();
    for (name, s) in ["global", "stage 1", "stage 2"].iter().zip(&stages) {
        println!("{name:>8} recall@1/5: {:?}", recall_at_n(s, &relevance, &[1, 5])?);
    }
    Ok(())
}
