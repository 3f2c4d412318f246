use std::collections::BTreeMap;

use corrverify::image::Image;
use corrverify::matcher::PreparedImage;
use corrverify::rerank::{rerank_stage1, run_query, Index, PipelineConfig, RankedItem, RankedList, Stage};
use corrverify::synth::{apply_warp, photometric_jitter, random_warp, textured_image, WarpKind};

fn positive_of(base: &Image, seed: u64) -> Image {
    let w = random_warp(WarpKind::Homography, 0.3, seed, (240, 240)).unwrap();
    apply_warp(base, &w).unwrap().image
}

#[test]
fn stage1_lifts_buried_positives_into_the_top_ten() {
    let mut store: BTreeMap<String, Image> = (0..99).map(|k| (format!("x{k:02}"), textured_image(240, 240, 1000 + k))).collect();
    let cfg = PipelineConfig { n1: 100, ..Default::default() };
    let mut hits = 0;
    for q in 0..5u64 {
        let base = textured_image(240, 240, 50 + q);
        store.insert("pos".into(), positive_of(&base, q));
        let query = PreparedImage::new(&photometric_jitter(&base, 0.02, 0.01, q), &cfg.descriptor).unwrap();
        // the positive sits somewhere in ranks 50..100 of the global list
        let slot = 50 + (q as usize * 11) % 50;
        let mut ids: Vec<String> = (0..99).map(|k| format!("x{k:02}")).collect();
        ids.insert(slot, "pos".into());
        let items = ids.into_iter().enumerate().map(|(i, id)| RankedItem { id, score: i as f64, g: i as f64 }).collect();
        let global = RankedList { stage: Stage::Global, items };
        let (stage1, _) = rerank_stage1(&query, &global, &store, &cfg).unwrap();
        let rank = stage1.ids().iter().position(|id| id == "pos").unwrap();
        if rank < 10 {
            hits += 1;
        }
    }
    assert!(hits >= 5 * 9 / 10, "{hits} of 5 positives reached the top 10");
}

fn small_setup() -> (Index, BTreeMap<String, Image>, Image) {
    let base = textured_image(240, 240, 7);
    let mut items = vec![("pos".to_string(), positive_of(&base, 7), "pos.pgm".into())];
    items.extend((0..9).map(|k| (format!("x{k}"), textured_image(240, 240, 500 + k), format!("x{k}.pgm").into())));
    let store = items.iter().map(|(id, img, _)| (id.clone(), img.clone())).collect();
    let index = Index::from_images(items, &Default::default()).unwrap();
    (index, store, base)
}

#[test]
fn stages_reorder_only_their_heads() {
    let (index, store, query) = small_setup();
    let cfg = PipelineConfig { n1: 5, n2: 2, ..Default::default() };
    let r = run_query("q", &query, &index, &store, &cfg).unwrap();
    let (g, s1, s2) = (r.global.ids(), r.stage1.ids(), r.stage2.ids());
    let sorted = |v: &[String]| {
        let mut v = v.to_vec();
        v.sort();
        v
    };
    assert_eq!(sorted(&g[..5]), sorted(&s1[..5]));
    assert_eq!(g[5..], s1[5..]);
    assert_eq!(sorted(&s1[..2]), sorted(&s2[..2]));
    assert_eq!(s1[2..], s2[2..]);
    assert_eq!(r.structural.len(), 5);
    assert_eq!(r.local.len(), 2);
}

#[test]
fn degenerate_depths_leave_rankings_alone() {
    let (index, store, query) = small_setup();
    let r = run_query("q", &query, &index, &store, &PipelineConfig { n1: 1, n2: 0, ..Default::default() }).unwrap();
    assert_eq!(r.global.ids(), r.stage1.ids());
    assert_eq!(r.stage1.ids(), r.stage2.ids());
}

#[test]
fn true_match_wins_after_reranking() {
    let (index, store, query) = small_setup();
    let r = run_query("q", &query, &index, &store, &PipelineConfig { n1: 10, n2: 3, ..Default::default() }).unwrap();
    assert_eq!(r.stage1.ids()[0], "pos");
    assert_eq!(r.stage2.ids()[0], "pos");
}
