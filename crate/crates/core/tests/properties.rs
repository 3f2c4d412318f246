use corrverify::features::FeatureMap;
use corrverify::formats::{decode_cmap, decode_fmap, decode_gdsc, decode_pnm, encode_cmap, encode_fmap, encode_gdsc, encode_pnm};
use corrverify::image::Image;
use corrverify::matcher::{global_correlation, neighborhood_consensus, refine_level, Correlation4D, SENTINEL};
use corrverify::metrics::{aepe, pck, recall_at_n};
use corrverify::rerank::{reorder_by_variant, Evidence, RankedItem, RankedList, Stage};
use corrverify::verify::{score_S, score_S_L, verify_direction, Direction, Variant, VerifyConfig};
use corrverify::{CorrespondenceMap, GlobalDescriptor, Mask};
use proptest::prelude::*;
use std::collections::{BTreeMap, BTreeSet};

fn map_strategy(max_side: usize) -> impl Strategy<Value = CorrespondenceMap> {
    (2..=max_side, 2..=max_side).prop_flat_map(|(h, w)| {
        prop::collection::vec(prop::option::weighted(0.8, (0.0f64..1.0, 0.0f64..1.0)), h * w).prop_map(move |cells| {
            let mut it = cells.into_iter();
            CorrespondenceMap::from_fn(h, w, h, w, |_, _| {
                it.next().unwrap().map(|(u, v)| (u * (w - 1) as f64, v * (h - 1) as f64))
            })
        })
    })
}

fn field_strategy(h: usize, w: usize, c: usize) -> impl Strategy<Value = FeatureMap> {
    prop::collection::vec(-1.0f32..1.0, h * w * c).prop_map(move |v| FeatureMap::new(h, w, c, v).unwrap().normalized())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn metrics_are_bounded_and_monotone(gt in map_strategy(12), dx in -3.0f64..3.0, dy in -3.0f64..3.0, t in 0.0f64..5.0) {
        prop_assume!(gt.valid_count() > 0);
        let (h, w) = (gt.height(), gt.width());
        prop_assert_eq!(aepe(&gt, &gt).unwrap(), 0.0);
        prop_assert_eq!(pck(&gt, &gt, 0.0).unwrap(), 1.0);
        // a wider source frame keeps every shifted coordinate in range
        let gt = CorrespondenceMap::from_fn(h, w, h + 8, w + 8, |y, x| gt.get(y, x).map(|[u, v]| (u as f64 + 4.0, v as f64 + 4.0)));
        let pred = CorrespondenceMap::from_fn(h, w, h + 8, w + 8, |y, x| {
            gt.get(y, x).map(|[u, v]| (u as f64 + dx, v as f64 + dy))
        });
        let e = aepe(&pred, &gt).unwrap();
        prop_assert!((e - dx.hypot(dy)).abs() < 1e-4);
        let (lo, hi) = (pck(&pred, &gt, t).unwrap(), pck(&pred, &gt, t + 1.0).unwrap());
        prop_assert!((0.0..=1.0).contains(&lo) && lo <= hi);
    }

    #[test]
    fn recall_is_monotone_in_n(perm in Just((0..10).collect::<Vec<usize>>()).prop_shuffle(), rel in 0usize..10) {
        let ranked: Vec<String> = perm.iter().map(|i| format!("d{i}")).collect();
        let relevance = BTreeMap::from([("q".to_string(), BTreeSet::from([format!("d{rel}")]))]);
        let r = recall_at_n(&[("q".to_string(), ranked.clone())], &relevance, &[1, 3, 5, 10]).unwrap();
        let vals: Vec<f64> = r.values().copied().collect();
        prop_assert!(vals.windows(2).all(|p| p[0] <= p[1]));
        prop_assert_eq!(vals[3], 1.0);
        let pos = ranked.iter().position(|id| *id == format!("d{rel}")).unwrap();
        prop_assert_eq!(vals[0], if pos == 0 { 1.0 } else { 0.0 });
    }

    #[test]
    fn cmap_round_trips(map in map_strategy(16)) {
        prop_assert_eq!(decode_cmap(&encode_cmap(&map).unwrap()).unwrap(), map);
    }

    #[test]
    fn pnm_round_trips(h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
        let mut s = seed;
        let img = Image::from_fn(h, w, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 56) as u8) as f32 / 255.0
        });
        prop_assert_eq!(decode_pnm(&encode_pnm(&img)).unwrap(), img);
    }

    #[test]
    fn fmap_and_gdsc_round_trip(f in field_strategy(5, 7, 3), v in prop::collection::vec(-1.0f32..1.0, 10)) {
        prop_assert_eq!(decode_fmap(&encode_fmap(&f).unwrap()).unwrap(), f);
        prop_assume!(v.iter().any(|&x| x != 0.0));
        let g = GlobalDescriptor::from_unnormalized(v).unwrap();
        prop_assert_eq!(decode_gdsc(&encode_gdsc(&g).unwrap()).unwrap(), g);
    }

    #[test]
    fn structural_score_monotone_and_scale_free(i in 1usize..5000, frac in 0.0f64..1.0, k in 2usize..6, beta in 1.0f64..60000.0) {
        let c = ((i as f64 * frac) as usize).max(1);
        let s = score_S(i, c, beta);
        prop_assert!(s >= 0.0 && s <= c as f64 / i as f64);
        if c < i {
            prop_assert!(score_S(i, c + 1, beta) >= s);
        }
        let scaled = score_S(k * i, k * c, k as f64 * beta);
        prop_assert!((scaled - s).abs() <= 1e-12 * s.max(1e-300));
        prop_assert_eq!(score_S(i, 0, beta), 0.0);
    }

    #[test]
    fn consistent_pixels_are_inliers(a in map_strategy(20), b in map_strategy(20), eps in 0.5f64..4.0) {
        let cfg = VerifyConfig { cyclic_epsilon: eps, ..Default::default() };
        let r = verify_direction(&a, &b, Direction::AToB, &cfg).unwrap();
        prop_assert!(r.consistent.implies(&r.inliers));
        prop_assert!(r.consistent.implies(&r.cyclic));
        prop_assert!(r.inliers.implies(&a.valid_mask()));
        let s = score_S(r.inlier_count(), r.consistent_count(), (a.height() * a.width()) as f64);
        prop_assert!((0.0..=(-1.0f64).exp() + 1e-12).contains(&s));
    }

    #[test]
    fn local_similarity_adds_over_disjoint_masks(
        ha in field_strategy(6, 6, 4),
        hb in field_strategy(6, 6, 4),
        map in map_strategy(6).prop_filter("6×6", |m| m.height() == 6 && m.width() == 6),
        split in prop::collection::vec(0u8..3, 36),
    ) {
        let part = |k: u8| Mask::from_bits(6, 6, split.iter().map(|&v| v == k).collect()).unwrap();
        let union = Mask::from_bits(6, 6, split.iter().map(|&v| v != 0).collect()).unwrap();
        let s = |m: &Mask| score_S_L(&ha, &hb, &map, (6, 6), m).unwrap();
        let (s1, s2, su) = (s(&part(1)), s(&part(2)), s(&union));
        prop_assert!((su - (s1 + s2)).abs() < 1e-5);
        prop_assert!(su.abs() <= union.count() as f64 + 1e-5);
    }

    #[test]
    fn reranking_permutes_only_the_head(n in 1usize..30, n1 in 0usize..35, seed in any::<u64>()) {
        let items: Vec<RankedItem> = (0..n).map(|i| RankedItem { id: format!("d{i:02}"), score: i as f64 * 0.1, g: i as f64 * 0.1 }).collect();
        let global = RankedList { stage: Stage::Global, items };
        let head = n1.min(n);
        let mut s = seed;
        let evidence: Vec<Evidence> = global.items[..head].iter().map(|it| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            let inl = (s >> 40) as usize % 500 + 1;
            let con = (s >> 20) as usize % inl;
            Evidence {
                id: it.id.clone(), g: it.g, s: score_S(inl, con, 400.0), s_a: 0.0, s_b: 0.0,
                inliers: inl, consistent: con,
                ab: CorrespondenceMap::invalid(1, 1), cyclic: Mask::new(1, 1),
            }
        }).collect();
        let out = reorder_by_variant(&global, &evidence, &Variant::parse("S").unwrap(), Stage::S);
        let ids = out.ids();
        let mut head_in: Vec<String> = global.ids()[..head].to_vec();
        let mut head_out: Vec<String> = ids[..head].to_vec();
        head_in.sort();
        head_out.sort();
        prop_assert_eq!(head_in, head_out);
        prop_assert_eq!(&ids[head..], &global.ids()[head..]);
        prop_assert!(out.items[..head].windows(2).all(|p| p[0].score >= p[1].score));
    }

    #[test]
    fn correlation_is_symmetric_and_bounded(a in field_strategy(4, 5, 6), b in field_strategy(3, 4, 6)) {
        let ab = global_correlation(&a, &b).unwrap();
        let ba = global_correlation(&b, &a).unwrap();
        for t in 0..12 {
            for s in 0..20 {
                prop_assert_eq!(ab.row(t)[s], ba.row(s)[t]);
                prop_assert!(ab.row(t)[s].abs() <= 1.0 + 1e-5);
            }
        }
    }

    #[test]
    fn consensus_stays_in_unit_interval(
        scores in prop::collection::vec(prop_oneof![9 => -1.0f32..1.0, 1 => Just(SENTINEL)], 3 * 4 * 4 * 3),
        k in prop_oneof![Just(1usize), Just(3), Just(5)],
    ) {
        let corr = Correlation4D::from_scores((3, 4), (4, 3), scores.clone()).unwrap();
        let nc = neighborhood_consensus(&corr, k).unwrap();
        for (raw, v) in scores.iter().zip(nc.scores()) {
            if *raw == SENTINEL {
                prop_assert_eq!(*v, SENTINEL);
            } else {
                prop_assert!((0.0..=1.0 + 1e-6).contains(v), "{}", v);
            }
        }
    }

    #[test]
    fn refinement_stays_near_its_prior(
        src in field_strategy(12, 12, 5),
        tgt in field_strategy(12, 12, 5),
        px in 0.0f64..5.0,
        py in 0.0f64..5.0,
        r in 1usize..4,
    ) {
        let prev = CorrespondenceMap::from_fn(6, 6, 6, 6, |_, _| Some((px, py)));
        let (ex, ey) = (2.0 * px + 0.5, 2.0 * py + 0.5);
        let out = refine_level(&prev, &src, &tgt, r, true).unwrap();
        for y in 0..12 {
            for x in 0..12 {
                let c = out.get(y, x).expect("prior on the image");
                prop_assert!((c[0] as f64 - ex).abs() <= r as f64 + 0.5 + 1e-6);
                prop_assert!((c[1] as f64 - ey).abs() <= r as f64 + 0.5 + 1e-6);
            }
        }
    }
}
