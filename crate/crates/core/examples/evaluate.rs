//! Endpoint error, PCK and recall on hand-made inputs.

use std::collections::{BTreeMap, BTreeSet};

use corrverify::metrics::{match_report, recall_at_n};
use corrverify::CorrespondenceMap;

fn main() -> corrverify::Result<()> {
    let gt = CorrespondenceMap::from_fn(32, 32, 32, 32, |y, x| Some((x as f64 * 0.9 + 2.0, y as f64)));
    // prediction off by 0.5 px on the left half and by 4 px on the right
    let pred = CorrespondenceMap::from_fn(32, 32, 32, 32, |y, x| {
        let [u, v] = gt.get(y, x).unwrap();
        let dy = if x < 16 { 0.5 } else { 4.0 };
        Some((u as f64, v as f64 + dy))
    });
    let report = match_report(&pred, &gt, &[1.0, 5.0], 2)?;
    println!("{}", serde_json::to_string_pretty(&report).unwrap());

    let rankings = vec![
        ("q1".to_string(), vec!["a".to_string(), "b".into(), "c".into()]),
        ("q2".to_string(), vec!["c".to_string(), "a".into(), "b".into()]),
    ];
    let relevance = BTreeMap::from([
        ("q1".to_string(), BTreeSet::from(["a".to_string()])),
        ("q2".to_string(), BTreeSet::from(["b".to_string()])),
    ]);
    println!("recall: {:?}", recall_at_n(&rankings, &relevance, &[1, 2, 3])?);
    Ok(())
}
