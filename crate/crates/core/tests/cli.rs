use std::path::Path;
use std::process::{Command, Output};

use corrverify::formats::{read_cmap, save_image};
use corrverify::metrics::aepe;
use corrverify::synth::textured_image;
use corrverify::CorrespondenceMap;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corrverify")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn help_lists_every_flag_with_defaults() {
    let expect: &[(&str, &[&str])] = &[
        ("synth", &["--out", "--kind", "--magnitude", "--n-queries", "--positives", "--distractors", "--size", "--seed", "--sources", "--no-gt"]),
        ("match", &["--out", "--viz", "--viz-stride"]),
        ("verify-pair", &["--out"]),
        ("index", &[]),
        ("rerank", &["--index", "--queries", "--out", "--descriptor-noise", "--noise-seed"]),
        ("eval", &["--rankings", "--manifest", "--pred", "--gt", "--recall-n", "--pck", "--border", "--out"]),
    ];
    for (cmd, flags) in expect {
        let out = bin(&[cmd, "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8_lossy(&out.stdout);
        for f in flags.iter().chain(&["--config", "--workers"]) {
            assert!(text.contains(f), "`{cmd} --help` lacks {f}");
        }
        if !flags.is_empty() && *cmd != "verify-pair" {
            assert!(text.contains("default"), "`{cmd} --help` shows no defaults");
        }
    }
}

#[test]
fn matching_an_image_with_itself_gives_identity() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.pgm");
    save_image(&textured_image(240, 240, 3), &a).unwrap();
    let prefix = dir.path().join("pair");
    let summary = json(&bin(&["match", s(&a), s(&a), "--out", s(&prefix), "--viz", s(&dir.path().join("viz.ppm"))]));
    assert!(summary["valid_ab"].as_u64().unwrap() > 57000);
    let ab = read_cmap(dir.path().join("pair_ab.cmap")).unwrap();
    assert!(aepe(&ab, &CorrespondenceMap::identity(240, 240)).unwrap() <= 0.5);
    assert!(dir.path().join("viz.ppm").exists());
}

#[test]
fn verifying_identical_images() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.pgm");
    save_image(&textured_image(240, 240, 4), &a).unwrap();
    let v = json(&bin(&["verify-pair", s(&a), s(&a)]));
    assert_eq!(v["G"].as_f64().unwrap(), 0.0);
    let sv = v["S"].as_f64().unwrap();
    assert!(sv > 0.3 && sv <= (-1.0f64).exp(), "S = {sv}");
    assert!(v["S_L"].as_f64().unwrap() > 0.0);
}

#[test]
fn synth_index_rerank_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let bench = dir.path().join("bench");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"pipeline": {"n1": 4, "n2": 2}}"#).unwrap();
    let synth = bin(&["synth", "--out", s(&bench), "--n-queries", "2", "--positives", "1", "--distractors", "3", "--magnitude", "0.2", "--seed", "5"]);
    assert!(synth.status.success(), "{}", String::from_utf8_lossy(&synth.stderr));
    assert!(bench.join("manifest.json").exists());
    let idx = dir.path().join("index");
    let summary = json(&bin(&["index", s(&bench.join("images/database")), s(&idx)]));
    assert_eq!(summary["entries"].as_u64(), Some(5));
    let rankings = dir.path().join("rankings.jsonl");
    let out = bin(&["rerank", "--config", s(&cfg), "--index", s(&idx), "--queries", s(&bench.join("images/queries")), "--out", s(&rankings)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&rankings).unwrap().lines().count(), 2);
    let report = json(&bin(&["eval", "--rankings", s(&rankings), "--manifest", s(&bench.join("manifest.json")), "--recall-n", "1,5"]));
    assert_eq!(report["stage2"]["recall"]["5"].as_f64(), Some(1.0));
    assert_eq!(report["stage2"]["recall"]["1"].as_f64(), Some(1.0));
}

#[test]
fn eval_of_ground_truth_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.cmap");
    corrverify::formats::write_cmap(&CorrespondenceMap::identity(16, 16), &gt).unwrap();
    let r = json(&bin(&["eval", "--pred", s(&gt), "--gt", s(&gt), "--pck", "1,5"]));
    assert_eq!(r["aepe"].as_f64(), Some(0.0));
    assert_eq!(r["pck"]["1"].as_f64(), Some(1.0));
    assert_eq!(r["pixels"].as_u64(), Some(256));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.pgm");
    std::fs::write(&junk, b"not an image").unwrap();
    assert_eq!(bin(&["verify-pair", "/nonexistent/a.pgm", "/nonexistent/b.pgm"]).status.code(), Some(2));
    assert_eq!(bin(&["verify-pair", s(&junk), s(&junk)]).status.code(), Some(1));
    assert_eq!(bin(&["match", "a.pgm"]).status.code(), Some(1));
    assert_eq!(bin(&["eval", "--pred", s(&junk)]).status.code(), Some(1));
    assert_eq!(bin(&["--workers", "0", "eval", "--pred", s(&junk), "--gt", s(&junk)]).status.code(), Some(1));
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"pipeline": {"n1": 0}}"#).unwrap();
    assert_eq!(bin(&["--config", s(&cfg), "verify-pair", s(&junk), s(&junk)]).status.code(), Some(1));
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
}
