use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use journe_core::geometry::{DyadicRect, RectCollection, Region};
use journe_core::io::{collection_from_json, collection_to_json};
use journe_core::num::{ratio, Rational};
use serde_json::Value;
use tempfile::TempDir;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_journe-lab")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = lab(args);
    assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn repo_ledger() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("ledger.json")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn q(v: &Value) -> Rational {
    v.as_str().unwrap().parse().unwrap()
}

fn slab_fixture() -> RectCollection {
    let mut rs = vec![DyadicRect::from_pairs(&[(0, 0), (0, 0)])];
    rs.extend((0..15).map(|i| DyadicRect::from_pairs(&[(1, 0), (-4, i)])));
    RectCollection::new(2, rs).unwrap()
}

#[test]
fn gen_is_byte_identical_per_seed() {
    let a = ok(&["--seed", "42", "gen", "--n", "1"]);
    let b = ok(&["--seed", "42", "gen", "--n", "1"]);
    assert_eq!(a, b);
    let u = collection_from_json(&a).unwrap();
    assert_eq!(u.len(), 1);
    let other = ok(&["--seed", "42", "gen", "--n", "6", "--index", "1"]);
    assert_ne!(other, ok(&["--seed", "42", "gen", "--n", "6", "--index", "2"]));
}

#[test]
fn gen_modes() {
    let u = collection_from_json(&ok(&["gen", "--mode", "incomparable", "--n", "20", "--scales", "0..6"])).unwrap();
    assert_eq!(u.len(), 20);
    assert!(u.is_pairwise_incomparable());
    let s = collection_from_json(&ok(&["gen", "--mode", "staircase", "--n", "3"])).unwrap();
    let mut got = s.members().to_vec();
    got.sort();
    let mut want: Vec<DyadicRect> = (0..3).map(|k| DyadicRect::from_pairs(&[(k, 0), (2 - k, 0)])).collect();
    want.sort();
    assert_eq!(got, want);
    let o = lab(&["gen", "--mode", "incomparable", "--dim", "1", "--n", "5", "--scales", "0..1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn suites_pass_against_the_committed_ledger() {
    let dir = TempDir::new().unwrap();
    let ledger = repo_ledger();
    let ledger = ledger.to_str().unwrap();
    let mut cfg: Value = serde_json::from_str(&ok(&["ledger", "config", "packing"])).unwrap();
    cfg["count"] = 25.into();
    let cfg = write(&dir, "packing.json", &cfg.to_string());
    let report = dir.path().join("packing.csv");
    let out = ok(&[
        "--ledger",
        ledger,
        "verify",
        "--suite",
        "packing",
        "--config",
        &cfg,
        "--report",
        report.to_str().unwrap(),
    ]);
    let verdicts: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(verdicts[0]["pass"], true);
    assert_eq!(verdicts[0]["outcome"]["instances"], 25);
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.starts_with("#journe-lab v1\nseed,suite,instance,item,metric,value,pass\n"));
    ok(&["--ledger", ledger, "ledger", "run", "weak-type", "small-weak"]);
}

#[test]
fn tampered_constant_fails_and_missing_constant_is_an_error() {
    let dir = TempDir::new().unwrap();
    let mut l: Value = serde_json::from_str(&std::fs::read_to_string(repo_ledger()).unwrap()).unwrap();
    l["constants"]["small-weak/kappa-over-delta"]["value"] = "1/100".into();
    let tampered = write(&dir, "tampered.json", &l.to_string());
    let o = lab(&["--ledger", &tampered, "ledger", "run", "small-weak"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL"));
    // the comparison never rewrites the file
    assert_eq!(std::fs::read_to_string(&tampered).unwrap(), l.to_string());

    let missing = dir.path().join("none.json");
    let o = lab(&["--ledger", missing.to_str().unwrap(), "ledger", "run", "small-weak"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!missing.exists());
    let o = lab(&["--ledger", missing.to_str().unwrap(), "--freeze", "ledger", "run", "small-weak"]);
    assert_eq!(o.status.code(), Some(0));
    let frozen: Value = serde_json::from_str(&std::fs::read_to_string(&missing).unwrap()).unwrap();
    assert_eq!(frozen["constants"]["small-weak/kappa-over-delta"]["value"], "5/11");
}

#[test]
fn verify_single_collection_freezes_then_compares() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "u.json", &ok(&["gen", "--mode", "incomparable", "--n", "6", "--scales", "0..3"]));
    let ledger = dir.path().join("l.json");
    let ledger = ledger.to_str().unwrap();
    let args = ["--ledger", ledger, "verify", "--variant", "classic", "--input", &input, "--subsets", "4"];
    assert_eq!(lab(&args).status.code(), Some(2));
    let mut frozen = vec!["--freeze"];
    frozen.extend_from_slice(&args);
    let first = ok(&frozen);
    assert_eq!(first.lines().next(), Some("#journe-lab v1"));
    assert_eq!(first.lines().count(), 2 + 5);
    assert_eq!(ok(&args), first);
    let l: Value = serde_json::from_str(&std::fs::read_to_string(ledger).unwrap()).unwrap();
    assert!(l["constants"]["journe/classic"].is_object());
    let o = lab(&["--ledger", ledger, "verify", "--variant", "classic", "--input", &input, "--epsilon", "1/4"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn slab_fixture_decomposes_and_replays() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "slabs.json", &collection_to_json(&slab_fixture()));
    let trace = dir.path().join("trace.json");
    let trace = trace.to_str().unwrap();
    let priority = (1..16).map(|i| i.to_string()).collect::<Vec<_>>().join(",");
    let run = || ok(&["decompose", "--input", &input, "--trace", trace, "--priority", &priority]);
    let a = run();
    let trace_a = std::fs::read_to_string(trace).unwrap();
    assert_eq!(run(), a);
    assert_eq!(std::fs::read_to_string(trace).unwrap(), trace_a);
    let s: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(s["good"], 15);
    assert_eq!(s["bad"][0], 1);
    assert!(q(&s["min_private_fraction"]) >= ratio(1, 9));

    let replayed: Value = serde_json::from_str(&ok(&["replay", "--input", &input, "--trace", trace])).unwrap();
    let bad0: RectCollection = serde_json::from_value(replayed["bad"][0].clone()).unwrap();
    assert_eq!(bad0.members(), &[DyadicRect::from_pairs(&[(0, 0), (0, 0)])]);

    let default: Value = serde_json::from_str(&ok(&["decompose", "--input", &input])).unwrap();
    assert_eq!(default["good"], 16);
}

#[test]
fn carleson_and_bmo() {
    let dir = TempDir::new().unwrap();
    let unit = r#"{"dim":2,"entries":[{"rect":{"lo":[[0,0],[0,0]],"hi":[[1,0],[1,0]]},"value":"3"}]}"#;
    let alpha = write(&dir, "alpha.json", unit);
    let c: Value = serde_json::from_str(&ok(&["cm", "--alpha", &alpha])).unwrap();
    assert_eq!(q(&c["cm"]["value"]), ratio(3, 1));
    assert_eq!(q(&c["rec"]["value"]), ratio(3, 1));
    assert_eq!(c["ell"].as_array().unwrap().len(), 1);
    let g: Value = serde_json::from_str(&ok(&["cm", "--alpha", &alpha, "--mode", "greedy"])).unwrap();
    assert!(q(&g["cm"]["value"]) <= ratio(3, 1));

    let step = write(&dir, "b.json", &ok(&["gen", "step", "--n", "3", "--scales", "0..2"]));
    let b: Value = serde_json::from_str(&ok(&["bmo", "--input", &step])).unwrap();
    assert!(q(&b["bmo_lower"]) <= q(&b["bmo_upper"]));
    assert!(q(&b["bmo_rec_lower"]) <= q(&b["bmo_rec_upper"]));
}

#[test]
fn grids_and_maximal() {
    assert_eq!(ok(&["grids", "check", "--depth", "2", "--scales", "-3..3", "--offsets", "16"]).trim(), "[]");
    let c: Value =
        serde_json::from_str(&ok(&["grids", "cover", "--depth", "1", "--scale", "0", "--offset", "0"])).unwrap();
    assert!(c.get("plus").is_some() && c.get("minus").is_some());
    ok(&["grids", "cover", "--depth", "2", "--scale", "-1", "--offset", "-3"]);

    let dir = TempDir::new().unwrap();
    let f = r#"{"dim":1,"pieces":[{"box":{"lo":["0"],"hi":["1"]},"value":"1"}]}"#;
    let f = write(&dir, "f.json", f);
    let measure = |family: &str, lambda: &str| {
        let r: Region = serde_json::from_str(&ok(&[
            "maximal",
            "superlevel",
            "--family",
            family,
            "--lambda",
            lambda,
            "--input",
            &f,
        ]))
        .unwrap();
        r.measure()
    };
    // dyadic ancestors of [0,1) average exactly 1/2, 1/4, ...
    assert_eq!(measure("dyadic", "1/2"), ratio(1, 1));
    assert_eq!(measure("dyadic", "1/3"), ratio(2, 1));
    // weak type with norm one
    assert!(measure("shifted:1", "1/3") * ratio(1, 3) <= ratio(1, 1));
}

#[test]
fn embed_report_csv() {
    let dir = TempDir::new().unwrap();
    let one = RectCollection::new(2, [DyadicRect::from_pairs(&[(0, 0), (0, 0)])]).unwrap();
    let input = write(&dir, "u.json", &collection_to_json(&one));
    let out = ok(&["embed", "report", "--variant", "uniform", "--input", &input]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("#journe-lab v1"));
    assert_eq!(lines.next(), Some("rect_id,rect,emb,mu"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "0");
    assert!(lines.next().is_none());
    let u = collection_from_json(&ok(&["gen", "--mode", "incomparable", "--n", "5", "--scales", "0..3"])).unwrap();
    let input = write(&dir, "v.json", &collection_to_json(&u));
    let out = ok(&["embed", "report", "--variant", "dir:0", "--input", &input]);
    assert_eq!(out.lines().count(), 2 + 5);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(lab(&["cm", "--alpha", "/nonexistent/alpha.json"]).status.code(), Some(2));
    assert_eq!(lab(&["grids", "check", "--depth", "0"]).status.code(), Some(2));
    assert_eq!(lab(&["gen", "--dim", "9"]).status.code(), Some(2));
    assert_eq!(lab(&["gen", "--scales", "-2..-4"]).status.code(), Some(2));
    assert_eq!(lab(&["ledger", "run", "no-such-suite"]).status.code(), Some(2));
}
