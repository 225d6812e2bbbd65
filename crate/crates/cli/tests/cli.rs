use std::path::Path;
use std::process::{Command, Output};

fn setsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_setsel")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = setsel(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn pipeline_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("model");
    let sel = dir.path().join("sel");
    ok(&["gen", "--out", p(&data), "--train-per-class", "6", "--test-per-class", "2", "--points", "32"]);
    assert!(data.join("manifest.json").exists());
    ok(&["train", "--data", p(&data), "--out", p(&model), "--epochs", "2", "--point-widths", "8,16", "--head-widths", "8"]);
    let ckpt = model.join("model.sfm");
    assert!(ckpt.exists() && model.join("metrics.csv").exists());
    ok(&["select", "--model", p(&ckpt), "--data", p(&data), "--strategy", "hybrid:4", "--k", "5", "--out", p(&sel)]);
    for f in ["trace.csv", "accuracy.csv", "summary.csv", "config.json"] {
        assert!(sel.join(f).exists(), "{f}");
    }
    let trace = std::fs::read_to_string(sel.join("trace.csv")).unwrap();
    assert!(trace.starts_with("sample,strategy,iteration,removed_id,score,objective,forwards_cum,backwards_cum,ms_cum"));
    // 5 classes x 2 test samples x 5 removals
    assert_eq!(trace.lines().count(), 1 + 10 * 5);
    let bench = dir.path().join("bench");
    ok(&["bench", "--model", p(&ckpt), "--data", p(&data), "--strategies", "exact,sfo-median", "--k", "3", "--limit", "2", "--repetitions", "1", "--out", p(&bench)]);
    let rows = std::fs::read_to_string(bench.join("bench.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3);
    let long = dir.path().join("long.csv");
    ok(&["report", "--input", p(&bench.join("bench.csv")), "--out", p(&long)]);
    assert!(std::fs::read_to_string(long).unwrap().starts_with("source,keys,metric,value"));
}

#[test]
fn exit_codes_separate_configuration_from_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.sfm");
    let out = setsel(&["select", "--model", p(&missing), "--data", p(dir.path()), "--strategy", "bogus", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = setsel(&["select", "--model", p(&missing), "--data", p(dir.path()), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}
