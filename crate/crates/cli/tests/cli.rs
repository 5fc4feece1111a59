use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").canonicalize().unwrap()
}

fn omprag(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omprag"))
        .current_dir(dir)
        .args(args)
        .env_remove("OPENAI_API_KEY")
        .env("OMPRAG_CORPUS_DIR", fixtures().join("../corpus"))
        .env("OMPRAG_WORKERS", "2")
        .output()
        .unwrap()
}

fn has_compiler() -> bool {
    Command::new("g++").arg("--version").output().is_ok_and(|o| o.status.success())
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn replay_run_then_report() {
    if !has_compiler() {
        eprintln!("g++ not found; skipping");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let manifest = fixtures().join("mini/manifest.jsonl");
    let manifest = manifest.to_str().unwrap();
    for profile in ["p4omp", "baseline"] {
        let replay = fixtures().join("mini/replay").join(profile);
        let o = omprag(
            tmp.path(),
            &["run", "--profile", profile, "--manifest", manifest, "--replay-dir", replay.to_str().unwrap(), "--out-dir", profile],
        );
        assert!(o.status.success(), "{}", text(&o));
        assert!(tmp.path().join(profile).join("validate/reports.jsonl").exists());
    }

    let o = omprag(tmp.path(), &["report", "p4omp=p4omp", "baseline=baseline", "--format", "csv"]);
    assert!(o.status.success(), "{}", text(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[1], "p4omp,5,4,0,1,4,80.0,100.0");
    assert_eq!(lines[2], "baseline,5,2,2,1,2,40.0,50.0");

    let o = omprag(tmp.path(), &["report", "b=baseline", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["summary"]["failure_categories"]["SyntaxError"], 1);
}

#[test]
fn unknown_report_format_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let set = format!("x={}", fixtures().join("table2/baseline_reports.jsonl").display());
    let o = omprag(tmp.path(), &["report", &set, "--format", "xml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("unknown report format"));
    let o = omprag(tmp.path(), &["report", &set]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("82/108 (75.9%)"));
}

#[test]
fn bench_import_writes_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = fixtures().join("table3/runtimes.csv");
    let o = omprag(tmp.path(), &["bench", "--import", csv.to_str().unwrap(), "--out-dir", "o"]);
    assert!(o.status.success(), "{}", text(&o));
    let speedups = fs::read_to_string(tmp.path().join("o/bench/speedups.csv")).unwrap();
    assert!(speedups.contains("Histogram (Case 4),2,0.805"));
    for f in ["records.csv", "table.txt", "speedup_series.tsv"] {
        assert!(tmp.path().join("o/bench").join(f).exists(), "{f}");
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("omprag.toml"), "out_dir = \"from-file\"\nmax_tokens = 64\n").unwrap();
    let o = omprag(tmp.path(), &["--config", "omprag.toml", "ingest"]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(tmp.path().join("from-file/corpus/manifest.jsonl").exists());
    let o = omprag(tmp.path(), &["--config", "omprag.toml", "ingest", "--out-dir", "from-flag"]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(tmp.path().join("from-flag/corpus/manifest.jsonl").exists());

    fs::write(tmp.path().join("bad.toml"), "colour = 1\n").unwrap();
    let o = omprag(tmp.path(), &["--config", "bad.toml", "ingest"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn live_transform_without_key_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = fixtures().join("mini/manifest.jsonl");
    let o = omprag(tmp.path(), &["transform", "--profile", "baseline", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("OPENAI_API_KEY"));
}

#[test]
fn harvest_from_recorded_pages() {
    let tmp = tempfile::tempdir().unwrap();
    let api = fixtures().join("harvest/api");
    let o = omprag(
        tmp.path(),
        &["harvest", "--categories", "dot_product,histogram", "--api-fixtures", api.to_str().unwrap(), "--no-compile", "--out-dir", "h"],
    );
    assert!(o.status.success(), "{}", text(&o));
    let candidates = fs::read_to_string(tmp.path().join("h/harvest/candidates.jsonl")).unwrap();
    assert!(candidates.lines().count() >= 2);
    assert!(tmp.path().join("h/harvest/manifest.jsonl").exists());
}
