use std::path::Path;
use std::process::{Command, Output};

fn stsurr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stsurr"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn error_line(out: &Output) -> String {
    let stderr = String::from_utf8_lossy(&out.stderr);
    stderr
        .lines()
        .find(|l| l.starts_with("error\t"))
        .unwrap_or_else(|| panic!("no error line in {stderr}"))
        .to_string()
}

fn rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[test]
fn extending_a_sample_table_keeps_its_rows() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.tsv");
    let second = dir.path().join("b.tsv");
    let p = |x: &Path| x.to_str().unwrap().to_string();

    let out = stsurr(&["sample", "--n", "6", "--out", &p(&first)]);
    assert!(out.status.success());
    let out = stsurr(&["sample", "--n", "4", "--extend", &p(&first), "--out", &p(&second)]);
    assert!(out.status.success());

    let a = rows(&first);
    let b = rows(&second);
    assert_eq!(a.len(), 6);
    assert_eq!(b.len(), 10);
    assert_eq!(&b[..6], &a[..]);
}

#[test]
fn missing_store_reports_a_typed_error() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("nothing-here");
    let out = stsurr(&["fit-linear", "--store", store.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let line = error_line(&out);
    let fields: Vec<&str> = line.split('\t').collect();
    assert_eq!(fields.len(), 3, "{line}");
    assert!(fields[1].starts_with("kind=") && fields[1] != "kind=UsageError", "{line}");
    assert!(fields[2].starts_with("message="));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "seed = 3\nbogus = 1\n").unwrap();
    let out = stsurr(&["--config", cfg.to_str().unwrap(), "sample", "--n", "2", "--out", "x.tsv"]);
    assert_eq!(out.status.code(), Some(1));
    let line = error_line(&out);
    assert!(line.contains("kind=UsageError") && line.contains("bogus"), "{line}");
}
