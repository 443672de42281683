use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
d = 3
N = 8
ensemble = 4
tau_max = 0.5
"#;

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_landau-tagged"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("tiny.toml"), TINY).unwrap();
    let mut runs = Vec::new();
    for (out, threads) in [("a", "1"), ("b", "3")] {
        let o = run(
            &["simulate", "--config", "tiny.toml", "--seed", "7", "--out", out, "--threads", threads],
            tmp.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        runs.push(csvs(&tmp.path().join(out)));
    }
    assert!(!runs[0].is_empty());
    assert_eq!(runs[0], runs[1]);
    for (name, bytes) in &runs[0] {
        let first = bytes.split(|b| *b == b'\n').next().unwrap();
        let first = String::from_utf8_lossy(first);
        assert!(first.starts_with("# command=simulate"), "{name}: {first}");
        assert!(first.contains("seed=7"), "{name}: {first}");
    }
    // the written config reproduces the run
    let o = run(&["simulate", "--config", "a/config.toml", "--out", "c"], tmp.path());
    assert!(o.status.success());
    assert_eq!(csvs(&tmp.path().join("c")), runs[0]);
}

#[test]
fn errors_exit_with_json() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.toml"), "d = 1\n").unwrap();
    let o = run(&["simulate", "--config", "bad.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(err["status"], "error");
    assert_eq!(err["kind"], "config");
    assert!(err["message"].as_str().unwrap().contains("dim"));

    let o = run(&["simulate", "--config", "missing.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(err["kind"], "io");
    assert!(!tmp.path().join("out").exists());
}
