use std::path::Path;
use std::process::{Command, Output};

fn fixtures() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn run(work: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polariscope"))
        .arg("--workdir")
        .arg(work)
        .args(args)
        .env_remove("POLARISCOPE_SNAPSHOT")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(work: &Path, args: &[&str]) -> String {
    let out = run(work, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn err(work: &Path, args: &[&str]) -> String {
    let out = run(work, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn stages(fx: &str) -> Vec<Vec<String>> {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    vec![
        s(&["ingest", "--fixture", fx]),
        s(&["annotate"]),
        s(&["clean"]),
        s(&["train"]),
        s(&[
            "embed-load",
            "--manifest",
            &format!("{fx}/external/political.manifest.json"),
            "--manifest",
            &format!("{fx}/external/background.manifest.json"),
            "--attention",
            &format!("{fx}/attention.jsonl"),
        ]),
        s(&["index"]),
        s(&["classify"]),
        s(&["polarize"]),
    ]
}

#[test]
fn full_pipeline_then_rerun_is_cached() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path();
    let fx = fixtures().to_string_lossy().into_owned();
    for args in stages(&fx) {
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = ok(work, &argv);
        assert!(!out.contains("up to date"), "{argv:?}: {out}");
    }
    let report = ok(work, &["report"]);
    let rows = report.lines().filter(|l| l.starts_with("SVM ") || l.starts_with("K-means ")).count();
    assert_eq!(rows, 8, "{report}");

    for args in stages(&fx) {
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = ok(work, &argv);
        assert!(out.trim_end().ends_with("up to date"), "{argv:?}: {out}");
    }

    let out = ok(work, &["--force", "classify"]);
    assert!(!out.contains("up to date"), "{out}");

    // A changed parameter invalidates only that stage.
    let out = ok(work, &["train", "--seed", "7"]);
    assert!(!out.contains("up to date"), "{out}");
    let out = ok(work, &["train", "--seed", "7"]);
    assert!(out.contains("up to date"), "{out}");
}

#[test]
fn missing_inputs_name_the_producing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path();
    assert!(err(work, &["annotate"]).contains("polariscope ingest"));

    let fx = fixtures().to_string_lossy().into_owned();
    for args in &stages(&fx)[..4] {
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        ok(work, &argv);
    }
    let msg = err(work, &["serve", "--port", "0"]);
    assert!(msg.contains("polariscope index"), "{msg}");
}

#[test]
fn ingest_needs_a_source() {
    let dir = tempfile::tempdir().unwrap();
    let msg = err(dir.path(), &["ingest"]);
    assert!(msg.contains("--fixture"), "{msg}");
}
