use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn tmv(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tmv"))
        .args(args)
        .current_dir(dir)
        .env_remove("TMV_THREADS")
        .output()
        .expect("run tmv")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no JSON in {text}"));
    serde_json::from_str(line).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn unknown_preset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = tmv(&["reproduce", "--preset", "nope", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["exit_code"], 2);
    assert!(err["error"].as_str().unwrap().contains("nope"), "{err}");
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = tmv(&["ingest", "--input", "absent.csv"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["exit_code"], 3);
}

#[test]
fn bad_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tmv(&["run", "--no-such-flag"], dir.path()).status.code(), Some(2));
}

#[test]
fn stages_chain_on_the_small_preset() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = |args: &[&str]| {
        let out = tmv(args, d);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    ok(&["synth", "--preset", "small", "--seed", "5"]);
    assert!(d.join("raw.csv").exists() && d.join("gen_log.json").exists());
    ok(&["ingest", "--input", "raw.csv", "--validate"]);
    ok(&["clean", "--input", "raw.csv"]);
    let exclusions = json(&d.join("exclusions.json"));
    assert_eq!(exclusions["subjects"].as_array().unwrap().len(), 1, "{exclusions}");
    ok(&["run", "--input", "clean.csv", "--specs", "rf:trees=20;knn;lda", "--seed", "5"]);
    for f in ["ranking.json", "status.json", "tmv_result.json", "labels.json", "timelines.csv", "runtime.json"] {
        assert!(d.join("results").join(f).exists(), "{f}");
    }
    let result = json(&d.join("results/tmv_result.json"));
    assert!(result["best"].as_str().unwrap().starts_with(
        json(&d.join("results/ranking.json"))["entries"][0]["spec"].as_str().unwrap()
    ));
    ok(&["report", "--subject", "s2", "--task", "1"]);
    let run_dirs: Vec<_> = std::fs::read_dir(d.join("figures")).unwrap().collect();
    assert_eq!(run_dirs.len(), 1);
    let fig = run_dirs[0].as_ref().unwrap().path();
    assert!(fig.join("timeline_s2_task1.svg").exists());
    assert!(fig.join("manifest.json").exists());

    let out = tmv(&["report", "--subject", "s9", "--task", "1", "--out", "f2"], d);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["stage"], "report");
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |out: &str, threads: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_tmv"))
            .args(["reproduce", "--preset", "small", "--specs", "rf:trees=10;lda", "--out", out])
            .current_dir(d)
            .env("TMV_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(d.join(out).join("manifest.json")).unwrap()
    };
    assert_eq!(run("a", "1"), run("b", "2"));
}
