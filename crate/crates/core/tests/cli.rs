use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use selfcorr::engine::Trajectory;

fn selfcorr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfcorr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = selfcorr(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen_suite(dir: &Path) {
    ok(&["gen-suite", "--kind", "math-corrupt", "--out", p(dir), "--train", "24", "--valid", "4", "--test", "6", "--seed", "3"]);
}

fn write_config(dir: &Path, suite: &Path) -> std::path::PathBuf {
    let cfg = dir.join("run.toml");
    fs::write(
        &cfg,
        format!("suite = {:?}\n[hyper]\nn_samples = 4\niterations = 1\nlearn_steps = 30\nbatch_size = 8\n", p(suite)),
    )
    .unwrap();
    cfg
}

#[test]
fn gen_suite_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen_suite(&a);
    gen_suite(&b);
    for f in ["train.jsonl", "valid.jsonl", "test.jsonl", "suite.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(fs::read_to_string(a.join("test.jsonl")).unwrap().lines().count(), 6);
}

#[test]
fn train_then_eval_and_infer() {
    let tmp = tempfile::tempdir().unwrap();
    let suite = tmp.path().join("suite");
    gen_suite(&suite);
    let cfg = write_config(tmp.path(), &suite);
    let run = tmp.path().join("run");
    let text = ok(&["train", "--config", p(&cfg), "--out", p(&run), "--ablate", "no-exploration"]);
    assert!(text.contains("iteration 1:"), "{text}");
    for f in ["config.toml", "metrics.csv", "datapool.jsonl", "params.jsonl", "vocab.txt", "run-meta.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let snapshot = fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(snapshot.contains("no_exploration = true"), "{snapshot}");
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2);

    let curve = tmp.path().join("curve.csv");
    let report = ok(&["eval", "--run", p(&run), "--curve-out", p(&curve), "--max-corrections", "2"]);
    assert!(report.starts_with("mode"), "{report}");
    let curve = fs::read_to_string(curve).unwrap();
    assert_eq!(curve.lines().next(), Some("t,always,oracle"));
    assert_eq!(curve.lines().count(), 4);

    let t = 2;
    let lines = ok(&["infer", "--run", p(&run), "--max-corrections", "2"]);
    let mut per_input = std::collections::BTreeMap::<String, usize>::new();
    for l in lines.lines() {
        let cols: Vec<&str> = l.split('\t').collect();
        assert_eq!(cols.len(), 5, "{l}");
        *per_input.entry(cols[0].to_owned()).or_default() += 1;
    }
    assert_eq!(per_input.len(), 6);
    assert!(per_input.values().all(|&n| (1..=t + 1).contains(&n)));

    let json = ok(&["infer", "--run", p(&run), "--input", "math-test-0000", "--json"]);
    let trajs: Vec<Trajectory> = json.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(trajs.len(), 1);
    assert_eq!(trajs[0].input_id, "math-test-0000");
}

#[test]
fn usage_and_config_errors_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.toml");
    let out = selfcorr(&["train", "--config", p(&missing), "--out", p(&tmp.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = selfcorr(&["eval", "--run", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = selfcorr(&["gen-suite", "--kind", "poetry", "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_ablation_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let suite = tmp.path().join("suite");
    gen_suite(&suite);
    let cfg = write_config(tmp.path(), &suite);
    let out = selfcorr(&["train", "--config", p(&cfg), "--out", p(&tmp.path().join("r")), "--ablate", "no-pairs"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-pairs"));
}
