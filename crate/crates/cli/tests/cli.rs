use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn diskpop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diskpop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = diskpop(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&["generate", "--n", "50", "--seed", "42", "--out", s(&a)]);
    ok(&["generate", "--n", "50", "--seed", "42", "--out", s(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 51);
    assert!(text.starts_with("dataset_id,origin,configuration,"));
}

#[test]
fn generate_rejects_zero_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let out = diskpop(&[
        "generate",
        "--n",
        "0",
        "--out",
        s(&dir.path().join("x.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_documents_default_mix() {
    let out = diskpop(&["generate", "--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("50% cold"));
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = diskpop(&[
        "compare",
        "--input",
        s(&dir.path().join("nope.csv")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(diskpop(&["compare", "--bogus"]).status.code(), Some(2));
}

#[test]
fn degenerate_corpus_is_a_pipeline_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cat = dir.path().join("cold.csv");
    ok(&[
        "generate",
        "--n",
        "40",
        "--cold-fraction",
        "1",
        "--out",
        s(&cat),
    ]);
    let out = diskpop(&[
        "recommend",
        "--input",
        s(&cat),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn features_dump_has_one_row_per_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cat = dir.path().join("c.json");
    let feats = dir.path().join("f.csv");
    ok(&["generate", "--n", "30", "--out", s(&cat)]);
    ok(&["features", "--input", s(&cat), "--out", s(&feats)]);
    let text = fs::read_to_string(&feats).unwrap();
    assert_eq!(text.lines().count(), 31);
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("dataset_id,nb_peaks,"));
    assert!(header.ends_with(",label"));
}

#[test]
fn recommend_writes_verified_plan() {
    let dir = tempfile::tempdir().unwrap();
    let cat = dir.path().join("c.csv");
    let out = dir.path().join("out");
    ok(&["generate", "--n", "300", "--seed", "5", "--out", s(&cat)]);
    ok(&[
        "recommend",
        "--input",
        s(&cat),
        "--out",
        s(&out),
        "--verify",
    ]);

    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    let obj = summary.as_object().unwrap();
    let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(
        keys,
        [
            "datasets_removed",
            "space_saved_gb",
            "threshold",
            "total_loss"
        ]
    );
    assert!(obj["threshold"].is_f64());

    let plan = fs::read_to_string(out.join("plan.csv")).unwrap();
    assert_eq!(plan.lines().count(), 301);
    let removed = plan
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(3) == Some("0"))
        .count();
    assert_eq!(removed as u64, obj["datasets_removed"].as_u64().unwrap());

    let again = dir.path().join("again");
    ok(&["recommend", "--input", s(&cat), "--out", s(&again)]);
    for f in ["plan.csv", "summary.json", "intensity.csv"] {
        assert_eq!(
            fs::read(out.join(f)).unwrap(),
            fs::read(again.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn compare_with_single_cells_has_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cat = dir.path().join("c.csv");
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        "[grids]\nalpha = [0.05]\nmax_replicas = [4]\nlru_weeks = [10]\n",
    )
    .unwrap();
    ok(&["generate", "--n", "200", "--out", s(&cat)]);
    let out = dir.path().join("out");
    ok(&[
        "compare",
        "--config",
        s(&config),
        "--input",
        s(&cat),
        "--out",
        s(&out),
    ]);
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("optimizer,0.05,4,"));
    assert!(lines[2].starts_with("lru,10,,"));
    assert!(fs::read_to_string(out.join("report.txt"))
        .unwrap()
        .contains("LRU baseline"));
}
