use std::path::Path;
use std::process::{Command, Output};

use feature_market::verifier::SmallInstance;

fn fmkt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmkt"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn write_s1_config(dir: &Path, reps: usize) -> std::path::PathBuf {
    let path = dir.join("s1.toml");
    let text = format!(
        r#"
target_gain = 0.1

[experiment]
repetitions = {reps}
seed_base = 42

[economics]
unit_value = 50.0
budget = 10.0

[oracle]
kind = "table"
[oracle.gains]
F1 = 0.05
F2 = 0.1
F3 = 0.2

[catalog]
kind = "explicit"
[[catalog.bundles]]
id = "F1"
features = ["a"]
p = 5.0
base = 0.5
[[catalog.bundles]]
id = "F2"
features = ["b", "c"]
p = 8.0
base = 1.0
[[catalog.bundles]]
id = "F3"
features = ["a", "b", "c", "d"]
p = 12.0
base = 2.0
"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_writes_artifacts_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_s1_config(dir.path(), 6);
    let out_dir = dir.path().join("artifacts");

    let out = fmkt(
        &["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("artifacts written to"));

    for name in ["raw.csv", "summary.json", "density.csv", "transcripts.jsonl"] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["runs"], 6);
}

#[test]
fn run_accepts_agent_and_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_s1_config(dir.path(), 3);
    let out_dir = dir.path().join("escalated");

    let out = fmkt(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--agent",
            "increase_price",
            "--seed",
            "9",
            "--out",
            out_dir.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out_dir.join("summary.json").is_file());
}

#[test]
fn unknown_agent_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_s1_config(dir.path(), 2);
    let out = fmkt(&["run", "--config", cfg.to_str().unwrap(), "--agent", "psychic"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown agent"));
}

#[test]
fn verify_passes_a_sound_instance_and_prints_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let instance = SmallInstance::random(5);
    let path = dir.path().join("instance.json");
    std::fs::write(&path, serde_json::to_string_pretty(&instance).unwrap()).unwrap();

    let out = fmkt(&["verify", "--instance", path.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));

    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let checks = report["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    let mut passes = 0;
    for check in checks {
        assert_ne!(check["status"], "fail", "{check}");
        if check["status"] == "pass" {
            passes += 1;
        }
    }
    assert!(passes > 0, "audit ran no applicable checks");
    assert!(report["equilibrium"]["examined"].as_u64().unwrap() > 0);
}

#[test]
fn verify_rejects_a_malformed_instance() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{\"catalog\": []}").unwrap();

    let out = fmkt(&["verify", "--instance", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("error"));
}

#[test]
fn sweep_builds_one_folder_per_cost() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_s1_config(dir.path(), 3);
    let out_dir = dir.path().join("sweep");

    let out = fmkt(
        &[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--costs",
            "none,linear:0.1,exp:1.01:10",
            "--out",
            out_dir.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out_dir.join("none/raw.csv").is_file());
    assert!(out_dir.join("linear_0.1/summary.json").is_file());
    assert!(out_dir.join("exp_1.01_x10/summary.json").is_file());
    assert!(out_dir.join("sweep.json").is_file());
}

#[test]
fn bad_cost_specs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_s1_config(dir.path(), 2);
    for (costs, needle) in [
        ("quadratic:2", "unknown cost kind"),
        ("linear", "missing its coefficient"),
        ("linear:0.1:1:9", "trailing field"),
        (" ", "lists no cost models"),
    ] {
        let out =
            fmkt(&["sweep", "--config", cfg.to_str().unwrap(), "--costs", costs], dir.path());
        assert_eq!(out.status.code(), Some(2), "costs={costs:?}");
        assert!(stderr(&out).contains(needle), "costs={costs:?}: {}", stderr(&out));
    }
}

#[test]
fn datasets_replicas_match_the_published_widths() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("replicas");
    let out = fmkt(&["datasets", "--out", out_dir.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));

    let text = stdout(&out);
    assert_eq!(text.matches("ok ").count(), 3, "{text}");
    assert!(!text.contains("MISMATCH"));
    for name in ["titanic", "credit", "adult"] {
        assert!(out_dir.join(format!("{name}.csv")).is_file());
        assert!(out_dir.join(format!("{name}.schema.toml")).is_file());
    }
}
