use std::fs;
use std::path::Path;
use std::process::Command;

use tugobs_cli::config::parse_config;
use tugobs_cli::pipeline::{file_sha256, run, RunError, RunOptions, Subcommand};

fn config_text(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)).unwrap()
}

fn options(dir: &Path, seed: Option<u64>) -> RunOptions {
    RunOptions {
        out_dir: Some(dir.to_path_buf()),
        seed,
    }
}

const CONSTANT: &str = r#"
[parameters]
p = 3.0
n = 1
eps = 0.2
t_final = 0.2

[domain]
kind = "interval"
lo = [-1.0]
hi = [1.0]

[data]
boundary = { kind = "constant", value = 2.5 }
obstacle = { kind = "constant", value = 0.0 }
c1 = 0.0
c2 = 0.0
"#;

#[test]
fn solve_constant_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config(CONSTANT).unwrap();
    let m = run(Subcommand::Solve, &config, &options(dir.path(), None)).unwrap();
    assert!(m.complete);
    assert!(m.residual.unwrap() <= 1e-12);
    assert_eq!(m.pipeline, vec!["solve"]);
    let derived = m.derived.as_ref().unwrap();
    assert_eq!(derived.levels, 10);
    let field = fs::read_to_string(dir.path().join("field.csv")).unwrap();
    let mut rows = 0;
    for line in field.lines().skip(1) {
        assert!(line.ends_with(",2.5"), "{line}");
        rows += 1;
    }
    assert!(rows > 0);
    for entry in &m.files {
        assert_eq!(file_sha256(dir.path(), entry).unwrap(), entry.sha256);
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["schema"], "tugobs.manifest/1");
    assert_eq!(manifest["complete"], true);
}

#[test]
fn simulate_is_deterministic() {
    let config = parse_config(&config_text("obstacle.toml")).unwrap();
    let mut config = config;
    config.simulation.as_mut().unwrap().episodes = 2000;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run(Subcommand::Simulate, &config, &options(a.path(), Some(5))).unwrap();
    let mb = run(Subcommand::Simulate, &config, &options(b.path(), Some(5))).unwrap();
    assert_eq!(ma.pipeline, vec!["solve", "simulate"]);
    let names: Vec<_> = ma.files.iter().map(|f| f.path.as_str()).collect();
    assert_eq!(names, vec!["field.csv", "solve.json", "episodes.jsonl", "estimate.json"]);
    for (fa, fb) in ma.files.iter().zip(&mb.files) {
        assert_eq!(fa, fb);
    }
    assert_eq!(
        fs::read(a.path().join("episodes.jsonl")).unwrap(),
        fs::read(b.path().join("episodes.jsonl")).unwrap()
    );
    assert_eq!(ma.config.simulation.as_ref().unwrap().seed, 5);
    let est = &ma.results["estimate"];
    let dpp = ma.results["dpp_value"].as_f64().unwrap();
    let mean = est["mean"].as_f64().unwrap();
    let se = est["std_error"].as_f64().unwrap();
    assert!((mean - dpp).abs() <= 3.0 * se + 0.02, "{mean} vs {dpp}");
}

#[test]
fn simulate_with_pull_strategies_in_two_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config(&config_text("disc.toml")).unwrap();
    let m = run(Subcommand::Simulate, &config, &options(dir.path(), None)).unwrap();
    let text = fs::read_to_string(dir.path().join("episodes.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 200);
    assert!(m.results["estimate"]["mean"].as_f64().unwrap().is_finite());
}

#[test]
fn converge_on_sine_instance_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config(&config_text("sine.toml")).unwrap();
    let m = run(Subcommand::Converge, &config, &options(dir.path(), None)).unwrap();
    assert_eq!(m.results["convergence"]["verdict"]["verdict"], "monotone");
    let csv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "eps,h,error");
    assert_eq!(csv.lines().count(), 4);
    assert!(m.timings.iter().any(|t| t.stage.starts_with("converge eps=")));
}

#[test]
fn validate_on_sine_instance_passes() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse_config(&config_text("sine.toml")).unwrap();
    let m = run(Subcommand::Validate, &config, &options(dir.path(), None)).unwrap();
    assert_eq!(m.pipeline, vec!["comparison", "modulus", "probe"]);
    for name in ["comparison.csv", "modulus.csv", "probe.csv", "probe.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    assert!(m.results["comparison_worst_margin"].as_f64().unwrap() >= -1e-12);
}

#[test]
fn incompatible_data_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let text = CONSTANT.replace(r#"obstacle = { kind = "constant", value = 0.0 }"#, r#"obstacle = { kind = "constant", value = 3.0 }"#);
    let config = parse_config(&text).unwrap();
    let failure = run(Subcommand::Solve, &config, &options(dir.path(), None)).unwrap_err();
    assert!(matches!(failure.error, RunError::Numerical(_)));
    assert_eq!(failure.error.exit_code(), 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["complete"], false);
    assert_eq!(manifest["failure"]["kind"], "numerical");
}

#[test]
fn validation_failures_exit_with_four() {
    assert_eq!(RunError::Validation("x".into()).exit_code(), 4);
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tugobs"))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, CONSTANT).unwrap();
    let out = dir.path().join("run");
    let status = binary()
        .args(["solve", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(&out)
        .args(["--threads", "2", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    assert!(status.stdout.is_empty());
    assert!(out.join("manifest.json").exists());

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, CONSTANT.replace("p = 3.0", "p = 1.5")).unwrap();
    let status = binary().args(["solve", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("p ≥ 2"));

    let incompatible = dir.path().join("incompatible.toml");
    fs::write(&incompatible, CONSTANT.replace("value = 0.0", "value = 3.0")).unwrap();
    let status = binary()
        .args(["solve", "--config"])
        .arg(&incompatible)
        .arg("--out")
        .arg(dir.path().join("inc"))
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(3));
}
