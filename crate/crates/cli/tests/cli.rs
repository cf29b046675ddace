use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"
[model]
kind = "st_transformed"

[model.st]
nodes = 32
observations = 8
times = 4

[filter]
kind = "sletpf"
particles = 12
patches = 8
kernel_width = 0.0625
radius = 0.1

[run]
seed = 3
repeats = 2
ground_truth_samples = 200
radii = [0.05, 0.1]
patch_counts = [8]
kernel_widths = [0.0625]
"#;

fn otlpf(dir: &Path, args: &[&str]) {
    let config = dir.join("cfg.toml");
    std::fs::write(&config, CONFIG).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_otlpf"))
        .args(["--threads", "2"])
        .args(args)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.join("out"))
        .status()
        .unwrap();
    assert!(status.success(), "otlpf {args:?} failed");
}

fn lines(path: impl AsRef<Path>) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(str::to_owned).collect()
}

#[test]
fn simulate_writes_truth_files() {
    let dir = tempfile::tempdir().unwrap();
    otlpf(dir.path(), &["simulate"]);
    for f in ["trajectory.bin", "observations.bin", "observations.csv"] {
        assert!(dir.path().join("out").join(f).is_file(), "{f} missing");
    }
}

#[test]
fn filter_writes_runs_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    otlpf(dir.path(), &["filter", "--dump-ensembles", "--dump-pou", "--dump-plans"]);
    let out = dir.path().join("out");
    let runs = lines(out.join("runs.csv"));
    assert_eq!(runs.len(), 3);
    assert!(runs[0].starts_with("schema_version,model,filter,B,w,r,P,seed,repeat"));
    assert!(runs[1].starts_with("1,st_transformed,sletpf,8,0.0625,0.1,12,3,0,"));
    assert!(runs.iter().skip(1).all(|r| r.ends_with(',')), "error column should be empty");
    assert!(out.join("ensembles_0.bin").is_file() && out.join("ensembles_1.bin").is_file());
    assert_eq!(lines(out.join("pou.csv")).len(), 9);
    assert_eq!(std::fs::read_dir(out.join("plans")).unwrap().count(), 8);
}

#[test]
fn grid_search_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    otlpf(dir.path(), &["grid-search"]);
    otlpf(dir.path(), &["rank-hist"]);
    otlpf(dir.path(), &["ground-truth"]);
    let out = dir.path().join("out");
    assert_eq!(lines(out.join("grid.csv")).len(), 1 + 2 * 2);
    let summary = lines(out.join("grid_summary.csv"));
    assert_eq!(summary.len(), 1 + 2 * 3);
    assert!(summary[1..].iter().any(|l| l.contains(",median,")));
    assert_eq!(lines(out.join("ground_truth.csv")).len(), 1 + 4 * 32);
    assert!(lines(out.join("rank_hist.csv")).len() > 1);
}

#[test]
fn rejects_unknown_config_fields() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[filter]\nparticle = 10\n").unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_otlpf"))
        .args(["simulate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("particle"));
}
