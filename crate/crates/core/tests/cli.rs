use std::path::Path;
use std::process::Command;

fn pivot(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pivot")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_writes_log_and_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[episode]\nobject = \"curved\"\nscenario = \"in_air\"\ngroup = \"CG\"\n");
    let out = dir.path().join("o");
    let o = pivot(&["run", "--config", &cfg, "--seed", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("Success"));
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let row = results.lines().nth(1).unwrap();
    assert!(row.starts_with("curved,in_air,CG,2,Success,"), "{row}");
    let log = std::fs::read_to_string(out.join("episode.csv")).unwrap();
    assert!(log.lines().any(|l| l.starts_with("cycle,")));
}

#[test]
fn plot_replays_a_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[episode]\nobject = \"soft\"\ntime_limit = 2.0\n");
    let run = dir.path().join("run");
    assert!(pivot(&["run", "--config", &cfg, "--out", run.to_str().unwrap()]).status.success());
    let log = run.join("episode.csv");
    let plots = dir.path().join("plots");
    let o = pivot(&["plot", "--log", log.to_str().unwrap(), "--out", plots.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["error.csv", "force.csv", "slip.csv", "activity.csv"] {
        assert!(plots.join(f).exists(), "{f}");
    }
    let clash = pivot(&["plot", "--log", log.to_str().unwrap(), "--seed", "3", "--out", plots.to_str().unwrap()]);
    assert!(!clash.status.success());
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[controller]\nrotation_cap_deg = 10.0\n");
    let o = pivot(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    let missing = pivot(&["run", "--config", "/nonexistent/cfg.toml"]);
    assert!(!missing.status.success());
}

#[test]
fn demo_runs_both_phases() {
    let dir = tempfile::tempdir().unwrap();
    let o = pivot(&["demo", "--seed", "1", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("demo succeeded"), "{stdout}");
    assert!(dir.path().join("phase1_in_air.csv").exists());
    assert!(dir.path().join("phase2_contact.csv").exists());
}
