use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_kahlerlab");

fn kahlerlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).env_remove("KAHLERLAB_OUT_DIR").output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn regmax_check_with_defaults_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[regmax]\nsamples = 200\n");
    let o = kahlerlab(dir.path(), &["regmax-check", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let out = dir.path().join("kahlerlab-out");
    assert!(out.join("regmax-check.csv").exists());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("regmax-check.json")).unwrap()).unwrap();
    assert_eq!(json["experiment"], "regmax-check");
    assert_eq!(json["seed"], 42);
    assert_eq!(json["passed"], true);
}

#[test]
fn curvature_truth_reports_fubini_study_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[curvature]\npoints = 20\n");
    let o = kahlerlab(dir.path(), &["curvature-truth", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("fubini-study-P1 mean S") && text.contains("2.0000"), "{text}");
    assert!(text.contains("fubini-study-P2 mean S") && text.contains("6.0000"), "{text}");
}

#[test]
fn condition_violation_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[glue]\na_n = 5\n");
    let o = kahlerlab(dir.path(), &["regmax-check", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("validate_condition"), "{}", stderr(&o));
    assert!(!dir.path().join("kahlerlab-out").exists());
}

#[test]
fn geometry_preconditions_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for (text, name) in [("[geometry]\nbeta = 2\n", "beta ≥ 3"), ("[geometry]\nl = 2\n", "l > n"), ("[glue]\na2 = \"1/2\"\n", "constraint")] {
        let cfg = write(dir.path(), "c.toml", text);
        let o = kahlerlab(dir.path(), &["curvature-truth", "--config", &cfg]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(stderr(&o).contains(name), "{}", stderr(&o));
    }
}

#[test]
fn unparseable_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[glue\n");
    let o = kahlerlab(dir.path(), &["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("parseable config"));
}

#[test]
fn report_without_artifacts_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = kahlerlab(dir.path(), &["report", "--dir", "."]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("nothing to report"));
}

#[test]
fn run_honours_selector_env_override_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[run]\nexperiment = \"curvature-truth\"\nout_dir = \"unused\"\n[curvature]\npoints = 10\n");
    let mut csvs = Vec::new();
    for sub in ["a", "b"] {
        let o = Command::new(BIN).args(["run", &cfg]).current_dir(dir.path()).env("KAHLERLAB_OUT_DIR", sub).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        csvs.push(fs::read(dir.path().join(sub).join("curvature-truth.csv")).unwrap());
    }
    assert!(!dir.path().join("unused").exists());
    assert_eq!(csvs[0], csvs[1]);
    let header = String::from_utf8_lossy(&csvs[0]).lines().next().unwrap().to_string();
    assert_eq!(header, "series,point,label,driver,S,eig_min,eig_max");

    let o = kahlerlab(dir.path(), &["report", "--dir", "a"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("fubini-study-P2 mean S"));
}

#[test]
fn seed_changes_sampled_points() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for seed in [1, 2] {
        let cfg = write(dir.path(), "c.toml", &format!("[run]\nseed = {seed}\nout_dir = \"s{seed}\"\n[curvature]\npoints = 5\n"));
        let o = kahlerlab(dir.path(), &["curvature-truth", "--config", &cfg]);
        assert_eq!(o.status.code(), Some(0));
        csvs.push(fs::read(dir.path().join(format!("s{seed}")).join("curvature-truth.csv")).unwrap());
    }
    assert_ne!(csvs[0], csvs[1]);
}

#[test]
fn default_config_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let o = kahlerlab(dir.path(), &["default-config"]);
    assert_eq!(o.status.code(), Some(0));
    let cfg = write(dir.path(), "d.toml", &stdout(&o));
    let o = kahlerlab(dir.path(), &["regmax-check", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}
