use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[schedule]
epsilons = [0.4, 0.2]

[transport]
replicas = 6
oracle_samples = 40
energy_replicas = 0
pair_times = [0.5, 1.0]
"#;

fn oulab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oulab"))
        .args(args)
        .env_remove("OULAB_WORKERS")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    let out = dir.join("out");
    std::fs::write(&path, format!("{body}\n[output]\ndir = {:?}\n", out.display().to_string())).unwrap();
    path.display().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write_config(dir.path(), "ok.toml", TINY);
    assert_eq!(code(&oulab(&["validate", "--config", &ok])), 0);

    let violating = r#"
[spectrum]
alpha = 1.5
beta = 0.9
[schedule]
condition = "iii"
epsilons = [0.4, 0.2, 0.1]
ell1_rule = { limit = 0.0, coef = 1.0, exponent = 4.0 }
kappa_rule = { limit = 0.1, coef = 0.0, exponent = 0.0 }
"#;
    let bad = write_config(dir.path(), "bad.toml", violating);
    let o = oulab(&["validate", "--config", &bad]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("violated"));

    let fixed = violating.replace("exponent = 4.0", "exponent = 2.0");
    let good = write_config(dir.path(), "good.toml", &fixed);
    assert_eq!(code(&oulab(&["validate", "--config", &good])), 0);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_config(dir.path(), "u.toml", "[transport]\nreplica = 3\n");
    assert_eq!(code(&oulab(&["validate", "--config", &unknown])), 2);
    let invalid = write_config(dir.path(), "i.toml", "[spectrum]\nalpha = 2.5\n");
    assert_eq!(code(&oulab(&["validate", "--config", &invalid])), 2);
    assert_eq!(code(&oulab(&["validate", "--config", "/nonexistent/oulab.toml"])), 2);
    // seed is mandatory
    let ok = write_config(dir.path(), "ok.toml", TINY);
    assert_eq!(code(&oulab(&["sweep", "--config", &ok])), 2);
    assert_eq!(code(&oulab(&["simulate", "--config", &ok])), 2);
}

#[test]
fn coarse_step_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[transport]\ndt = 1.0\nmax_step_fraction = 0.01\n");
    let o = oulab(&["simulate", "--config", &cfg, "--seed", "1"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn synth_writes_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("field.ouf");
    let o = oulab(&["synth", "--seed", "5", "--epsilon", "0.5", "--out", snap.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let bytes = std::fs::read(&snap).unwrap();
    assert_eq!(&bytes[..4], b"OUF1");
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["covariance_check"].as_array().unwrap().len(), 5);
}

#[test]
fn simulate_and_oracle_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.toml", TINY);
    let o = oulab(&["simulate", "--config", &cfg, "--seed", "2", "--epsilon", "0.4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["weak_observable"].as_f64().unwrap().abs() <= v["bound"].as_f64().unwrap());
    let grid = std::fs::read_to_string(dir.path().join("out/scalar_grid.csv")).unwrap();
    assert!(grid.starts_with("x1,x2,estimate,stderr\n"));

    let o = oulab(&["oracle", "--config", &cfg]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["dispersion_slope"].as_f64().unwrap() > 0.0);
    assert!(dir.path().join("out/pair_dispersion.csv").exists());
}

#[test]
fn sweep_then_report_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.toml", TINY);
    let o = oulab(&["sweep", "--config", &cfg, "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    for f in ["sweep.csv", "report.json", "timing.json", "gap_obs_mean.dat"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let again = dir.path().join("again");
    let o = oulab(&["report", "--input", out.join("report.json").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    for f in ["sweep.csv", "report.json"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
}
