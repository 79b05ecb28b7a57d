use std::fs;
use std::path::Path;
use std::process::Command;

use mlsvgd::experiment::{parse_sweep_csv, CSV_HEADER};

const TINY: &str = r#"{
  "n_steps": [3],
  "epsilons": [0.25, 0.125],
  "repetitions": 2,
  "l_ref": 6,
  "n_ref": 40,
  "c_sl": 0.5,
  "c_ml": 0.001,
  "target": { "max_level": 6, "data_level": 8 }
}"#;

fn mlsvgd(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mlsvgd"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("config.json"), config).unwrap();
    dir
}

#[test]
fn sweep_writes_csv_and_is_reproducible() {
    let dir = setup(TINY);
    let run = |out: &str| {
        let o = mlsvgd(
            &[
                "sweep",
                "--config",
                "config.json",
                "--out",
                out,
                "--parallel",
                "1",
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(dir.path().join(out).join("sweep.csv")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    assert!(a.starts_with(&format!("{CSV_HEADER}\n")));
    assert_eq!(parse_sweep_csv(&a).unwrap().len(), 2);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);
    assert!(report["forward"].is_object());
}

#[test]
fn seed_flag_changes_results() {
    let dir = setup(TINY);
    let run = |seed: &str, out: &str| {
        let o = mlsvgd(
            &[
                "sweep",
                "--config",
                "config.json",
                "--out",
                out,
                "--seed",
                seed,
            ],
            dir.path(),
        );
        assert!(o.status.success());
        fs::read_to_string(dir.path().join(out).join("sweep.csv")).unwrap()
    };
    assert_ne!(run("1", "a"), run("2", "b"));
}

#[test]
fn reference_is_cached_between_invocations() {
    let dir = setup(TINY);
    let first = mlsvgd(
        &["reference", "--config", "config.json", "--out", "o"],
        dir.path(),
    );
    let second = mlsvgd(
        &["reference", "--config", "config.json", "--out", "o"],
        dir.path(),
    );
    assert!(String::from_utf8_lossy(&first.stdout).contains("cached=false"));
    assert!(String::from_utf8_lossy(&second.stdout).contains("cached=true"));
    assert!(dir.path().join("o/references.json").exists());
}

#[test]
fn run_ml_reports_levels_and_dumps_particles() {
    let dir = setup(TINY);
    let o = mlsvgd(
        &[
            "run-ml",
            "--config",
            "config.json",
            "--out",
            "o",
            "--epsilon",
            "0.0625",
            "--dump-particles",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/run_ml.json")).unwrap())
            .unwrap();
    let levels = v["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 3);
    for key in [
        "level",
        "N",
        "estimate_fine",
        "estimate_aux",
        "difference",
        "cost_units",
    ] {
        assert!(levels[1].get(key).is_some(), "missing {key}");
    }
    assert!(levels[0]["estimate_aux"].is_null());
    let base = fs::read_to_string(dir.path().join("o/particles_ml_level3.csv")).unwrap();
    assert!(base.starts_with("x0,x1,"));
    assert_eq!(
        base.lines().count(),
        1 + levels[0]["N"].as_u64().unwrap() as usize
    );
    assert!(dir.path().join("o/particles_ml_level5_aux.csv").exists());
}

#[test]
fn run_sl_and_rates() {
    let dir = setup(TINY);
    let o = mlsvgd(
        &[
            "run-sl",
            "--config",
            "config.json",
            "--out",
            "o",
            "--n-steps",
            "2",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    assert!(dir.path().join("o/run_sl.json").exists());
    let o = mlsvgd(
        &[
            "rates",
            "--config",
            "config.json",
            "--out",
            "o",
            "--samples",
            "5",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/rates.json")).unwrap())
            .unwrap();
    assert!(v["beta"]["slope"].as_f64().unwrap() < 0.0);
}

#[test]
fn invalid_config_exits_with_2() {
    for bad in [
        r#"{"l_ref": 3}"#,
        r#"{"repetitions": 1}"#,
        r#"{"unknown_key": 1}"#,
        r#"{"gamma": -1}"#,
        "not json",
    ] {
        let dir = setup(bad);
        let o = mlsvgd(
            &["run-sl", "--config", "config.json", "--out", "o"],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(2), "config {bad}");
    }
    let dir = tempfile::tempdir().unwrap();
    let o = mlsvgd(&["sweep", "--config", "missing.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_3() {
    let dir = setup(&TINY.replace(
        "\"repetitions\": 2,",
        "\"repetitions\": 2, \"gamma\": 1000.0,",
    ));
    let o = mlsvgd(
        &[
            "run-sl",
            "--config",
            "config.json",
            "--out",
            "o",
            "--n-steps",
            "200",
        ],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-finite"));
}
