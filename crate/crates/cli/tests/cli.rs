use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_modescope"));
    cmd.args(args).current_dir(dir).env_remove("MODESCOPE_SEED");
    if let Some(s) = seed {
        cmd.env("MODESCOPE_SEED", s);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn config(modes: &str, grid: &str, noise: &str) -> String {
    format!(
        r#"{{
            "qubit": {{"freq_hz": 6.0e9, "t2_s": 65e-6, "t1_s": 40e-6}},
            "modes": [{modes}],
            "drive": {{"epsilon_hz": 120e3}},
            "asymmetry_w": 0.4,
            "grid": {grid},
            "noise": {noise},
            "seed": 42
        }}"#
    )
}

const BUS: &str = r#"{"label": "bus", "freq_hz": 7.24e9, "kappa_hz": 72.4e3, "chi_hz": 300e3}"#;
const BUS_GRID: &str = r#"{"start_hz": 7.2385e9, "stop_hz": 7.2415e9, "step_hz": 5e3}"#;

fn rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn simulate_then_refit_recovers_the_mode() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.json"), config(BUS, BUS_GRID, "{}")).unwrap();
    let out = run(
        d,
        &["simulate", "--config", "c.json", "--out", "s.csv"],
        None,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(rows(&d.join("s.csv")).len(), 601);
    let meta = json(&d.join("s.meta.json"));
    assert_eq!(meta["seed"], 42);
    assert_eq!(meta["seed_source"], "config");

    let out = run(d, &["fit", "s.csv", "--out", "f.json"], None);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let fit = json(&d.join("f.json"));
    let want = [
        ("freq_bare_hz", 7.24e9),
        ("kappa_hz", 72.4e3),
        ("chi_hz", 300e3),
        ("epsilon_rf_hz", 120e3),
        ("asymmetry_w", 0.4),
        ("gamma2_baseline_per_s", 1.0 / 65e-6),
    ];
    for (name, value) in want {
        let got = fit["params"][name].as_f64().unwrap();
        assert!(
            (got - value).abs() / value <= 1e-3,
            "{name}: {got} vs {value}"
        );
    }

    let out = run(
        d,
        &[
            "fit",
            "s.csv",
            "--guess",
            "f.json",
            "--fixed-w",
            "0.4",
            "--out",
            "f2.json",
        ],
        None,
    );
    assert_eq!(code(&out), 0);
    assert_eq!(json(&d.join("f2.json"))["params"]["asymmetry_w"], 0.4);

    std::fs::write(d.join("p.csv"), "power,n_bar\n0,0.05\n1,1.05\n2,2.05\n").unwrap();
    let out = run(
        d,
        &[
            "report", "f.json", "--power", "p.csv", "--sweep", "s.csv", "--out", "r.json",
        ],
        None,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&d.join("r.json"));
    assert!((report["q_factor"].as_f64().unwrap() - 1e5).abs() <= 100.0);
    assert_eq!(report["photon_calibration"]["occupancy"]["kind"], "thermal");
    let plot = std::fs::read_to_string(d.join("r.plot.csv")).unwrap();
    assert!(plot.starts_with("kind,drive_freq_hz,gamma2_per_s\n"));
    assert_eq!(plot.lines().filter(|l| l.starts_with("data,")).count(), 601);
}

#[test]
fn two_mode_survey_and_detection() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let r1 = r#"{"label": "R1", "freq_hz": 6.4e9, "kappa_hz": 512e3, "chi_hz": 1e6}"#;
    let grid = r#"{"start_hz": 5e9, "stop_hz": 16e9, "step_hz": 5e6}"#;
    let modes = format!("{r1}, {BUS}");
    let text = config(&modes, grid, "{}").replace("\"epsilon_hz\": 120e3", "\"epsilon_hz\": 1e6");
    std::fs::write(d.join("c.json"), text).unwrap();
    assert_eq!(
        code(&run(
            d,
            &["simulate", "--config", "c.json", "--out", "s.csv"],
            None
        )),
        0
    );
    let sweep = rows(&d.join("s.csv"));
    assert_eq!(sweep.len(), 2201);
    let t2_at = |hz: f64| sweep.iter().find(|r| (r[0] - hz).abs() < 1.0).unwrap()[1];
    assert!(t2_at(6.4e9) < 1e-6 && t2_at(7.24e9) < 1e-6);

    let catalog = r#"{"entries": [
        {"label": "R1", "freq_hz": 6.4e9, "origin": "designed"},
        {"label": "bus", "freq_hz": 7.24e9, "origin": "designed"}
    ]}"#;
    std::fs::write(d.join("cat.json"), catalog).unwrap();
    let out = run(
        d,
        &[
            "detect",
            "s.csv",
            "--catalog",
            "cat.json",
            "--out",
            "d.json",
        ],
        None,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&d.join("d.json"));
    let features = report["features"].as_array().unwrap();
    let labels: Vec<&str> = features
        .iter()
        .map(|f| f["matched_label"].as_str().unwrap())
        .collect();
    assert_eq!(labels, ["R1", "bus"]);
    assert!(features.iter().all(|f| f["classification"] == "designed"));
    assert_eq!(report["settings"]["rel_tolerance"], 0.025);
}

#[test]
fn no_modes_gives_a_flat_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.json"), config("", BUS_GRID, "{}")).unwrap();
    assert_eq!(
        code(&run(
            d,
            &["simulate", "--config", "c.json", "--out", "s.csv"],
            None
        )),
        0
    );
    assert!(rows(&d.join("s.csv")).iter().all(|r| r[1] == 65e-6));
}

#[test]
fn seed_override_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("c.json"),
        config(BUS, BUS_GRID, r#"{"t2_jitter_rel": 0.02}"#),
    )
    .unwrap();
    run(
        d,
        &["simulate", "--config", "c.json", "--out", "a.csv"],
        None,
    );
    run(
        d,
        &["simulate", "--config", "c.json", "--out", "b.csv"],
        Some("42"),
    );
    run(
        d,
        &["simulate", "--config", "c.json", "--out", "c.csv"],
        Some("43"),
    );
    let read = |n: &str| std::fs::read(d.join(n)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));
    let meta = json(&d.join("c.meta.json"));
    assert_eq!(meta["seed"], 43);
    assert_eq!(meta["seed_source"], "env");
    assert_eq!(
        code(&run(
            d,
            &["simulate", "--config", "c.json", "--out", "e.csv"],
            Some("abc")
        )),
        2
    );
}

#[test]
fn invalid_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let text = config(BUS, BUS_GRID, "{}").replace("\"asymmetry_w\": 0.4", "\"asymmetry_w\": 1.4");
    std::fs::write(d.join("c.json"), text).unwrap();
    let out = run(
        d,
        &["simulate", "--config", "c.json", "--out", "s.csv"],
        None,
    );
    assert_eq!(code(&out), 2);
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    assert!(!d.join("s.csv").exists());
    let bad_window = run(
        d,
        &["fit", "s.csv", "--window", "9:1", "--out", "f.json"],
        None,
    );
    assert_eq!(code(&bad_window), 2);
}

#[test]
fn featureless_fit_exits_with_three_and_writes_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.json"), config("", BUS_GRID, "{}")).unwrap();
    run(
        d,
        &["simulate", "--config", "c.json", "--out", "s.csv"],
        None,
    );
    let out = run(d, &["fit", "s.csv", "--out", "f.json"], None);
    assert_eq!(code(&out), 3);
    let diag = json(&d.join("f.json"));
    assert_eq!(diag["status"], "failed");
    assert_eq!(diag["error"], "no_feature");
    assert_eq!(diag["points"], 601);
}

#[test]
fn missing_input_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["fit", "nope.csv", "--out", "f.json"], None);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));
}

#[test]
fn oracle_writes_trajectory_and_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(
        d,
        &[
            "oracle",
            "--mode-kappa-hz",
            "1e6",
            "--mode-chi-hz",
            "5e5",
            "--epsilon-hz",
            "2e5",
            "--detuning-hz",
            "0",
            "--cutoff",
            "12",
            "--t-max-kappa",
            "60",
            "--samples",
            "300",
            "--out",
            "o.csv",
        ],
        None,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(d.join("o.csv")).unwrap();
    assert!(text.starts_with("t_s,rho01_abs,rho01_phase_rad,n_photon\n"));
    assert!(text.lines().count() > 100);
    let cmp = json(&d.join("o.comparison.json"));
    assert!(cmp.is_object());

    let overflow = run(
        d,
        &[
            "oracle",
            "--mode-kappa-hz",
            "1e6",
            "--mode-chi-hz",
            "5e5",
            "--epsilon-hz",
            "2e6",
            "--detuning-hz",
            "0",
            "--cutoff",
            "10",
            "--t-max-kappa",
            "10",
            "--out",
            "x.csv",
        ],
        None,
    );
    assert_eq!(code(&overflow), 3);
}
