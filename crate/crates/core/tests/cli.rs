use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pulse-spectra"))
        .args(args)
        .current_dir(cwd)
        .env("PULSE_SPECTRA_THREADS", "1")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json_stdout(o: &Output) -> serde_json::Value {
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn simulate_defaults_write_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--samples", "801", "--out", "traj.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("\"n0\":10000000.0") && err.contains("\"rel_tol\":1e-10"), "{err}");
    let text = std::fs::read_to_string(dir.path().join("traj.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 801);
    let peak = rows.iter().max_by(|a, b| a[1].total_cmp(&b[1])).unwrap();
    assert!(peak[0] > 0.55, "peak at t = {}", peak[0]);
}

#[test]
fn simulate_without_reabsorption_switches_on_earlier() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--eta", "0"], dir.path());
    let line = stdout(&o).lines().find(|l| l.starts_with("switch-on")).unwrap().to_string();
    let t: f64 = line.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!((t - 0.4).abs() < 0.05, "{line}");
}

#[test]
fn validation_failures_exit_one_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["simulate", "--n0", "0", "--out", "x.csv"],
        vec!["spectrum", "--omega-min", "100", "--omega-max", "50", "--out", "x.csv"],
        vec!["spectrum", "--points", "0", "--out", "x.csv"],
        vec!["verify", "--nu", "-1", "--out", "x.csv"],
        vec!["simulate", "--unknown-flag"],
    ] {
        let o = run(&args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!dir.path().join("x.csv").exists());
    }
}

#[test]
fn spectrum_writes_decreasing_ln_f() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["spectrum", "--points", "200", "--out", "s.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let ln_col = text.lines().next().unwrap().split(',').position(|h| h == "ln_f_mag").unwrap();
    let ln: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(ln_col).unwrap().parse().unwrap())
        .collect();
    assert_eq!(ln.len(), 200);
    assert!(ln.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn fit_pipeline_and_peaks_on_monotone_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["fit", "--out", "fit.json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    assert!((fit["alpha"].as_f64().unwrap() - 0.11).abs() < 0.03);
    assert!(stdout(&o).contains("alpha = 0.11"));

    let o = run(&["fit", "--method", "peaks"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("peak"));
}

#[test]
fn fit_synthetic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("omega,f_c,f_s,f_mag,ln_f_mag\n");
    for i in 0..128 {
        let w = 50.0 * 2f64.powf(i as f64 / 127.0);
        let ln_f = 20.0 * (w / 100.0f64).powf(-0.3);
        csv.push_str(&format!("{w},{f},0,{f},{ln_f}\n", f = ln_f.exp()));
    }
    std::fs::write(dir.path().join("syn.csv"), csv).unwrap();
    let o = run(
        &["fit", "--spectrum", "syn.csv", "--method", "direct", "--out", "fit.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    assert!((fit["alpha"].as_f64().unwrap() - 0.3).abs() < 0.01);
}

#[test]
fn estimates() {
    let dir = tempfile::tempdir().unwrap();
    let v = json_stdout(&run(&["estimate", "scattering", "--u", "1"], dir.path()));
    assert_eq!(v["scattering_ratio"].as_f64(), Some(4.6));

    let v = json_stdout(&run(&["estimate", "tail", "--alpha", "0.11", "--omega-max", "100"], dir.path()));
    let pow = v["omega_max_pow_alpha"].as_f64().unwrap();
    assert_eq!(format!("{pow:.1}"), "1.7");
    assert!((v["exp_neg_omega_max_pow_alpha"].as_f64().unwrap() - (-pow).exp()).abs() < 1e-15);

    let v = json_stdout(&run(
        &["estimate", "lifetime", "--c", "1e-4", "--tau-life", "5.5e-9", "--lambda", "570e-9"],
        dir.path(),
    ));
    assert!((v["tau"].as_f64().unwrap() - 5.5e-13).abs() < 1e-25);
    assert!((v["oscillations"].as_f64().unwrap() - 280.0).abs() < 0.05 * 280.0);

    assert_eq!(run(&["estimate", "tail", "--alpha", "1.5", "--u", "2"], dir.path()).status.code(), Some(1));
}

#[test]
fn verify_nu2_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--nu", "2", "--out", "v.json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("v.json")).unwrap()).unwrap();
    let alpha = v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "alpha_in")
        .unwrap()["value"]
        .as_f64()
        .unwrap();
    assert!((alpha - 2.0 / 3.0).abs() < 0.05);
}

#[test]
fn seedless_sweep_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "name": null,
        "base": {"n0": 1e7, "c": 1e-4, "r": 2.0, "eta": 1.0, "pump": {"nu": 1.0, "k_nu": 10310.698300174482}},
        "axis": "r",
        "cases": [
            {"value": 2.0, "windows": [{"omega_min": 50.0, "omega_max": 100.0}]},
            {"value": 1.0, "windows": [{"omega_min": 50.0, "omega_max": 100.0}]}
        ],
        "simulation": {"t_end": 8.0, "rel_tol": 1e-10, "abs_tol": 1e-8, "integrator": "auto",
                        "h_max_pump": 0.015625, "h_max": 0.125, "max_steps": 50000000},
        "transform": {"include_r_factor": false, "truncation_warning_fraction": 1e-3},
        "points_per_window": 64,
        "method": "auto",
        "threads": null,
        "output_dir": null
    });
    std::fs::write(dir.path().join("cfg.json"), config.to_string()).unwrap();
    let mut outputs = Vec::new();
    for out in ["a", "b"] {
        let o = run(&["sweep", "--config", "cfg.json", "--outdir", out, "--seedless"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let run_dir = std::fs::read_dir(dir.path().join(out)).unwrap().next().unwrap().unwrap().path();
        let files: Vec<Vec<u8>> = ["rows.csv", "rows.json", "meta.json"]
            .iter()
            .map(|f| std::fs::read(run_dir.join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = String::from_utf8(outputs[0][0].clone()).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn sweep_rejects_unwritable_outdir_and_bad_preset() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("blocker"), b"").unwrap();
    let o = run(&["sweep", "--preset", "table4", "--outdir", "blocker/sub"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["sweep", "--preset", "table9"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
