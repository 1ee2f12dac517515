//! End-to-end tests of the `dtr` binary: JSON reports, CSV outputs, config
//! precedence, the structured error envelope, and manifest reproducibility.

use std::path::Path;
use std::process::{Command, Output};

use dtr_engine::estimators::estimate;
use dtr_engine::glm::{fit_propensities, PropensityOptions};
use dtr_engine::ingest::write_panel_csv;
use dtr_engine::model::GawConfig;
use dtr_engine::simgen::{generate, DgpSpec};
use dtr_engine::weighting::gaw_weights;

fn dtr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dtr"))
        .args(args)
        .output()
        .expect("spawn dtr")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "dtr failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_then_estimate_matches_the_library_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let panel_path = dir.path().join("panel.csv");

    let out = dtr(&[
        "--seed", "9001",
        "simulate",
        "--scenario", "sim1",
        "--n", "300",
        "--out", path_str(&panel_path),
    ]);
    let doc = stdout_json(&out);
    assert_eq!(doc["n"], 300);
    assert_eq!(doc["seed"], 9001);

    // The CSV must be exactly what the library writes for the same draw.
    let panel = generate(&DgpSpec::sim1(), 300, 9001).unwrap();
    let mut expected = Vec::new();
    write_panel_csv(&panel, &mut expected).unwrap();
    assert_eq!(std::fs::read(&panel_path).unwrap(), expected);

    let out = dtr(&[
        "estimate",
        "--panel", path_str(&panel_path),
        "--regime", "x1<=350 | x2<=450",
        "--estimator", "nGAW",
        "--c", "0.18",
        "--k", "0.5",
    ]);
    let doc = stdout_json(&out);

    let regime = DgpSpec::sim1().regime(&[350.0, 450.0]).unwrap();
    let props = fit_propensities(&panel, &PropensityOptions::default()).unwrap();
    let gaw = GawConfig::new(0.18, 0.5).unwrap();
    let weights = gaw_weights(&panel, &regime, &props, &gaw).unwrap();
    let expected = estimate(&panel, &weights, None, false, true).unwrap();

    // serde_json round-trips f64 exactly, so exact equality is fair game.
    assert_eq!(doc["estimator"], "nGAW");
    assert_eq!(doc["estimate"]["value"].as_f64().unwrap(), expected.value);
    assert_eq!(doc["se"].as_f64().unwrap(), expected.se().unwrap());
    assert_eq!(doc["rows_kept"], 300);
}

#[test]
fn no_adherers_maps_to_the_error_envelope_and_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let panel_path = dir.path().join("defiant.csv");
    // Everyone disobeys "treat iff 50 <= x1 <= 100"; the treated/untreated
    // pattern is non-monotone in x1 so the propensity fit itself is fine.
    std::fs::write(
        &panel_path,
        "id,x1,a1,y\n\
         1,10,1,5.0\n\
         2,60,0,6.0\n\
         3,70,0,7.0\n\
         4,200,1,8.0\n\
         5,15,1,5.5\n\
         6,65,0,6.5\n\
         7,75,0,7.5\n\
         8,210,1,8.5\n",
    )
    .unwrap();

    let out = dtr(&[
        "estimate",
        "--panel", path_str(&panel_path),
        "--regime", "x1>=50 & x1<=100",
    ]);
    assert_eq!(out.status.code(), Some(4));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "no_adherers");
    assert!(err["message"].as_str().unwrap().contains("positive weight"));
}

#[test]
fn config_supplies_defaults_and_flags_override_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.conf");
    std::fs::write(
        &cfg_path,
        "# defaults for this analysis\n\
         run.seed = 7\n\
         simulate.scenario = sim1\n\
         simulate.n = 50\n",
    )
    .unwrap();

    let from_config = dtr(&[
        "--config", path_str(&cfg_path),
        "--out-dir", path_str(dir.path()),
        "simulate",
    ]);
    let doc = stdout_json(&from_config);
    assert_eq!(doc["n"], 50);
    assert_eq!(doc["seed"], 7);
    let csv = std::fs::read_to_string(dir.path().join("panel.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51);

    let overridden = dtr(&[
        "--config", path_str(&cfg_path),
        "--seed", "99",
        "--out-dir", path_str(dir.path()),
        "simulate",
        "--n", "80",
    ]);
    let doc = stdout_json(&overridden);
    assert_eq!(doc["n"], 80);
    assert_eq!(doc["seed"], 99);
}

#[test]
fn surface_writes_one_row_per_cell_and_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let panel_path = dir.path().join("panel.csv");
    let surface_path = dir.path().join("surface.csv");

    dtr(&[
        "--seed", "7",
        "simulate", "--scenario", "sim1", "--n", "400",
        "--out", path_str(&panel_path),
    ]);
    let out = dtr(&[
        "surface",
        "--panel", path_str(&panel_path),
        "--regime", "x1<=350 | x2<=450",
        "--grid", "psi1=300:400:50,psi2=400:500:50",
        "--estimators", "nIPW,nGAW",
        "--out", path_str(&surface_path),
    ]);
    let doc = stdout_json(&out);
    assert_eq!(doc["cells"], 9);
    assert_eq!(doc["estimators"], serde_json::json!(["nIPW", "nGAW"]));

    let optima = doc["optima"].as_array().unwrap();
    assert_eq!(optima.len(), 2);
    for opt in optima {
        assert!(opt["value"].is_f64(), "optimum missing for {opt}");
        assert_eq!(opt["thresholds"].as_array().unwrap().len(), 2);
    }

    let csv = std::fs::read_to_string(&surface_path).unwrap();
    assert_eq!(csv.lines().count(), 1 + 9 * 2);
    assert!(csv.lines().next().unwrap().starts_with("psi1,psi2,estimator,value"));
}

#[test]
fn select_window_is_deterministic_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let panel_path = dir.path().join("panel.csv");
    dtr(&[
        "--seed", "11",
        "simulate", "--scenario", "sim1", "--n", "250",
        "--out", path_str(&panel_path),
    ]);

    let table_csv = dir.path().join("candidates.csv");
    let run = || {
        dtr(&[
            "--seed", "33",
            "select-window",
            "--panel", path_str(&panel_path),
            "--regime", "x1<=350 | x2<=450",
            "--window-grid", "0:10:5,0:10:5",
            "--bootstrap", "20",
            "--out", path_str(&table_csv),
        ])
    };
    let a = run();
    let table = std::fs::read(&table_csv).unwrap();
    let b = run();

    let doc = stdout_json(&a);
    assert_eq!(doc["seed"], 33);
    assert_eq!(doc["delta_opt"].as_array().unwrap().len(), 2);
    // 3 x 3 candidate grid -> 9 rows plus the header.
    assert_eq!(String::from_utf8_lossy(&table).lines().count(), 10);

    assert_eq!(a.stdout, b.stdout);
    assert_eq!(table, std::fs::read(&table_csv).unwrap());
}

#[test]
fn study_reruns_byte_identically_from_its_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");

    let out = dtr(&[
        "--seed", "4242",
        "--out-dir", path_str(&first),
        "study",
        "--scenario", "sim1",
        "--grid", "psi1=325:375:50,psi2=425:475:50",
        "--n", "150",
        "--replications", "3",
        "--estimators", "nIPW,nGAW",
        "--truth-mc", "4000",
        "--external-n", "2000",
    ]);
    let doc = stdout_json(&out);
    assert_eq!(doc["seed"], 4242);
    assert_eq!(doc["files"].as_array().unwrap().len(), 4);

    let rerun = dtr(&[
        "--out-dir", path_str(&second),
        "study",
        "--manifest", path_str(&first.join("study_manifest.json")),
    ]);
    let doc = stdout_json(&rerun);
    assert_eq!(doc["seed"], 4242);

    for name in [
        "study_cells.csv",
        "study_estimators.csv",
        "study_selections.csv",
        "study_manifest.json",
    ] {
        let a = std::fs::read(first.join(name)).unwrap();
        let b = std::fs::read(second.join(name)).unwrap();
        assert!(!a.is_empty(), "{name} is empty");
        assert_eq!(a, b, "{name} differs between the run and its manifest re-run");
    }
}

#[test]
fn custom_column_mapping_and_treatment_codes() {
    let dir = tempfile::tempdir().unwrap();
    let panel_path = dir.path().join("trial.csv");
    std::fs::write(
        &panel_path,
        "pid,base,trt,out\n\
         1,0.2,rx,3.5\n\
         2,0.8,ctl,1.0\n\
         3,0.4,rx,2.5\n\
         4,0.9,ctl,1.5\n\
         5,0.3,ctl,2.0\n\
         6,0.7,rx,3.0\n",
    )
    .unwrap();
    let cfg_path = dir.path().join("trial.conf");
    std::fs::write(
        &cfg_path,
        format!(
            "ingest.id = pid\n\
             ingest.outcome = out\n\
             ingest.stage1.covariates = base\n\
             ingest.stage1.treatment = trt\n\
             ingest.codes = ctl:0,rx:1\n\
             estimate.panel = {}\n\
             estimate.regime = base<=0.5\n",
            panel_path.display()
        ),
    )
    .unwrap();

    let out = dtr(&["estimate", "--config", path_str(&cfg_path)]);
    let doc = stdout_json(&out);
    assert_eq!(doc["estimator"], "nIPW");
    assert_eq!(doc["rows_in"], 6);
    assert_eq!(doc["rows_kept"], 6);
    assert!(doc["estimate"]["value"].as_f64().unwrap().is_finite());
}

#[test]
fn usage_and_config_errors_exit_2() {
    // Missing required input -> structured config error.
    let out = dtr(&["estimate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("--panel"));

    // Unknown scenario name -> structured config error.
    let out = dtr(&["--seed", "1", "simulate", "--scenario", "sim3", "--n", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "config");

    // Unknown subcommand -> clap's own usage error, same exit status.
    let out = dtr(&["bogus"]);
    assert_eq!(out.status.code(), Some(2));
}
