//! Binary-level checks: exit codes, flag handling, and stage composition
//! through the real executable, on artifacts small enough to finish in
//! seconds.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use solvlab::artifacts::{self, RunMeta};
use solvlab::config::RunConfig;
use solvlab_core::nested::NavScrPaths;
use solvlab_core::solvency::{ConstraintKind, ConstraintSpec, DeltaPanel};

const BIN: &str = env!("CARGO_BIN_EXE_solvlab");

fn run_solvlab(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("the binary runs")
}

fn write_config(path: &Path, config: &RunConfig) {
    let text = toml::to_string(config).expect("config serializes");
    std::fs::write(path, text).expect("config file writes");
}

/// A deliberately tiny but complete run: every stage exercises its real code
/// path, and the whole pipeline stays under a few seconds.
fn small_config() -> RunConfig {
    let mut config = RunConfig::default();
    config.nested.n_primary = 60;
    config.nested.n_secondary = 5;
    config.nested.horizon_t = 2;
    config.nested.liability_horizon_h = 4;
    config.nested.seed = 99;
    config.nested.retain_npvs = true;
    config.portfolio.liability_horizon_h = 4;
    config.proxy.cf_calibration_size = 20;
    config.proxy.lsmc_n_primary = 400;
    config.constraints = Vec::new();
    config
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn a_missing_config_flag_is_a_configuration_error() {
    let output = run_solvlab(&["simulate"]);
    assert_eq!(output.status.code(), Some(2), "stderr: {}", stderr_of(&output));
    assert!(
        stderr_of(&output).contains("--config"),
        "the error should tell the user which flag is missing: {}",
        stderr_of(&output)
    );
}

#[test]
fn validate_config_aggregates_violations_into_one_error_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::default();
    // Weights sum to 0.99: one clear violation, reported once with the rest.
    config.portfolio.asset_allocation.cash = 0.04;
    let path = dir.path().join("bad.toml");
    write_config(&path, &config);

    let output = run_solvlab(&["validate-config", "--config", path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2), "stderr: {}", stderr_of(&output));
    let stderr = stderr_of(&output);
    assert!(
        stderr.contains("asset_allocation") && stderr.contains("sum to 1"),
        "the aggregated error should name the allocation violation: {stderr}"
    );
    assert_eq!(
        stderr.lines().filter(|line| line.starts_with("error:")).count(),
        1,
        "all violations arrive as one aggregated error: {stderr}"
    );

    // The same config, repaired, validates cleanly.
    config.portfolio.asset_allocation.cash = 0.05;
    write_config(&path, &config);
    let output = run_solvlab(&["validate-config", "--config", path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr_of(&output));
}

#[test]
fn solve_on_a_hand_written_sample_reports_the_order_statistic_capital() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("work");
    let out = dir.path().join("out");
    std::fs::create_dir_all(&work).unwrap();

    // Eight one-date paths with unit deflators: the 25% lower NAV quantile is
    // the second-smallest NAV, -3, so the capital requirement is 3.
    let navs = [5.0, -3.0, 1.0, -7.0, 2.0, -1.0, 4.0, 0.5];
    let mut paths = NavScrPaths::new(navs.len(), 1, Vec::new());
    for (i, nav) in navs.iter().enumerate() {
        paths.set_nav(i, 1, *nav);
    }
    let seed = 7;
    artifacts::write_paths_csv(&work.join("paths_nested.csv"), seed, &paths).unwrap();
    let deltas = DeltaPanel::new(navs.len(), 1, vec![1.0; navs.len()]).unwrap();
    artifacts::write_deltas_csv(&work.join("deltas.csv"), seed, &deltas).unwrap();
    artifacts::write_meta(
        &work,
        &RunMeta {
            seed,
            nav0: 0.0,
            nav0_npv_variance: 0.0,
            n_primary: navs.len(),
            n_secondary: 1,
            horizon_t: 1,
        },
    )
    .unwrap();

    let mut config = RunConfig::default();
    config.constraints = vec![solvlab::config::ConstraintEntry {
        spec: ConstraintSpec {
            kind: ConstraintKind::Sc1,
            p: 0.75,
            alpha: 0.0,
            deterministic_set: None,
        },
        deterministic_set_csv: None,
    }];
    let config_path = dir.path().join("solve.toml");
    write_config(&config_path, &config);

    let output = run_solvlab(&[
        "solve",
        "--config",
        config_path.to_str().unwrap(),
        "--stage-input",
        work.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr_of(&output));

    let text = std::fs::read_to_string(out.join("capital_requirements.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    let rows = json["value"]["rows"].as_array().expect("capital rows present");
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["source"], "nested");
    assert_eq!(rows[0]["capital_k"], 3.0, "minus the lower 25% NAV quantile");
}

#[test]
fn calibrate_is_reproducible_and_artifacts_carry_their_seed() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("work");
    let config_path = dir.path().join("run.toml");
    write_config(&config_path, &small_config());
    let config_arg = config_path.to_str().unwrap();

    let output = run_solvlab(&[
        "simulate",
        "--config",
        config_arg,
        "--out",
        work.to_str().unwrap(),
        "--workers",
        "1",
    ]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr_of(&output));

    // Every CSV artifact opens with its seed, so any file can be traced back
    // to the run that produced it.
    for name in ["panel.csv", "paths_nested.csv", "deltas.csv", "npvs_t1.csv"] {
        let text = std::fs::read_to_string(work.join(name)).unwrap();
        assert!(
            text.starts_with("# seed=99"),
            "{name} should open with its seed line, got: {}",
            text.lines().next().unwrap_or_default()
        );
    }

    let calibrate = |out: &PathBuf| {
        let output = run_solvlab(&[
            "calibrate",
            "--config",
            config_arg,
            "--stage-input",
            work.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--workers",
            "1",
        ]);
        assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr_of(&output));
    };
    let first_dir = dir.path().join("cal1");
    let second_dir = dir.path().join("cal2");
    calibrate(&first_dir);
    calibrate(&second_dir);

    for name in ["proxy_cf.json", "proxy_lsmc.json"] {
        let first = std::fs::read(first_dir.join(name)).unwrap();
        let second = std::fs::read(second_dir.join(name)).unwrap();
        assert!(first == second, "{name} changed between identical calibrations");
    }
}

#[test]
fn run_without_constraints_still_produces_proxy_validation_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config_path = dir.path().join("run.toml");
    write_config(&config_path, &small_config());

    let output = run_solvlab(&[
        "run",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr_of(&output));

    let text = std::fs::read_to_string(out.join("run_report.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    let report = &json["value"];
    assert_eq!(
        report["constraint_comparisons"].as_array().map(Vec::len),
        Some(0),
        "no constraints were configured"
    );
    let nav_tables = report["nav_tables"].as_array().expect("nav tables present");
    assert!(
        !nav_tables.is_empty(),
        "distribution validation runs even without capital constraints"
    );
    assert!(
        report["efficiency"].is_object(),
        "retained NPVs plus a calibrated proxy yield the efficiency section"
    );
}
