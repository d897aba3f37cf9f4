use std::fs;
use std::path::Path;
use std::process::Command;

use anomalylab::config::parse_config;
use anomalylab::experiments::{
    find_viscosity_for_dissipation, run_thm1_scenario, run_thm2_scenario, sweep, sweep_csv,
    viscosity_schedule, ExperimentConfig, SweepCell, Viscosity, ViscosityKind,
};
use anomalylab::glue::Continuation;
use anomalylab::LabError;
use proptest::prelude::*;

const BIN: &str = env!("CARGO_BIN_EXE_anomalylab");

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("lab.cfg");
    fs::write(&p, text).unwrap();
    p
}

fn lab(dir: &Path, cfg: &Path, args: &[&str]) -> std::process::Output {
    Command::new(BIN)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(dir)
        .arg("--quiet")
        .args(args)
        .env_remove("ANOMALYLAB_THREADS")
        .output()
        .unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let j = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(j).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn inviscid_run_has_no_dissipation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "grid.n = 64\nstage.m = 2\nviscosity.kind = explicit\nviscosity.value = 0\nrun.continuation = hold\n",
    );
    let out = lab(dir.path(), &cfg, &["run"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("run_m2.csv")).unwrap();
    assert!(column(&csv, "D").iter().all(|&d| d == 0.0));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "run");
    assert!(manifest["failure"].is_null());
}

#[test]
fn report_without_manifests_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "grid.n = 64\nstage.m = 2\n");
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = lab(dir.path(), &cfg, &["report", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no input"));
}

#[test]
fn config_violations_are_all_listed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "grid.n = 100\nrun.delta = x\n");
    let out = lab(dir.path(), &cfg, &["run"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("grid.n") && err.contains("run.delta"), "{err}");
}

#[test]
fn repeated_runs_write_identical_csv() {
    let text =
        "grid.n = 64\nstage.m = 3\nviscosity.kind = intermediate\nrun.continuation = reversed\n";
    let csv: Vec<String> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let cfg = write_config(dir.path(), text);
            assert!(lab(dir.path(), &cfg, &["run"]).status.success());
            fs::read_to_string(dir.path().join("run_m3.csv")).unwrap()
        })
        .collect();
    assert_eq!(csv[0], csv[1]);
}

#[test]
fn sweep_rows_follow_cell_order_with_any_thread_count() {
    let cells: Vec<SweepCell> = [3, 1, 2]
        .iter()
        .flat_map(|&m| {
            [Viscosity::High, Viscosity::Low].map(|viscosity| SweepCell { m, viscosity })
        })
        .collect();
    let mut cfg = ExperimentConfig {
        grid: 64,
        ..ExperimentConfig::default()
    };
    let csv: Vec<String> = [1, 3]
        .iter()
        .map(|&t| {
            cfg.threads = Some(t);
            sweep_csv(&cells, &sweep(&cells, Continuation::Hold, &cfg), 2)
        })
        .collect();
    assert_eq!(csv[0], csv[1]);
    let ms: Vec<&str> = csv[0]
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(ms, ["3", "3", "1", "1", "2", "2"]);
}

#[test]
fn forward_and_reversed_scenarios_are_consistent() {
    let cfg = ExperimentConfig::default();
    let f = run_thm1_scenario(3, Viscosity::High, &cfg).unwrap();
    assert!(f.passed(), "{:?}", f.flags);
    let split = f.mode_split.unwrap();
    assert!((split.low.powi(2) + split.high.powi(2) - f.e_at_1).abs() < 1e-10);
    assert!(f.d_at_1 <= f.d_at_1p_delta && f.d_at_1p_delta <= f.d_at_2);
    let r = run_thm2_scenario(3, Viscosity::FixedK(1.0), &cfg).unwrap();
    assert_eq!(r.recovery, Some(r.e_at_2));
    let min = r.min_energy_near_1.unwrap();
    assert!(min >= r.e_at_2 - 1e-12 && min <= r.e_at_1 + 1e-12);
}

#[test]
fn unreachable_target_is_a_bracket_failure() {
    let cfg = ExperimentConfig::default();
    match find_viscosity_for_dissipation(2, 0.999, 1.0, 0.001, &cfg) {
        Err(LabError::BracketFailure { d_lo, d_hi, .. }) => assert!(d_lo < 0.999 && d_hi < 0.999),
        other => panic!("expected a bracket failure, got {other:?}"),
    }
    assert!(find_viscosity_for_dissipation(2, 1.5, 1.0, 0.01, &cfg).is_err());
}

#[test]
fn search_lands_inside_its_bracket() {
    let cfg = ExperimentConfig::default();
    let probe = find_viscosity_for_dissipation(3, 0.0, 1.0, 1.0, &cfg).unwrap();
    let (d_lo, d_hi) = probe.bracket_dissipation;
    let target = 0.5 * (d_lo + d_hi);
    let s = find_viscosity_for_dissipation(3, target, 1.0, 0.01, &cfg).unwrap();
    assert!(s.converged, "{s:?}");
    assert!((s.achieved - target).abs() <= 0.01);
    assert!(s.nu >= s.bracket.0 && s.nu <= s.bracket.1);
}

#[test]
fn config_echo_reparses() {
    let c = parse_config(
        "grid.n = 512\nstage.m = 4,6\nviscosity.kind = alpha\nviscosity.value = 0.25\n",
    )
    .unwrap();
    assert_eq!(c.ms, vec![4, 6]);
    assert_eq!(parse_config(&c.to_text()).unwrap(), c);
}

proptest! {
    #[test]
    fn schedules_are_ordered(m in 1u32..25, b in 2u32..6) {
        let v = |k| viscosity_schedule(k, m, b, None).unwrap();
        let (h, i, l) = (v(ViscosityKind::High), v(ViscosityKind::Intermediate), v(ViscosityKind::Low));
        prop_assert!(l <= i && i <= h);
        if m > 1 {
            prop_assert!(l < i && i < h);
        }
        let lam2 = (b as f64).powi(2 * m as i32);
        prop_assert!((i * lam2 - m as f64).abs() < 1e-9 * m as f64);
    }
}
