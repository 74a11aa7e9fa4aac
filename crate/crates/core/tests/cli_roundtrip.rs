//! End-to-end checks of the batch front end: steady runs, determinism,
//! offline re-analysis equivalence, and the failure paths.

use std::path::PathBuf;

use axiswirl::cli::{self, InitialCondition, MonitorSpec, RunConfig};
use axiswirl::error::Error;
use axiswirl::evolution::Family;
use axiswirl::geometry::Grid;
use axiswirl::snapshot;

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("axiswirl_cli_{name}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn steady_config() -> RunConfig {
    RunConfig {
        grid: Grid::new(0.5, 5.0, -5.0, 5.0, 32, 64, false).unwrap(),
        t_end: 0.27,
        cfl_advective: 0.4,
        cfl_diffusive: 0.5,
        snapshot_stride: 10,
        retention: 0.0,
        initial: InitialCondition::Family(Family::RigidSwirl),
        forcing: Some(Family::RigidSwirl),
        monitors: vec![MonitorSpec::Vz],
    }
}

#[test]
fn steady_run_snapshots_identical_to_initial() {
    let dir = temp_dir("steady");
    let summary = cli::cmd_run(&steady_config(), &dir).unwrap();
    assert!(summary.steps >= 100, "only {} steps", summary.steps);

    let paths = cli::snapshot_paths(&dir).unwrap();
    let first = snapshot::read_state(&paths[0]).unwrap();
    for p in &paths[1..] {
        let s = snapshot::read_state(p).unwrap();
        let mut drift = 0.0_f64;
        for (a, b) in s.gamma.values().iter().zip(first.gamma.values()) {
            drift = drift.max((a - b).abs());
        }
        for (a, b) in s.omega.values().iter().zip(first.omega.values()) {
            drift = drift.max((a - b).abs());
        }
        assert!(drift < 1e-10, "{}: drift {drift}", p.display());
    }
}

#[test]
fn runs_are_deterministic() {
    let d1 = temp_dir("det1");
    let d2 = temp_dir("det2");
    cli::cmd_run(&steady_config(), &d1).unwrap();
    cli::cmd_run(&steady_config(), &d2).unwrap();

    let p1 = cli::snapshot_paths(&d1).unwrap();
    let p2 = cli::snapshot_paths(&d2).unwrap();
    assert_eq!(p1.len(), p2.len());
    for (a, b) in p1.iter().zip(&p2) {
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }
    assert_eq!(
        std::fs::read(d1.join("monitors.csv")).unwrap(),
        std::fs::read(d2.join("monitors.csv")).unwrap()
    );
}

#[test]
fn offline_monitoring_matches_in_run_series() {
    let dir = temp_dir("offline");
    let monitors = vec![
        MonitorSpec::Vz,
        MonitorSpec::Thm11 { r: 0.4, z: 0.0 },
        MonitorSpec::Thm12 { r: 0.4, z: 1.0 },
        MonitorSpec::Oscillation { sigma1: 0.9 },
    ];
    let config = RunConfig {
        grid: Grid::new(0.1, 5.0, -5.0, 5.0, 40, 80, false).unwrap(),
        t_end: 0.25,
        cfl_advective: 0.4,
        cfl_diffusive: 0.5,
        snapshot_stride: 15,
        retention: 0.2,
        initial: InitialCondition::Family(Family::Coupled),
        forcing: Some(Family::Coupled),
        monitors: monitors.clone(),
    };
    cli::cmd_run(&config, &dir).unwrap();
    let in_run = std::fs::read_to_string(dir.join("monitors.csv")).unwrap();
    let offline = cli::cmd_monitor(&dir, &monitors).unwrap();
    assert_eq!(in_run, offline, "offline series must be byte-identical");
    // The windowed monitor produced rows once covered.
    assert!(in_run.lines().any(|l| l.contains("thm12")));

    // Every unclipped report carries a finite implied constant.
    for line in in_run.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 7, "row `{line}`");
        let implied: f64 = cols[5].parse().unwrap();
        if cols[6] == "false" {
            assert!(implied.is_finite(), "non-finite implied constant in `{line}`");
        }
    }
}

#[test]
fn single_snapshot_thm12_is_a_retention_error() {
    let dir = temp_dir("single");
    let g = Grid::new(0.1, 5.0, -5.0, 5.0, 16, 24, false).unwrap();
    snapshot::write_state(
        &dir.join("snap-000000.snap"),
        &Family::Coupled.state_at(g, 0.0),
    )
    .unwrap();
    let err = cli::cmd_monitor(&dir, &[MonitorSpec::Thm12 { r: 0.4, z: 0.0 }]).unwrap_err();
    match err {
        Error::InsufficientRetention { monitor, .. } => {
            assert!(monitor.contains("thm12"), "{monitor}");
        }
        other => panic!("expected retention error, got {other}"),
    }
}

#[test]
fn corrupt_snapshot_is_rejected() {
    let dir = temp_dir("corrupt");
    let g = Grid::new(0.1, 5.0, -5.0, 5.0, 16, 24, false).unwrap();
    for (idx, t) in [0.0, 0.1].iter().enumerate() {
        snapshot::write_state(
            &dir.join(format!("snap-{idx:06}.snap")),
            &Family::Coupled.state_at(g, *t),
        )
        .unwrap();
    }
    let victim = dir.join("snap-000001.snap");
    let mut bytes = std::fs::read(&victim).unwrap();
    let n = bytes.len();
    bytes[n - 9] ^= 0x11;
    std::fs::write(&victim, bytes).unwrap();

    let err = cli::cmd_monitor(&dir, &[MonitorSpec::Vz]).unwrap_err();
    assert!(err.to_string().contains("checksum"), "{err}");
}

#[test]
fn non_monotone_timestamps_are_rejected() {
    let dir = temp_dir("monotone");
    let g = Grid::new(0.1, 5.0, -5.0, 5.0, 16, 24, false).unwrap();
    let s = Family::Coupled.state_at(g, 0.5);
    snapshot::write_state(&dir.join("snap-000000.snap"), &s).unwrap();
    snapshot::write_state(&dir.join("snap-000001.snap"), &s).unwrap();
    let err = cli::cmd_monitor(&dir, &[MonitorSpec::Vz]).unwrap_err();
    assert!(err.to_string().contains("non-monotone"), "{err}");
}

#[test]
fn blow_up_aborts_with_diagnostic_dump() {
    let dir = temp_dir("blowup");
    // Absurd initial amplitude overflows within a step.
    let init_dir = temp_dir("blowup_init");
    let g = Grid::new(0.5, 5.0, -5.0, 5.0, 16, 24, false).unwrap();
    let mut s = Family::Coupled.state_at(g, 0.0);
    s.gamma = s.gamma.scaled(1e300);
    s.omega = s.omega.scaled(1e300);
    let init_path = init_dir.join("snap-000000.snap");
    snapshot::write_state(&init_path, &s).unwrap();

    let config = RunConfig {
        grid: g,
        t_end: 0.1,
        cfl_advective: 0.4,
        cfl_diffusive: 0.5,
        snapshot_stride: 1,
        retention: 0.0,
        initial: InitialCondition::Snapshot(init_path),
        forcing: None,
        monitors: vec![],
    };
    let err = cli::cmd_run(&config, &dir).unwrap_err();
    assert!(
        matches!(err, Error::BlowUp { .. } | Error::EllipticFailure { .. }),
        "unexpected error {err}"
    );
    assert!(dir.join("blowup-dump.snap").exists(), "diagnostic dump missing");
}
