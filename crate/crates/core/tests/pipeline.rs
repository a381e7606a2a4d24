use std::fs;
use std::io::Write;

use neckpinch::flow::GridSpec;
use neckpinch::runner::{
    analyze_persisted, modes_header, parse_config_str, read_checkpoint, read_snapshot_records, run_pipeline, spot_check, InitialData, RunConfig, RunOptions,
    RunStatus, Stage, Table,
};

fn small_dumbbell() -> RunConfig {
    let mut cfg = RunConfig::new(2, InitialData::Dumbbell { neck_width: 0.2, sharpness: 2, scale: None, extinction_floor: 21.0 });
    cfg.grid = GridSpec { nodes: 101, refine_factor: 0.05, refine_power: 1 };
    cfg.integrator.stop_radius = 0.06;
    cfg.analysis.span = 2.0;
    cfg
}

#[test]
fn report_scalars_match_exported_series() {
    let dir = tempfile::tempdir().unwrap();
    let p = run_pipeline(&small_dumbbell(), &RunOptions { out: Some(dir.path().into()), ..RunOptions::default() }).unwrap();
    assert_eq!(p.report.status, RunStatus::Complete, "{:?}", p.report.first_error());
    let checks = spot_check(dir.path()).unwrap();
    assert!(checks.len() >= 8);
    for c in &checks {
        assert!(c.ok, "{c:?}");
    }
    let modes = Table::read(&dir.path().join("modes_A4.csv")).unwrap();
    let header = fs::read_to_string(dir.path().join("modes_A4.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap(), modes_header(12));
    assert_eq!(modes.column("tau").unwrap().len(), p.report.passes[0].samples);
}

#[test]
fn analyze_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions { out: Some(dir.path().into()), ..RunOptions::default() };
    let cfg = small_dumbbell();
    let first = run_pipeline(&cfg, &opts).unwrap();
    let again = analyze_persisted(&cfg, &opts).unwrap();
    assert_eq!(first.report.passes, again.report.passes);
    assert_eq!(first.report.trajectory, again.report.trajectory);
}

#[test]
fn snapshot_stride_thins_the_export() {
    let dir = tempfile::tempdir().unwrap();
    let p = run_pipeline(&small_dumbbell(), &RunOptions { out: Some(dir.path().into()), stride: Some(3), ..RunOptions::default() }).unwrap();
    let total = p.trajectory.as_ref().unwrap().snapshots.len();
    let recs = read_snapshot_records(&dir.path().join("snapshots.jsonl")).unwrap();
    assert_eq!(recs.len(), total.div_ceil(3));
    let prof = recs[1].profile().unwrap();
    assert_eq!(prof.psi, p.trajectory.as_ref().unwrap().snapshots[3].profile.psi);
    assert!(recs.iter().all(|r| r.tau.is_some_and(|t| t.is_finite())));
}

#[test]
fn truncated_checkpoint_line_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_dumbbell();
    cfg.interrupt_after = Some(6);
    let opts = RunOptions { out: Some(dir.path().into()), ..RunOptions::default() };
    assert_eq!(run_pipeline(&cfg, &opts).unwrap().report.status, RunStatus::Interrupted);
    let path = dir.path().join("checkpoint.jsonl");
    let mut f = fs::OpenOptions::new().append(true).open(&path).unwrap();
    f.write_all(b"{\"snapshot\":{\"profile\":").unwrap();
    drop(f);
    let (traj, lines) = read_checkpoint(&path).unwrap();
    assert_eq!(traj.snapshots.len(), 6);
    assert_eq!(lines, 6);
    let resumed = run_pipeline(&cfg, &RunOptions { resume: true, ..opts }).unwrap();
    assert_eq!(resumed.report.status, RunStatus::Complete);
    assert_eq!(resumed.report.resumed_from, Some(6));

    let straight = run_pipeline(&small_dumbbell(), &RunOptions::default()).unwrap();
    let (a, b) = (straight.trajectory.unwrap(), resumed.trajectory.unwrap());
    assert_eq!(a.snapshots.len(), b.snapshots.len());
    for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
        assert_eq!(x.profile.psi, y.profile.psi);
    }
}

#[test]
fn sphere_is_reported_as_not_a_neckpinch() {
    let cfg = parse_config_str("n = 2\n[initial.sphere]\nradius = 1.0\n[grid]\nnodes = 41\n[integrator]\nstop_radius = 0.05\n", true).unwrap().config;
    let p = run_pipeline(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(p.report.status, RunStatus::Failed);
    let err = p.report.first_error().unwrap();
    assert_eq!(err.stage, Stage::EstimateT);
    assert_eq!(err.error_kind.as_deref(), Some("not-a-neckpinch"));
    // the certification does not depend on the run and is still reported
    assert!(p.report.certification.is_some());
}

#[test]
fn cylinder_classification_is_vacuous() {
    let text = "n = 2\n[initial.cylinder]\nradius = 1.0\nhalf_length = 10.0\n[grid]\nnodes = 21\n[integrator]\nstop_radius = 0.01\n[analysis]\nspan = 2.0\n";
    let cfg = parse_config_str(text, true).unwrap().config;
    let p = run_pipeline(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(p.report.status, RunStatus::Complete, "{:?}", p.report.first_error());
    let te = p.t_estimate.unwrap();
    // dt ∝ ψ² near extinction, so the relative RK4 error per step does not shrink
    assert!((te.t_est - 0.5).abs() < 1e-4, "{}", te.t_est);
    let pass = &p.report.passes[0];
    assert!(pass.classification.as_ref().unwrap().vacuous);
    assert!(pass.barrier.as_ref().unwrap().vacuous);
}

#[test]
fn occupied_output_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(".lock"), "").unwrap();
    let r = run_pipeline(&small_dumbbell(), &RunOptions { out: Some(dir.path().into()), ..RunOptions::default() });
    assert!(r.is_err());
}
