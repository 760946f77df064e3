use kahlerlab::artifacts::{read_csv, summary_path, read_summary};
use kahlerlab::config::{Experiment, ExperimentConfig};
use kahlerlab_core::masolver::GridFile;

fn small() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.solver.grid = 8;
    c.glue.samples = 10;
    c.glue.c_count = 3;
    c.decay.count = 4;
    c
}

#[test]
fn ma_solve_writes_grid_files_and_passes_on_a_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    let s = kahlerlab::run(&cfg, Experiment::MaSolve, dir.path()).unwrap();
    let failed: Vec<_> = s[0].checks.iter().filter(|c| !c.passed).map(|c| &c.name).collect();
    assert!(failed.is_empty(), "{failed:?}");
    for d in &cfg.solver.deltas {
        let bytes = std::fs::read(dir.path().join(format!("ma-solve-delta-{d:e}.grid"))).unwrap();
        let g = GridFile::from_bytes(&bytes).unwrap();
        assert_eq!(g.dims, vec![8; 4]);
        assert_eq!((g.l, g.m, g.delta), (cfg.geometry.l, cfg.geometry.m, *d));
    }
}

#[test]
fn glue_scan_rows_carry_labels_and_c() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    kahlerlab::run(&cfg, Experiment::GlueScan, dir.path()).unwrap();
    let rows = read_csv(&dir.path().join("glue-scan.csv")).unwrap();
    for label in ["OVERLAP_12", "OVERLAP_13", "OVERLAP_23", "TRIPLE"] {
        let sweep: Vec<_> = rows.iter().filter(|r| r.series == format!("c_sweep/{label}")).collect();
        assert_eq!(sweep.len(), 3, "{label}");
        assert!(sweep.iter().all(|r| r.label == label && r.scalar.is_some() && r.driver.is_some()));
    }
    let s = read_summary(&summary_path(dir.path(), "glue-scan")).unwrap();
    let get = |n: &str| s.checks.iter().find(|c| c.name == n).unwrap();
    assert!(get("piecewise identity jet defect").passed);
    assert!(get("INTERIOR_PURE max |S|").passed);
    assert!(get("side condition along the OVERLAP_23 sweep").passed);
}

#[test]
fn decay_fit_reports_predicted_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let s = kahlerlab::run(&small(), Experiment::DecayFit, dir.path()).unwrap();
    let omega = s[0].checks.iter().find(|c| c.name.starts_with("omega0")).unwrap();
    assert_eq!(omega.predicted, 0.25);
    assert!(omega.passed, "{omega:?}");
    let gamma = s[0].checks.iter().find(|c| c.name.starts_with("gamma pre-floor")).unwrap();
    assert!((gamma.predicted - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn numeric_failure_maps_to_exit_3() {
    // one Newton step cannot reach the residual target
    let mut cfg = small();
    cfg.solver.max_iter = 1;
    cfg.solver.accept_tol = 1e-10;
    let dir = tempfile::tempdir().unwrap();
    let e = kahlerlab::run(&cfg, Experiment::MaSolve, dir.path()).unwrap_err();
    assert_eq!(e.exit_code(), 3, "{e}");
}
