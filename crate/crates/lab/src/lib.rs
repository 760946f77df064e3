//! Configuration-driven experiment runner for `kahlerlab-core`.
//!
//! Each experiment writes `<name>.csv` (measured points) and `<name>.json`
//! (checks with their bounds) into the output directory; `report` renders
//! the JSON summaries as a table.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

use std::path::Path;

use artifacts::{csv_path, ensure_dir, summary_path, write_csv, write_summary, Outcome, Summary};
use config::{Experiment, ExperimentConfig, Validated};
pub use error::{LabError, LabResult};

fn run_one(cfg: &ExperimentConfig, val: &Validated, e: Experiment, dir: &Path) -> LabResult<Summary> {
    let outcome: Outcome = match e {
        Experiment::RegmaxCheck => experiments::regmax_check(cfg)?,
        Experiment::CurvatureTruth => experiments::curvature_truth(cfg)?,
        Experiment::MaSolve => {
            let (o, files) = experiments::ma_solve(cfg)?;
            for (name, bytes) in files {
                let p = dir.join(name);
                std::fs::write(&p, bytes).map_err(|source| LabError::Output { path: p.clone(), source })?;
            }
            o
        }
        Experiment::GlueScan => experiments::glue_scan(cfg, val)?,
        Experiment::DecayFit => experiments::decay_fit(cfg, val)?,
        Experiment::All => unreachable!("expanded by the caller"),
    };
    write_csv(&csv_path(dir, e.as_str()), &outcome.rows)?;
    let summary = Summary::new(e.as_str(), cfg.run.seed, outcome.checks);
    write_summary(&summary_path(dir, e.as_str()), &summary)?;
    Ok(summary)
}

/// Validate, run every selected experiment and write its artifacts under
/// `dir`. Stops at the first numeric failure.
pub fn run(cfg: &ExperimentConfig, which: Experiment, dir: &Path) -> LabResult<Vec<Summary>> {
    let val = cfg.validate(which)?;
    ensure_dir(dir)?;
    which.expand().into_iter().map(|e| run_one(cfg, &val, e, dir)).collect()
}
