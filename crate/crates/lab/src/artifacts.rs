//! On-disk results: one CSV of measured points and one JSON summary per
//! experiment. Column and key names are stable.

use std::fs;
use std::path::{Path, PathBuf};

use kahlerlab_core::fit::SlopeFit;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

pub const CSV_COLUMNS: [&str; 7] = ["series", "point", "label", "driver", "S", "eig_min", "eig_max"];

/// One measured point. Empty cells mean the column does not apply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub series: String,
    /// Real coordinates joined by `;`.
    pub point: String,
    pub label: String,
    pub driver: Option<f64>,
    #[serde(rename = "S")]
    pub scalar: Option<f64>,
    pub eig_min: Option<f64>,
    pub eig_max: Option<f64>,
}

impl Row {
    pub fn new(series: impl Into<String>, point: &[f64], label: impl Into<String>) -> Self {
        Row {
            series: series.into(),
            point: point.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(";"),
            label: label.into(),
            driver: None,
            scalar: None,
            eig_min: None,
            eig_max: None,
        }
    }

    pub fn driver(mut self, d: f64) -> Self {
        self.driver = Some(d);
        self
    }

    pub fn scalar(mut self, s: f64) -> Self {
        self.scalar = Some(s);
        self
    }

    pub fn eigen_range(mut self, (lo, hi): (f64, f64)) -> Self {
        self.eig_min = Some(lo);
        self.eig_max = Some(hi);
        self
    }
}

/// Direction in which `measured` is compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// `measured ≥ predicted − slack`.
    AtLeast,
    /// `measured ≤ predicted + slack`.
    AtMost,
    /// `|measured − predicted| ≤ slack`.
    Within,
    /// Recorded only.
    Info,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub bound: Bound,
    pub measured: f64,
    pub predicted: f64,
    pub slack: f64,
    /// Standard error and 95% interval when `measured` is a fitted slope.
    pub stderr: Option<f64>,
    pub ci95: Option<[f64; 2]>,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, bound: Bound, measured: f64, predicted: f64, slack: f64) -> Self {
        let passed = match bound {
            Bound::AtLeast => measured >= predicted - slack,
            Bound::AtMost => measured <= predicted + slack,
            Bound::Within => (measured - predicted).abs() <= slack,
            Bound::Info => true,
        };
        Check { name: name.into(), bound, measured, predicted, slack, stderr: None, ci95: None, passed, detail: String::new() }
    }

    /// A predicate that carries no number of its own.
    pub fn flag(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        let mut c = Check::new(name, Bound::Within, f64::from(u8::from(ok)), 1.0, 0.0);
        c.detail = detail.into();
        c
    }

    pub fn slope(name: impl Into<String>, bound: Bound, fit: &SlopeFit, predicted: f64, slack: f64) -> Self {
        let mut c = Check::new(name, bound, fit.slope, predicted, slack);
        c.stderr = Some(fit.stderr);
        c.ci95 = Some([fit.ci95.0, fit.ci95.1]);
        c
    }

    pub fn detail(mut self, d: impl Into<String>) -> Self {
        self.detail = d.into();
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl Summary {
    pub fn new(experiment: &str, seed: u64, checks: Vec<Check>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        Summary { experiment: experiment.into(), seed, passed, checks }
    }
}

/// Rows and checks of one experiment before they are written.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub rows: Vec<Row>,
    pub checks: Vec<Check>,
}

fn out_err(path: &Path) -> impl FnOnce(std::io::Error) -> LabError + '_ {
    move |source| LabError::Output { path: path.to_path_buf(), source }
}

pub fn csv_path(dir: &Path, experiment: &str) -> PathBuf {
    dir.join(format!("{experiment}.csv"))
}

pub fn summary_path(dir: &Path, experiment: &str) -> PathBuf {
    dir.join(format!("{experiment}.json"))
}

pub fn write_csv(path: &Path, rows: &[Row]) -> LabResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    if rows.is_empty() {
        w.write_record(CSV_COLUMNS).map_err(|e| csv_err(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(out_err(path))
}

fn csv_err(path: &Path, e: csv::Error) -> LabError {
    let source = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    LabError::Output { path: path.to_path_buf(), source }
}

pub fn read_csv(path: &Path) -> LabResult<Vec<Row>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| LabError::MissingArtifacts(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<Row>, _>>()
        .map_err(|e| LabError::MissingArtifacts(format!("{}: {e}", path.display())))
}

pub fn write_summary(path: &Path, s: &Summary) -> LabResult<()> {
    let mut text = serde_json::to_string_pretty(s).expect("summary serializes");
    text.push('\n');
    fs::write(path, text).map_err(out_err(path))
}

pub fn read_summary(path: &Path) -> LabResult<Summary> {
    let text = fs::read_to_string(path).map_err(|e| LabError::MissingArtifacts(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| LabError::MissingArtifacts(format!("{} is not a summary: {e}", path.display())))
}

/// Every `*.json` summary directly under `dir`, sorted by file name.
pub fn find_summaries(dir: &Path) -> LabResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| LabError::MissingArtifacts(format!("{}: {e}", dir.display())))?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    out.sort();
    Ok(out)
}

pub fn ensure_dir(dir: &Path) -> LabResult<()> {
    fs::create_dir_all(dir).map_err(out_err(dir))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_compare_in_their_direction() {
        assert!(Check::new("a", Bound::AtLeast, 0.21, 0.25, 0.05).passed);
        assert!(!Check::new("a", Bound::AtLeast, 0.19, 0.25, 0.05).passed);
        assert!(Check::new("a", Bound::AtMost, -1.8, -2.0, 0.3).passed);
        assert!(!Check::new("a", Bound::AtMost, -1.0, -2.0, 0.3).passed);
        assert!(!Check::new("a", Bound::Within, 2.1, 2.0, 0.05).passed);
        assert!(Check::new("a", Bound::Info, f64::NAN, 0.0, 0.0).passed);
        assert!(!Check::flag("f", false, "").passed);
    }

    #[test]
    fn csv_roundtrip_keeps_empty_cells() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let rows = vec![
            Row::new("s", &[0.5, 1e-3], "OVERLAP_12").driver(10.0).scalar(-0.25).eigen_range((1.0, 2.0)),
            Row::new("t", &[], "-"),
        ];
        write_csv(&p, &rows).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
        assert_eq!(read_csv(&p).unwrap(), rows);
    }

    #[test]
    fn summary_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = summary_path(dir.path(), "glue-scan");
        let s = Summary::new("glue-scan", 42, vec![Check::new("x", Bound::AtMost, -1.0, -2.0, 0.3).detail("d")]);
        assert!(!s.passed);
        write_summary(&p, &s).unwrap();
        assert_eq!(read_summary(&p).unwrap(), s);
        assert_eq!(find_summaries(dir.path()).unwrap(), vec![p]);
    }
}
