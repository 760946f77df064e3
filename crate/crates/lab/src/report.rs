//! Plain-text rendering of experiment summaries.

use std::fmt::Write;
use std::path::Path;

use crate::artifacts::{find_summaries, read_summary, Bound, Summary};
use crate::error::{LabError, LabResult};

fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-3..1e4).contains(&a) {
        format!("{x:.4}")
    } else {
        format!("{x:.3e}")
    }
}

fn target(b: Bound, predicted: f64, slack: f64) -> String {
    match b {
        Bound::AtLeast => format!(">= {}", num(predicted - slack)),
        Bound::AtMost => format!("<= {}", num(predicted + slack)),
        Bound::Within => format!("{} ± {}", num(predicted), num(slack)),
        Bound::Info => "-".into(),
    }
}

/// One line per check: predicted value, measured value and verdict.
pub fn render(summaries: &[Summary]) -> String {
    let mut rows: Vec<[String; 6]> = vec![["experiment", "check", "predicted", "measured", "target", "result"].map(String::from)];
    for s in summaries {
        for c in &s.checks {
            let measured = match c.stderr {
                Some(e) => format!("{} ± {}", num(c.measured), num(e)),
                None => num(c.measured),
            };
            let verdict = match (c.bound, c.passed) {
                (Bound::Info, _) => "info",
                (_, true) => "PASS",
                (_, false) => "FAIL",
            };
            let predicted = if c.bound == Bound::Info { "-".into() } else { num(c.predicted) };
            rows.push([s.experiment.clone(), c.name.clone(), predicted, measured, target(c.bound, c.predicted, c.slack), verdict.into()]);
        }
    }
    let widths: Vec<usize> = (0..6).map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (k, r) in rows.iter().enumerate() {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        if k == 0 {
            let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        }
    }
    let failed: usize = summaries.iter().map(|s| s.checks.iter().filter(|c| !c.passed).count()).sum();
    let total: usize = summaries.iter().map(|s| s.checks.len()).sum();
    let _ = writeln!(out, "\n{} checks, {} failed", total, failed);
    out
}

/// Read the given summary files, or every summary under `dir` when none
/// are given.
pub fn load(dir: &Path, files: &[std::path::PathBuf]) -> LabResult<Vec<Summary>> {
    let paths = if files.is_empty() { find_summaries(dir)? } else { files.to_vec() };
    if paths.is_empty() {
        return Err(LabError::MissingArtifacts("nothing to report".into()));
    }
    paths.iter().map(|p| read_summary(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifacts::Check;

    #[test]
    fn table_shows_prediction_and_verdict() {
        let s = Summary::new(
            "glue-scan",
            42,
            vec![Check::new("c-sweep OVERLAP_12", Bound::AtMost, -1.0, -2.0, 0.3), Check::new("c0", Bound::Info, 23.1, 0.0, 0.0)],
        );
        let t = render(&[s]);
        assert!(t.contains("<= -1.7000"));
        assert!(t.contains("FAIL"));
        assert!(t.contains("info"));
        assert!(t.contains("2 checks, 1 failed"));
    }

    #[test]
    fn empty_directory_has_nothing_to_report() {
        let dir = tempfile::tempdir().unwrap();
        match load(dir.path(), &[]) {
            Err(e @ LabError::MissingArtifacts(_)) => {
                assert_eq!(e.exit_code(), 4);
                assert!(e.to_string().contains("nothing to report"));
            }
            other => panic!("{other:?}"),
        }
    }
}
