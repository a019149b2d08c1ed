//! Files written by the commands: JSON reports and CSV matrices/tables.

use crate::config::CliResult;
use nalgebra::DMatrix;
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// One pass/fail line of a report.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub check_id: String,
    /// short description of the identity being checked
    pub reference: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRecord {
    /// `pass` is `residual < tolerance`; `NaN` never passes.
    pub fn new(check_id: impl Into<String>, reference: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        CheckRecord {
            check_id: check_id.into(),
            reference: reference.into(),
            residual,
            tolerance,
            pass: residual < tolerance,
        }
    }

    /// A boolean property; the residual is 0 or 1.
    pub fn flag(check_id: impl Into<String>, reference: impl Into<String>, ok: bool) -> Self {
        CheckRecord {
            check_id: check_id.into(),
            reference: reference.into(),
            residual: if ok { 0.0 } else { 1.0 },
            tolerance: 0.5,
            pass: ok,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:<40} residual={:.3e} tol={:.1e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.check_id,
            self.residual,
            self.tolerance
        )
    }
}

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: PathBuf) -> CliResult<Self> {
        fs::create_dir_all(&root)?;
        Ok(OutputDir { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| crate::config::CliError::Compute(format!("serialization: {e}")))?;
        text.push('\n');
        let p = self.path(name);
        fs::write(&p, text)?;
        Ok(p)
    }

    /// A matrix with a one-line `#` header carrying its shape and `meta`.
    pub fn write_matrix(&self, name: &str, m: &DMatrix<f64>, meta: &str) -> CliResult<PathBuf> {
        let mut text = format!("# rows={} cols={} {}\n", m.nrows(), m.ncols(), meta);
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        let p = self.path(name);
        fs::write(&p, text)?;
        Ok(p)
    }

    /// A table with a column-name header line.
    pub fn write_table(&self, name: &str, columns: &[&str], rows: &[Vec<String>]) -> CliResult<PathBuf> {
        let mut text = columns.join(",");
        text.push('\n');
        for r in rows {
            let _ = writeln!(text, "{}", r.join(","));
        }
        let p = self.path(name);
        fs::write(&p, text)?;
        Ok(p)
    }
}

/// Fixed formatting for numbers in CSV tables.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_never_passes() {
        assert!(!CheckRecord::new("x", "r", f64::NAN, 1.0).pass);
        assert!(CheckRecord::new("x", "r", 0.5, 1.0).pass);
        assert!(!CheckRecord::new("x", "r", 1.0, 1.0).pass);
        assert!(CheckRecord::flag("f", "r", true).line().starts_with("PASS"));
    }

    #[test]
    fn matrix_header() {
        let dir = std::env::temp_dir().join(format!("pfens-output-{}", std::process::id()));
        let out = OutputDir::create(dir.clone()).unwrap();
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 0.25]);
        let p = out.write_matrix("m.csv", &m, "weight=test").unwrap();
        let text = fs::read_to_string(p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# rows=2 cols=3 weight=test"));
        assert_eq!(lines.next(), Some("1e0,2e0,3e0"));
        assert_eq!(lines.next(), Some("4e0,5e0,2.5e-1"));
        let _ = fs::remove_dir_all(dir);
    }
}
