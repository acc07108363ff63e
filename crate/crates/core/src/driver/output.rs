//! CSV and text writers. Floats are printed with 17 significant digits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{RunConfig, SampleRow};
use crate::error::{Error, Result};
use crate::timeint::{RunOutcome, StepDiagnostics};

pub const LINE_HEADER: &str = "s,x,y,rho,vx,vy,p,E";
pub const FIELD_HEADER: &str = "x,y,rho,vx,vy,p,E";
pub const DIAGNOSTICS_HEADER: &str = "step,t,min_rho,min_p,mass,energy,min_alpha,mean_alpha,ms_per_step";

/// Paths written by [`write_outputs`].
#[derive(Clone, Debug, PartialEq)]
pub struct OutputFiles {
    pub line: PathBuf,
    pub field: PathBuf,
    pub diagnostics: PathBuf,
    pub config: PathBuf,
    pub failure: Option<PathBuf>,
}

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_values(out: &mut String, row: &SampleRow) {
    match row.values {
        Some(v) => {
            for x in [v.rho, v.v[0], v.v[1], v.p, v.e] {
                out.push(',');
                out.push_str(&f(x));
            }
        }
        None => out.push_str(",nan,nan,nan,nan,nan"),
    }
    out.push('\n');
}

pub fn line_csv(rows: &[SampleRow]) -> String {
    let mut out = format!("{LINE_HEADER}\n");
    for r in rows {
        let _ = write!(out, "{},{},{}", f(r.s), f(r.x[0]), f(r.x[1]));
        push_values(&mut out, r);
    }
    out
}

pub fn field_csv(rows: &[SampleRow], grid: [usize; 2]) -> String {
    let mut out = format!("nx,ny\n{},{}\n{FIELD_HEADER}\n", grid[0], grid[1]);
    for r in rows {
        let _ = write!(out, "{},{}", f(r.x[0]), f(r.x[1]));
        push_values(&mut out, r);
    }
    out
}

pub fn diagnostics_csv(records: &[StepDiagnostics<f64>]) -> String {
    let mut out = format!("{DIAGNOSTICS_HEADER}\n");
    for d in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            d.step,
            f(d.t),
            f(d.min_rho),
            f(d.min_p),
            f(d.mass),
            f(d.energy),
            f(d.min_alpha),
            f(d.mean_alpha),
            f(d.ms_per_step)
        );
    }
    out
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Writes `line.csv`, `field.csv`, `diagnostics.csv`, `config.txt` and, for aborted runs,
/// `failure.txt` into `dir`.
pub fn write_outputs(dir: &Path, cfg: &RunConfig, line: &[SampleRow], grid: &[SampleRow], outcome: &RunOutcome<f64>) -> Result<OutputFiles> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    let files = OutputFiles {
        line: dir.join("line.csv"),
        field: dir.join("field.csv"),
        diagnostics: dir.join("diagnostics.csv"),
        config: dir.join("config.txt"),
        failure: outcome.failure.as_ref().map(|_| dir.join("failure.txt")),
    };
    write_file(&files.line, &line_csv(line))?;
    write_file(&files.field, &field_csv(grid, cfg.grid))?;
    write_file(&files.diagnostics, &diagnostics_csv(&outcome.diagnostics))?;
    write_file(&files.config, &cfg.serialize())?;
    let failure_path = dir.join("failure.txt");
    match (&outcome.failure, &files.failure) {
        (Some((t, e)), Some(path)) => write_file(path, &format!("t = {}\nerror = {e}\n", f(*t)))?,
        _ => {
            if failure_path.exists() {
                std::fs::remove_file(&failure_path).map_err(|source| Error::Io { path: failure_path, source })?;
            }
        }
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::super::SampleValues;
    use super::*;

    #[test]
    fn headers_and_number_format() {
        let row = SampleRow { s: 0.5, x: [0.5, 0.25], values: Some(SampleValues { rho: 1.0, v: [0.0, -0.1], p: 0.1, e: 2.5 }) };
        let missing = SampleRow { values: None, ..row };
        let text = line_csv(&[row, missing]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "s,x,y,rho,vx,vy,p,E");
        assert_eq!(lines[1].split(',').count(), 8);
        assert!(lines[1].starts_with("5.0000000000000000e-1,"));
        assert!(lines[2].ends_with("nan,nan,nan,nan,nan"));
        let field = field_csv(&[row], [1, 1]);
        assert!(field.starts_with("nx,ny\n1,1\nx,y,rho,vx,vy,p,E\n"));
        // 17 significant digits survive a round trip
        let x = 0.1f64 + 0.2;
        assert_eq!(f(x).parse::<f64>().unwrap(), x);
    }
}
