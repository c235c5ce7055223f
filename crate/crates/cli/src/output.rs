//! Report documents, CSV traces and witness files.

use std::fs;
use std::path::PathBuf;

use niq_core::feedback::LoopTrace;
use niq_core::report::{VerdictReport, Witness};
use niq_core::signal::Signal;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::exit::CliError;

pub const OUT_ENV: &str = "NIQ_OUT";
pub const DEFAULT_OUT: &str = "niq-out";

pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, CliError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| CliError::io(e, &dir.display().to_string()))?;
        Ok(Output { dir })
    }

    /// Writes `contents` to `rel` under the output directory and returns the relative path.
    pub fn write(&self, rel: &str, contents: &str) -> Result<String, CliError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(e, &parent.display().to_string()))?;
        }
        fs::write(&path, contents).map_err(|e| CliError::io(e, &path.display().to_string()))?;
        Ok(rel.to_string())
    }

    /// Stores the witness input as CSV and records the file name in the witness.
    pub fn store_witness(&self, witness: &mut Option<Witness>, stem: &str) -> Result<(), CliError> {
        if let Some(w) = witness {
            if let Some(input) = &w.input {
                w.file = Some(self.write(&format!("witness-{}.csv", sanitize(stem)), &signal_csv(input))?);
            }
        }
        Ok(())
    }

    pub fn store_report_witness(&self, report: &mut VerdictReport, stem: &str) -> Result<(), CliError> {
        self.store_witness(&mut report.witness, stem)
    }
}

/// Keeps names usable as file names.
pub fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn columns(prefix: &str, n: usize) -> Vec<String> {
    if n == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=n).map(|i| format!("{prefix}_{i}")).collect()
    }
}

pub fn signal_csv(sig: &Signal) -> String {
    let mut out = String::new();
    let mut header = vec!["t".to_string()];
    header.extend(columns("u", sig.dim()));
    out.push_str(&header.join(","));
    out.push('\n');
    for m in 0..sig.len() {
        out.push_str(&num(sig.time(m)));
        for v in sig.sample(m) {
            out.push(',');
            out.push_str(&num(*v));
        }
        out.push('\n');
    }
    out
}

/// `t,d1,u1,y1,y2`, optionally followed by `abs_y1`.
pub fn trace_csv(trace: &LoopTrace, abs_y1: bool) -> String {
    let n = trace.y1.dim();
    let mut header = vec!["t".to_string()];
    for name in ["d1", "u1", "y1", "y2"] {
        header.extend(columns(name, n));
    }
    if abs_y1 {
        header.push("abs_y1".into());
    }
    let mut out = header.join(",");
    out.push('\n');
    for m in 0..trace.y1.len() {
        out.push_str(&num(trace.y1.time(m)));
        for sig in [&trace.d1, &trace.u1, &trace.y1, &trace.y2] {
            for v in sig.sample(m) {
                out.push(',');
                out.push_str(&num(*v));
            }
        }
        if abs_y1 {
            let norm = trace.y1.sample(m).iter().map(|v| v * v).sum::<f64>().sqrt();
            out.push(',');
            out.push_str(&num(norm));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize)]
pub struct ReportDocument<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: &'a ExperimentConfig,
    pub results: serde_json::Value,
    pub flags: Vec<String>,
    pub exit_code: i32,
    /// Wall-clock data; the only nondeterministic field, kept on one line.
    pub timing: String,
}

impl ReportDocument<'_> {
    pub fn render(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
