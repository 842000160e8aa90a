//! CSV and summary writers. Numbers use Rust's shortest round-trip float
//! formatting ('.' decimal, locale-independent), so identical statistics
//! always produce identical bytes.

use crate::limit_process::LimitProcessSample;
use crate::schedules::DiscountSchedule;
use crate::stats::{ExperimentReport, ScanRow};
use std::fmt::Write as _;
use std::io;
use std::path::Path;

/// Minimal CSV field quoting (names may contain commas, e.g. cov(u=1,u=2)).
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn report_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("experiment,name,observed,target,tolerance,pass\n");
    for s in &report.statistics {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            report.experiment,
            csv_field(&s.name),
            s.observed,
            s.target,
            s.tolerance,
            s.pass
        );
    }
    out
}

pub fn scan_csv(rows: &[ScanRow]) -> String {
    let mut out = String::from("n,b,one_minus_b,value,scaled_value\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.n, r.b, r.one_minus_b, r.value, r.scaled_value);
    }
    out
}

pub fn limit_dump_csv(sample: &LimitProcessSample) -> String {
    let mut out = String::from("sample_index,u,value\n");
    for (i, row) in sample.values.iter().enumerate() {
        for (u, v) in sample.u_grid.iter().zip(row) {
            let _ = writeln!(out, "{i},{u},{v}");
        }
    }
    out
}

/// Schedule dump; long rows are subsampled to keep files reviewable.
pub fn schedule_csv(schedule: &DiscountSchedule) -> String {
    let mut out = String::from("n,b,one_minus_b,ell\n");
    let stride = (schedule.len() / 65_536).max(1);
    for (n, d) in schedule.iter() {
        if (n - 1) % stride == 0 || n == schedule.len() {
            let _ = writeln!(out, "{},{},{},{}", n, d.b(), d.one_minus_b(), d.ell());
        }
    }
    out
}

/// Witnessed condition values, long format.
pub fn condition_csv(schedule: &DiscountSchedule) -> String {
    let mut out = String::from("condition,n,value\n");
    for c in schedule.checks() {
        for &(n, v) in &c.witness {
            let _ = writeln!(out, "{},{},{}", csv_field(&c.kind.to_string()), n, v);
        }
    }
    out
}

/// Human-readable run summary with the resolved config echoed in full.
pub fn summary_text(report: &ExperimentReport, resolved_echo: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "experiment: {}", report.experiment);
    let _ = writeln!(out, "config digest: {}", report.config_digest);
    let _ = writeln!(out, "verdict: {}", if report.all_pass() { "PASS" } else { "FAIL" });
    let _ = writeln!(out);
    for s in &report.statistics {
        let _ = writeln!(
            out,
            "  [{}] {}: observed {} vs target {} (tol {})",
            if s.pass { "pass" } else { "FAIL" },
            s.name,
            s.observed,
            s.target,
            s.tolerance
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "resolved config:");
    for line in resolved_echo.lines() {
        let _ = writeln!(out, "  {line}");
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)
}
