//! CSV emission for check reports. One schema per command, announced by a `# schema:` comment
//! line. Floats use Rust's shortest round-trip formatting, so equal numbers give equal bytes.

use crate::harnack::HarnackReport;
use crate::verify::{CheckKind, CheckReport};
use crate::{Error, Result};
use std::io::Write;

pub const CHECK_COLUMNS: [&str; 11] =
    ["check", "instance", "params", "kind", "lhs", "rhs", "tolerance", "stderr_lhs", "stderr_rhs", "margin", "pass"];

pub fn schema_line(command: &str) -> String {
    format!("# schema: rflow {command} checks v1")
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

/// Header comment, column row, then one row per report in the given order.
pub fn write_checks<W: Write>(mut out: W, command: &str, reports: &[CheckReport]) -> Result<()> {
    writeln!(out, "{}", schema_line(command)).map_err(|e| Error::InvalidArgument(format!("io: {e}")))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CHECK_COLUMNS).map_err(csv_err)?;
    for r in reports {
        w.write_record(check_record(r)).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("io: {e}")))
}

pub fn check_record(r: &CheckReport) -> Vec<String> {
    let kind = match r.kind {
        CheckKind::Inequality => "inequality",
        CheckKind::Identity => "identity",
    };
    vec![
        r.check.clone(),
        r.instance.clone(),
        r.params.clone(),
        kind.to_string(),
        r.lhs.to_string(),
        r.rhs.to_string(),
        r.tolerance.to_string(),
        r.stderr_lhs.to_string(),
        r.stderr_rhs.to_string(),
        margin(r).to_string(),
        if r.pass { "PASS" } else { "FAIL" }.to_string(),
    ]
}

/// Distance to failure: positive means room to spare.
pub fn margin(r: &CheckReport) -> f64 {
    match r.kind {
        CheckKind::Inequality => r.rhs + r.tolerance - r.lhs,
        CheckKind::Identity => r.tolerance - (r.lhs - r.rhs).abs(),
    }
}

pub fn harnack_to_check(h: &HarnackReport, instance: &str) -> CheckReport {
    let params = format!("p={};theta={};s={};t={};constant={}", h.p, h.theta, h.s, h.t, h.constant);
    CheckReport::inequality(
        &h.theorem,
        instance,
        params,
        crate::stats::Estimate { mean: h.lhs, stderr: h.stderr_lhs, n: 0 },
        crate::stats::Estimate { mean: h.rhs, stderr: h.stderr_rhs, n: 0 },
        0.0,
    )
}

/// One line per report for terminals and logs.
pub fn summary_line(r: &CheckReport) -> String {
    format!(
        "{} {:<28} {:<20} lhs={:.6e} rhs={:.6e} tol={:.2e} [{}]",
        if r.pass { "PASS" } else { "FAIL" },
        r.check,
        r.instance,
        r.lhs,
        r.rhs,
        r.tolerance,
        r.params
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Estimate;

    #[test]
    fn rows_round_trip_and_skip_runtime() {
        let mut a = CheckReport::inequality("c", "i", "p=1".into(), Estimate::exact(0.1), Estimate::exact(0.3), 1e-5);
        let mut buf = Vec::new();
        write_checks(&mut buf, "verify-suite", &[a.clone()]).unwrap();
        a.runtime = std::time::Duration::from_secs(7);
        let mut again = Vec::new();
        write_checks(&mut again, "verify-suite", &[a]).unwrap();
        assert_eq!(buf, again);
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# schema: rflow verify-suite checks v1");
        assert!(lines.next().unwrap().starts_with("check,instance,params"));
        let row = lines.next().unwrap();
        assert!(row.contains(",0.1,0.3,") && row.ends_with(",PASS"), "{row}");
    }

    #[test]
    fn margin_sign_follows_pass() {
        let ok = CheckReport::identity("c", "i", String::new(), Estimate::exact(1.0), Estimate::exact(1.0 + 1e-7), 1e-6);
        let bad = CheckReport::inequality("c", "i", String::new(), Estimate::exact(2.0), Estimate::exact(1.0), 0.0);
        assert!(ok.pass && margin(&ok) > 0.0);
        assert!(!bad.pass && margin(&bad) < 0.0);
    }
}
