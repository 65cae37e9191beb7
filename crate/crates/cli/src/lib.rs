//! Verification suites, replayable cases and deterministic reports behind the
//! `ksumlab` binary.

pub mod cases;
pub mod report;
pub mod suites;
pub mod tolerances;

use ksumlab_core::bilinear::ScanReport;
use report::fmt_float;

/// Header of the `scan-bilinear` CSV.
pub const SCAN_CSV_HEADER: &str =
    "q,family,M,N,trial_max_ratio,envelope_main,envelope_PV,case,chosen_s,max_unimodular,max_rademacher,envelope_bks";

/// Renders scan rows as CSV, floats at 12 significant digits.
pub fn scan_csv(reports: &[ScanReport]) -> String {
    let mut out = String::from(SCAN_CSV_HEADER);
    out.push('\n');
    for r in reports {
        for row in &r.rows {
            let fields = [
                row.q.to_string(),
                row.family.to_string(),
                row.m.to_string(),
                row.n.to_string(),
                fmt_float(row.trial_max_ratio),
                fmt_float(row.envelope_main),
                fmt_float(row.envelope_pv),
                row.case.map_or(String::new(), |c| c.to_string()),
                row.chosen_s.map_or(String::new(), |s| s.to_string()),
                fmt_float(row.max_unimodular),
                fmt_float(row.max_rademacher),
                fmt_float(row.envelope_bks),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
    }
    out
}
