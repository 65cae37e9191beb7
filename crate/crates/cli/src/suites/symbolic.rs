//! Polynomial identities of the sign-product reduction.

use std::collections::HashMap;

use anyhow::Result;
use ksumlab_core::variety::{verify_identities, Form};

use super::failure;
use crate::cases::Case;
use crate::report::SuiteReport;

pub(super) fn run(report: &mut SuiteReport) -> Result<()> {
    run_identities(report, "all")
}

/// Printed and corrected statements are separate checks: a misprint shows up
/// as a printed failure next to a passing correction.
pub fn run_identities(report: &mut SuiteReport, which: &str) -> Result<()> {
    let results = verify_identities(which)?;
    for (form, check) in [(Form::Printed, "identities_printed"), (Form::Corrected, "identities_corrected")] {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut failures = Vec::new();
        let mut cases = 0;
        for r in results.iter().filter(|r| r.form == form) {
            let i = index.entry(r.id.as_str()).or_default();
            let case = Case::Identity { id: r.id.clone(), form, index: *i };
            *i += 1;
            cases += 1;
            if !r.pass {
                failures.push(failure(
                    check,
                    &case,
                    format!("{}: residual = 0", r.check),
                    format!("{} residual terms: {}", r.residual_terms, r.residual),
                ));
            }
        }
        report.push_check(check, cases, failures);
    }
    Ok(())
}
