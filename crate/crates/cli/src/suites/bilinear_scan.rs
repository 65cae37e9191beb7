//! Random bilinear forms in `Kl₂` against the theorem envelopes.

use anyhow::Result;
use ksumlab_core::bilinear::{family_moduli, scan, Family, Shape};

use super::{failure, VerifyParams};
use crate::cases::{kl_sup, Case};
use crate::report::SuiteReport;

/// Smallest modulus of each family sweep.
pub const Q_MIN: u64 = 100;
/// Moduli per family, log-spaced.
pub const POINTS: usize = 8;
/// `M = N = q^{1/2}`.
pub const SHAPE: Shape = Shape { m_exp: 0.5, n_exp: 0.5 };

pub(super) fn run(p: &VerifyParams, report: &mut SuiteReport) -> Result<()> {
    let mut failures = Vec::new();
    let mut cases = 0;
    for family in Family::ALL {
        let qs = family_moduli(family, Q_MIN, p.max_q, POINTS);
        let r = scan(family, &qs, SHAPE, p.samples, p.seed)?;
        for row in &r.rows {
            cases += 1;
            let sup = kl_sup(row.q)?;
            if row.trial_max_ratio > sup * (1.0 + 1e-12) {
                let case = Case::ScanTrivial {
                    family,
                    q: row.q,
                    m_exp: SHAPE.m_exp,
                    n_exp: SHAPE.n_exp,
                    trials: p.samples,
                    seed: p.seed,
                };
                failures.push(failure(
                    "scan_below_trivial",
                    &case,
                    "trial max ratio <= max_a |Kl2(a;q)|".into(),
                    format!("ratio={:.9} sup={sup:.9}", row.trial_max_ratio),
                ));
            }
        }
        let tag = family.tag();
        for (name, v) in [
            ("measured_exponent", r.measured_exponent),
            ("exponent_main", r.exponent_main),
            ("exponent_pv", r.exponent_pv),
            ("exponent_bks", r.exponent_bks),
        ] {
            if let Some(v) = v {
                report.constant(&format!("{tag}_{name}"), v);
            }
        }
        let worst = r.rows.iter().map(|x| x.trial_max_ratio).fold(0.0, f64::max);
        report.constant(&format!("{tag}_max_ratio"), worst);
        report.findings.extend(r.findings.iter().map(|f| format!("{tag}: {f}")));
    }
    report.push_check("scan_below_trivial", cases, failures);
    Ok(())
}
