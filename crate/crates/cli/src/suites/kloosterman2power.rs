//! Kloosterman oracle equivalence, the explicit evaluation of `S(a, b; 2^s)`
//! and the 2-adic square-root lemmas.

use anyhow::Result;
use ksumlab_core::exec;
use ksumlab_core::kloosterman::{kl2_direct_row, kl2_fast, kloosterman_row, s2_formula};
use ksumlab_core::Modulus;
use num_complex::Complex64;

use super::{failure, run_cases, VerifyParams};
use crate::cases::Case;
use crate::report::SuiteReport;
use crate::tolerances as tol;

pub(super) fn run(p: &VerifyParams, report: &mut SuiteReport) -> Result<()> {
    kl2_oracle(p.max_q, report)?;
    klo2_numeric(p.max_s, report)?;
    if p.exact {
        klo2_exact(p.max_s, report)?;
    }
    sqrt2(report)?;
    shift(report)?;
    Ok(())
}

/// `kl2_fast` against the literal row for every `a mod q`, `q ≤ max_q`.
fn kl2_oracle(max_q: u64, report: &mut SuiteReport) -> Result<()> {
    let per_q = exec::map_range(max_q as usize, |i| -> Result<(f64, Vec<(u64, u64, f64, f64)>)> {
        let q = i as u64 + 1;
        let m = Modulus::new(q)?;
        let row = kl2_direct_row(q)?;
        let mut worst = 0.0f64;
        let mut bad = Vec::new();
        for a in 0..q {
            let fast = kl2_fast(a as i128, &m).value;
            let err = (fast - row[a as usize]).norm();
            worst = worst.max(err);
            if err >= tol::KL_ORACLE {
                bad.push((q, a, fast.re, row[a as usize].re));
            }
        }
        Ok((worst, bad))
    });
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for r in per_q {
        let (w, bad) = r?;
        worst = worst.max(w);
        for (q, a, f, d) in bad {
            failures.push(failure(
                "kl2_fast_vs_direct",
                &Case::Kl2 { q, a },
                format!("|kl2_fast - kl2_direct| < {:e}", tol::KL_ORACLE),
                format!("fast={f:.12} direct={d:.12}"),
            ));
        }
    }
    report.push_check("kl2_fast_vs_direct", max_q * (max_q + 1) / 2, failures);
    report.constant("kl2_max_error", worst);
    Ok(())
}

/// Every odd `a, b mod 2^s`: `S = 0` unless `a ≡ b mod 8`, else the closed form.
/// The literal sums come from one transform per `a`.
fn klo2_numeric(max_s: u32, report: &mut SuiteReport) -> Result<()> {
    let mut failures = Vec::new();
    let mut cases = 0;
    let mut worst = 0.0f64;
    for s in 6..=max_s {
        let q = 1u64 << s;
        let odd: Vec<i64> = (1..q as i64).step_by(2).collect();
        let rows = exec::map_slice(&odd, |&a| -> Result<(f64, Vec<(i64, f64)>)> {
            let row = kloosterman_row(a as i128, q)?;
            let mut w = 0.0f64;
            let mut bad = Vec::new();
            for &b in &odd {
                let want = if (a - b).rem_euclid(8) != 0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    s2_formula(a as i128, b as i128, s, false)?.value
                };
                let err = (row[b as usize] - want).norm();
                w = w.max(err);
                if err >= tol::KLO2_NUMERIC {
                    bad.push((b, err));
                }
            }
            Ok((w, bad))
        });
        for (a, r) in odd.iter().zip(rows) {
            let (w, bad) = r?;
            worst = worst.max(w);
            for (b, err) in bad {
                failures.push(failure(
                    "klo2_numeric",
                    &Case::Klo2 { s, a: *a, b, exact: false },
                    format!("|S(a,b;2^s) - expected| < {:e}", tol::KLO2_NUMERIC),
                    format!("error={err:.3e}"),
                ));
            }
        }
        cases += (odd.len() * odd.len()) as u64;
    }
    report.push_check("klo2_numeric", cases, failures);
    report.constant("klo2_max_error", worst);
    Ok(())
}

/// Exact comparison in `Z[ζ_{2^{s+3}}]`. Both the literal sum (substitute
/// `x → x/a`) and the closed form depend on `(a, b)` only through `ab mod 2^s`,
/// so `a = 1` with every odd `b` covers all pairs.
fn klo2_exact(max_s: u32, report: &mut SuiteReport) -> Result<()> {
    let cases: Vec<Case> = (6..=max_s)
        .flat_map(|s| (1..(1i64 << s)).step_by(2).map(move |b| Case::Klo2 { s, a: 1, b, exact: true }))
        .collect();
    run_cases(report, "klo2_exact", &cases)?;
    Ok(())
}

/// Largest `k` of the exhaustive square-root sweep.
pub const SQRT_MAX_K: u32 = 16;

fn sqrt2(report: &mut SuiteReport) -> Result<()> {
    let cases: Vec<Case> = (3..=SQRT_MAX_K)
        .flat_map(|k| (1..(1u64 << k)).step_by(8).map(move |u| Case::Sqrt2 { k, u }))
        .collect();
    run_cases(report, "two_adic_sqrt", &cases)?;
    Ok(())
}

/// Largest `k` and `λ` of the shift-congruence sweep.
pub const SHIFT_MAX_K: u32 = 12;
pub const SHIFT_MAX_LAMBDA: u32 = 4;

/// `u, u' ≡ 1 mod 8` below 64 and `t, t'` below 16, subject to the hypotheses
/// `u ≡ u' mod 2^{λ+1}` and `t ≡ t' mod 2^λ`.
fn shift(report: &mut SuiteReport) -> Result<()> {
    let mut cases = Vec::new();
    for k in 3..=SHIFT_MAX_K {
        for lambda in 0..=SHIFT_MAX_LAMBDA {
            for u in (1..64i64).step_by(8) {
                for u2 in (1..64i64).step_by(8) {
                    if (u - u2).rem_euclid(1 << (lambda + 1)) != 0 {
                        continue;
                    }
                    for t in 0..16i64 {
                        for t2 in 0..16i64 {
                            if (t - t2).rem_euclid(1 << lambda) == 0 {
                                cases.push(Case::Shift { k, lambda, u, u2, t, t2 });
                            }
                        }
                    }
                }
            }
        }
    }
    run_cases(report, "sqrt_shift_congruence", &cases)?;
    Ok(())
}
