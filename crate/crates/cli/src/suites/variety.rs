//! Regimes of the point count `𝒦(b, h; p)` over a prime sweep.

use anyhow::Result;
use ksumlab_core::rng;
use ksumlab_core::stats::loglog_slope;
use ksumlab_core::variety::{bad_components, count_k_oracle, vdelta_member, Regime};
use rand::Rng;

use super::{primes_in, run_cases, VerifyParams};
use crate::cases::Case;
use crate::report::{Failure, SuiteReport};
use crate::tolerances as tol;

/// Largest prime accepted by the suite.
pub const MAX_P: u64 = ksumlab_core::variety::ORACLE_MAX_P;

/// Every `H_ZERO_EVERY`-th sample uses `h = (0, 0)`.
pub const H_ZERO_EVERY: usize = 5;

/// A generic count at least this multiple of `p` is reported as a finding.
pub const FINDING_FACTOR: f64 = 1.0;
/// Findings start here: below it `p` is comparable to the generic constant itself.
pub const FINDING_MIN_P: u64 = 29;
/// Smallest prime of the diagnostic slope fit that skips the saturated small primes.
pub const DIAGNOSTIC_MIN_P: u64 = 11;

/// `b mod p` outside `𝒱^Δ`, and `h` per the sample index.
fn sample(seed: u64, p: u64, i: usize) -> ([i64; 4], [i64; 2]) {
    let mut r = rng::stream(seed, "variety/thmk", p * 1_000_000 + i as u64);
    let b = loop {
        let b = [0; 4].map(|_: i64| r.gen_range(0..p as i64));
        if !vdelta_member(&b, p) {
            break b;
        }
    };
    let h = if i.is_multiple_of(H_ZERO_EVERY) {
        [0, 0]
    } else {
        loop {
            let h = [0; 2].map(|_: i64| r.gen_range(0..p as i64));
            if h != [0, 0] {
                break h;
            }
        }
    };
    (b, h)
}

pub(super) fn run(p: &VerifyParams, report: &mut SuiteReport) -> Result<()> {
    let primes = primes_in(5, p.max_p);
    let mut cases = Vec::new();
    for &q in &primes {
        for i in 0..p.samples {
            let (b, h) = sample(p.seed, q, i);
            cases.push(Case::ThmK { p: q, b, h });
        }
    }
    run_cases(report, "oracle_vs_k1", &cases)?;

    // Counts come from the oracle; the agreement check above covers k1.
    let counts = ksumlab_core::exec::map_slice(&cases, |c| match c {
        Case::ThmK { p, b, h } => count_k_oracle(b, h, *p, false),
        _ => unreachable!("thmk cases only"),
    });
    let mut generic_max = Vec::new();
    let mut h0_ratio = 0.0f64;
    let mut bad_ratio = 0.0f64;
    let (mut n_generic, mut n_h0, mut n_bad) = (0u64, 0u64, 0u64);
    for (k, &q) in primes.iter().enumerate() {
        let mut gmax = 0u64;
        for i in 0..p.samples {
            let idx = k * p.samples + i;
            let c = counts[idx].as_ref().map_err(|e| anyhow::anyhow!("{e}"))?;
            let Case::ThmK { b, h, .. } = &cases[idx] else { unreachable!() };
            match c.regime {
                Regime::HZero => {
                    n_h0 += 1;
                    h0_ratio = h0_ratio.max(c.k_full as f64 / q as f64);
                }
                Regime::BadPair => {
                    n_bad += 1;
                    bad_ratio = bad_ratio.max(c.k_full as f64 / q as f64);
                }
                Regime::Generic => {
                    n_generic += 1;
                    gmax = gmax.max(c.k_full);
                    if q >= FINDING_MIN_P && c.k_full as f64 >= FINDING_FACTOR * q as f64 {
                        let through_b: Vec<String> =
                            bad_components(b, h, q).into_iter().filter(|x| x.b_vanishes).map(|x| x.name).collect();
                        report.findings.push(format!(
                            "generic count {} >= {FINDING_FACTOR}·p outside the explicit bad locus: {} (b-components: {})",
                            c.k_full,
                            cases[idx],
                            if through_b.is_empty() { "none".to_string() } else { through_b.join("; ") }
                        ));
                    }
                }
            }
        }
        report.constant(&format!("generic_max_count_at_{q}"), gmax as f64);
        generic_max.push((q as f64, gmax.max(1) as f64));
    }
    let slope = loglog_slope(&generic_max).unwrap_or(f64::NAN);
    let failures = if slope <= tol::GENERIC_COUNT_SLOPE {
        Vec::new()
    } else {
        let worst = generic_max.iter().fold((0.0, 0.0), |a, &x| if x.1 > a.1 { x } else { a });
        vec![Failure {
            check: "generic_count_slope".into(),
            input: format!("primes 5..={} samples={} seed={}", p.max_p, p.samples, p.seed),
            expected: format!("log-log slope of max generic count vs p <= {}", tol::GENERIC_COUNT_SLOPE),
            observed: format!("slope={slope:.6} largest max count {} at p={}", worst.1, worst.0),
            replay: format!("ksumlab verify --suite variety --max-p {} --seed {}", p.max_p, p.seed),
        }]
    };
    report.push_check("generic_count_slope", n_generic, failures);
    report.constant("generic_count_slope", slope);
    let tail: Vec<(f64, f64)> = generic_max.iter().copied().filter(|x| x.0 >= DIAGNOSTIC_MIN_P as f64).collect();
    report.constant(&format!("generic_count_slope_p_ge_{DIAGNOSTIC_MIN_P}"), loglog_slope(&tail).unwrap_or(f64::NAN));
    report.constant("h_zero_count_over_p", h0_ratio);
    report.constant("bad_pair_count_over_p", bad_ratio);
    report.constant("h_zero_samples", n_h0 as f64);
    report.constant("bad_pair_samples", n_bad as f64);

    // h = (0, 0): a single constant C with k ≤ C·p across the sweep, checked by
    // calibrating C on the lower half of the primes and validating on the upper half.
    let half = primes.len() / 2;
    let ratio_on = |ps: &[u64]| -> f64 {
        let mut m = 0.0f64;
        for (k, &q) in primes.iter().enumerate() {
            if !ps.contains(&q) {
                continue;
            }
            for i in 0..p.samples {
                let idx = k * p.samples + i;
                if let Ok(c) = &counts[idx] {
                    if c.regime == Regime::HZero {
                        m = m.max(c.k_full as f64 / q as f64);
                    }
                }
            }
        }
        m
    };
    let c_low = ratio_on(&primes[..half]);
    let c_high = ratio_on(&primes[half..]);
    let failures = if c_high <= H_ZERO_SLACK * c_low.max(1.0) {
        Vec::new()
    } else {
        vec![Failure {
            check: "h_zero_linear_bound".into(),
            input: format!("primes 5..={} samples={} seed={}", p.max_p, p.samples, p.seed),
            expected: format!("max k/p on upper primes <= {H_ZERO_SLACK} * max(1, max k/p on lower primes)"),
            observed: format!("lower={c_low:.6} upper={c_high:.6}"),
            replay: format!("ksumlab verify --suite variety --max-p {} --seed {}", p.max_p, p.seed),
        }]
    };
    report.push_check("h_zero_linear_bound", n_h0, failures);
    report.constant("h_zero_c_lower_primes", c_low);
    report.constant("h_zero_c_upper_primes", c_high);
    Ok(())
}

/// Allowed growth of the `h = (0, 0)` constant from the lower to the upper primes.
pub const H_ZERO_SLACK: f64 = 2.0;
