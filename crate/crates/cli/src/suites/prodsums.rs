//! Multiplicativity of `ℜ` and `𝔖`, and the stability of bound ratios.

use anyhow::Result;
use ksumlab_core::modcore::{divisors, gcd};
use ksumlab_core::prodsums::{check_bounds, BoundGrid, BoundLemma, BoundReport};
use ksumlab_core::rng;
use rand::Rng;

use super::{failure, primes_in, run_cases, VerifyParams};
use crate::cases::Case;
use crate::report::SuiteReport;
use crate::tolerances as tol;

/// `l` samples per `b`-class for `ℜ`.
pub const R1_SAMPLES: usize = 2;
/// `(b, h)` samples per prime for `𝔖(·; p)`.
pub const S11_SAMPLES: usize = 24;
/// Largest prime of the `𝔖(·; p)` sweep.
pub const S11_MAX_P: u64 = 61;
/// Samples per level for the 2-power sum.
pub const CS2_SAMPLES: usize = 64;
/// Exponents `s` of the 2-power sweep.
pub const CS2_LEVELS: std::ops::RangeInclusive<u64> = 4..=20;

pub(super) fn run(p: &VerifyParams, report: &mut SuiteReport) -> Result<()> {
    split_cases(p, report)?;
    let r1 = BoundGrid { levels: primes_in(5, p.max_p), samples: R1_SAMPLES, seed: p.seed };
    let s11 = BoundGrid { levels: primes_in(5, p.max_p.min(S11_MAX_P)), samples: S11_SAMPLES, seed: p.seed };
    let cs2 = BoundGrid { levels: CS2_LEVELS.collect(), samples: CS2_SAMPLES, seed: p.seed };
    for (lemma, grid, name) in [(BoundLemma::R1, r1, "r1"), (BoundLemma::S11, s11, "s11"), (BoundLemma::CS2, cs2, "cs2")] {
        let r = check_bounds(lemma, &grid)?;
        slope_check(report, lemma, &grid, name, &r);
    }
    Ok(())
}

fn slope_check(report: &mut SuiteReport, lemma: BoundLemma, grid: &BoundGrid, name: &str, r: &BoundReport) {
    let check = format!("{name}_ratio_slope");
    let case = Case::BoundSlope { lemma, levels: grid.levels.clone(), samples: grid.samples, seed: grid.seed };
    let failures = if r.exponent_fit <= tol::BOUND_SLOPE {
        Vec::new()
    } else {
        vec![failure(
            &check,
            &case,
            format!("log-log slope of per-level max ratio <= {}", tol::BOUND_SLOPE),
            format!("slope={:.6} max_ratio={:.6} at {}", r.exponent_fit, r.max_ratio, r.argmax_input),
        )]
    };
    report.push_check(&check, r.sample_count as u64, failures);
    report.constant(&format!("{name}_slope"), r.exponent_fit);
    report.constant(&format!("{name}_max_ratio"), r.max_ratio);
    for l in &r.per_level {
        report.constant(&format!("{name}_max_ratio_at_{}", l.level), l.max_ratio);
    }
    report.findings.extend(r.outliers.iter().map(|o| format!("{name} outlier: {o}")));
}

/// Coprime `q₁, q₂ ≥ 2` with `q₁q₂ ≤ max_q`.
fn coprime_pair<R: Rng>(rng: &mut R, max_q: u64) -> (u64, u64) {
    loop {
        let q1 = rng.gen_range(2..=max_q / 2);
        if max_q / q1 < 2 {
            continue;
        }
        let q2 = rng.gen_range(2..=max_q / q1);
        if gcd(q1, q2) == 1 {
            return (q1, q2);
        }
    }
}

fn split_cases(p: &VerifyParams, report: &mut SuiteReport) -> Result<()> {
    let mut rcases = Vec::with_capacity(p.samples);
    let mut scases = Vec::with_capacity(p.samples);
    for i in 0..p.samples as u64 {
        let mut r = rng::stream(p.seed, "prodsums/split-r", i);
        let (q1, q2) = coprime_pair(&mut r, p.max_q);
        let q = (q1 * q2) as i64;
        let b = [0; 4].map(|_: i64| r.gen_range(0..q));
        let l = [0; 2].map(|_: i64| r.gen_range(0..q));
        rcases.push(Case::SplitR { b, l, q1, q2 });

        let mut r = rng::stream(p.seed, "prodsums/split-s", i);
        let (q1, q2) = coprime_pair(&mut r, p.max_q);
        let q = (q1 * q2) as i64;
        let b = [0; 4].map(|_: i64| r.gen_range(0..q));
        let h = [0; 2].map(|_: i64| r.gen_range(0..q));
        let ds = divisors(q as u64)?;
        let d = ds[r.gen_range(0..ds.len())];
        scases.push(Case::SplitS { b, h, d, q1, q2 });
    }
    for (check, cases) in [("split_r", rcases), ("split_s", scases)] {
        let out = run_cases(report, check, &cases)?;
        let worst = out.iter().map(|o| error_of(&o.observed)).fold(0.0, f64::max);
        report.constant(&format!("{check}_max_error"), worst);
    }
    Ok(())
}

/// The `error=` field of a split outcome.
fn error_of(observed: &str) -> f64 {
    observed.rsplit("error=").next().and_then(|s| s.parse().ok()).unwrap_or(f64::NAN)
}
