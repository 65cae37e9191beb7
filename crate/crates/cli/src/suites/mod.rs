//! Named verification suites.
//!
//! Each suite expands its parameters into cases, evaluates them through the
//! parallel helpers of the core crate and assembles a [`SuiteReport`]
//! single-threaded, in case order.

pub mod bilinear_scan;
pub mod kloosterman2power;
pub mod moments;
pub mod prodsums;
pub mod symbolic;
pub mod variety;

use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Result};
use ksumlab_core::exec;
use serde::Serialize;

use crate::cases::{Case, Outcome};
use crate::report::{Failure, SuiteReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Kloosterman2Power,
    Prodsums,
    Variety,
    Symbolic,
    BilinearScan,
    Moments,
}

impl Suite {
    pub const ALL: [Suite; 6] =
        [Suite::Kloosterman2Power, Suite::Prodsums, Suite::Variety, Suite::Symbolic, Suite::BilinearScan, Suite::Moments];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Kloosterman2Power => "kloosterman2power",
            Suite::Prodsums => "prodsums",
            Suite::Variety => "variety",
            Suite::Symbolic => "symbolic",
            Suite::BilinearScan => "bilinear-scan",
            Suite::Moments => "moments",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match Suite::ALL.into_iter().find(|x| x.name() == s) {
            Some(x) => Ok(x),
            None => bail!("unknown suite '{s}'; expected one of kloosterman2power, prodsums, variety, symbolic, bilinear-scan, moments"),
        }
    }
}

/// Suite inputs. Unset fields take the per-suite defaults of [`VerifyParams::resolve`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyOptions {
    pub max_p: Option<u64>,
    pub max_q: Option<u64>,
    pub max_s: Option<u32>,
    pub samples: Option<usize>,
    pub seed: u64,
    pub exact: bool,
}

/// Fully resolved suite inputs, echoed in the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyParams {
    pub seed: u64,
    /// Largest prime of the prime sweeps.
    pub max_p: u64,
    /// Largest modulus of the modulus sweeps.
    pub max_q: u64,
    /// Largest 2-adic exponent.
    pub max_s: u32,
    /// Random samples per level.
    pub samples: usize,
    /// Also run the exact cyclotomic comparisons.
    pub exact: bool,
}

impl VerifyParams {
    pub fn resolve(suite: Suite, o: &VerifyOptions) -> Result<Self> {
        let (max_p, max_q, max_s, samples) = match suite {
            Suite::Kloosterman2Power => (0, 3000, 12, 0),
            Suite::Prodsums => (97, 2000, 12, 200),
            Suite::Variety => (61, 0, 0, 50),
            Suite::Symbolic => (0, 0, 0, 0),
            Suite::BilinearScan => (0, 200_000, 0, 4),
            Suite::Moments => (0, 500, 0, 50),
        };
        let p = VerifyParams {
            seed: o.seed,
            max_p: o.max_p.unwrap_or(max_p),
            max_q: o.max_q.unwrap_or(max_q),
            max_s: o.max_s.unwrap_or(max_s),
            samples: o.samples.unwrap_or(samples),
            exact: o.exact,
        };
        if suite == Suite::Kloosterman2Power && !(6..=16).contains(&p.max_s) {
            bail!("max-s must lie in [6, 16]");
        }
        if suite == Suite::Variety && !(5..=variety::MAX_P).contains(&p.max_p) {
            bail!("max-p must lie in [5, {}]", variety::MAX_P);
        }
        if suite == Suite::Prodsums && p.max_p < 7 {
            bail!("max-p must be at least 7");
        }
        Ok(p)
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<SuiteReport> {
    let p = VerifyParams::resolve(suite, opts)?;
    let mut report = SuiteReport::new(suite.name(), serde_json::to_value(&p)?);
    match suite {
        Suite::Kloosterman2Power => kloosterman2power::run(&p, &mut report)?,
        Suite::Prodsums => prodsums::run(&p, &mut report)?,
        Suite::Variety => variety::run(&p, &mut report)?,
        Suite::Symbolic => symbolic::run(&mut report)?,
        Suite::BilinearScan => bilinear_scan::run(&p, &mut report)?,
        Suite::Moments => moments::run(&p, &mut report)?,
    }
    Ok(report)
}

pub fn replay_command(case: &str) -> String {
    format!("ksumlab replay '{case}'")
}

pub fn failure(check: &str, case: &Case, expected: String, observed: String) -> Failure {
    let input = case.to_string();
    Failure { check: check.into(), replay: replay_command(&input), input, expected, observed }
}

fn from_outcome(check: &str, o: &Outcome) -> Failure {
    Failure {
        check: check.into(),
        input: o.case.clone(),
        expected: o.expected.clone(),
        observed: o.observed.clone(),
        replay: replay_command(&o.case),
    }
}

/// Evaluates `cases` in parallel and records them as one check.
pub fn run_cases(report: &mut SuiteReport, check: &str, cases: &[Case]) -> Result<Vec<Outcome>> {
    let outcomes: Vec<Outcome> = exec::map_slice(cases, |c| c.evaluate()).into_iter().collect::<Result<_>>()?;
    let failures = outcomes.iter().filter(|o| !o.pass).map(|o| from_outcome(check, o)).collect();
    report.push_check(check, cases.len() as u64, failures);
    Ok(outcomes)
}

/// Odd primes in `[lo, hi]`.
pub fn primes_in(lo: u64, hi: u64) -> Vec<u64> {
    (lo.max(3)..=hi).filter(|&p| ksumlab_core::modcore::is_prime(p)).collect()
}
