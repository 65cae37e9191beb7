//! Suite reports and their deterministic JSON/CSV emission.
//!
//! Floats are rounded to [`SIG_DIGITS`] significant digits before printing.
//! Field order follows struct declaration order; constant maps are sorted by
//! key. No timestamps or timings enter a report.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SIG_DIGITS: usize = 12;

/// At most this many failures are listed per check; the count is always exact.
pub const MAX_LISTED_FAILURES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub check: String,
    /// Case id accepted by `ksumlab replay`.
    pub input: String,
    pub expected: String,
    pub observed: String,
    pub replay: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub name: String,
    pub cases: u64,
    pub failures: u64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub params: Value,
    pub cases: u64,
    pub failures: Vec<Failure>,
    pub measured_constants: BTreeMap<String, f64>,
    pub checks: Vec<CheckSummary>,
    /// Observations worth reporting that are not contract failures.
    pub findings: Vec<String>,
}

impl SuiteReport {
    pub fn new(suite: &str, params: Value) -> Self {
        SuiteReport {
            suite: suite.to_string(),
            params,
            cases: 0,
            failures: Vec::new(),
            measured_constants: BTreeMap::new(),
            checks: Vec::new(),
            findings: Vec::new(),
        }
    }

    /// Records one check; `failures` may hold more entries than are listed.
    pub fn push_check(&mut self, name: &str, cases: u64, failures: Vec<Failure>) {
        let count = failures.len() as u64;
        self.cases += cases;
        self.failures.extend(failures.into_iter().take(MAX_LISTED_FAILURES));
        self.checks.push(CheckSummary { name: name.to_string(), cases, failures: count, pass: count == 0 });
    }

    pub fn constant(&mut self, name: &str, value: f64) {
        self.measured_constants.insert(name.to_string(), value);
    }

    pub fn check(&self, name: &str) -> Option<&CheckSummary> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failure_count(&self) -> u64 {
        self.checks.iter().map(|c| c.failures).sum()
    }
}

/// Rounds to [`SIG_DIGITS`] significant digits; non-finite values pass through.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIG_DIGITS - 1, x).parse().expect("formatted float parses")
}

/// Rounds every float in a JSON tree.
pub fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().expect("f64 number"));
            *v = serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number);
        }
        Value::Array(a) => a.iter_mut().for_each(round_value),
        Value::Object(o) => o.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with rounded floats and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// A float cell for CSV output.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    serde_json::Number::from_f64(round_sig(x)).expect("finite").to_string()
}

pub fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round_sig(0.1234567890123456), 0.123456789012);
        assert_eq!(round_sig(-2.0 / 3.0), -0.666666666667);
        assert_eq!(round_sig(1e-300), 1e-300);
        assert_eq!(fmt_float(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_float(f64::NAN), "nan");
    }

    #[test]
    fn empty_report_is_a_valid_skeleton() {
        let r = SuiteReport::new("symbolic", serde_json::json!({}));
        let text = to_json(&r).unwrap();
        let back: SuiteReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert!(text.find("\"suite\"").unwrap() < text.find("\"params\"").unwrap());
    }

    #[test]
    fn report_round_trips() {
        let mut r = SuiteReport::new("x", serde_json::json!({"seed": 3, "ratio": 0.25}));
        r.constant("c", 1.0 / 7.0);
        r.push_check(
            "k",
            5,
            vec![Failure {
                check: "k".into(),
                input: "kl2 q=5 a=1".into(),
                expected: "e".into(),
                observed: "o".into(),
                replay: "ksumlab replay 'kl2 q=5 a=1'".into(),
            }],
        );
        let text = to_json(&r).unwrap();
        let back: SuiteReport = serde_json::from_str(&text).unwrap();
        assert_eq!(to_json(&back).unwrap(), text);
        assert_eq!(back.measured_constants["c"], round_sig(1.0 / 7.0));
        assert!(!back.pass());
    }
}
