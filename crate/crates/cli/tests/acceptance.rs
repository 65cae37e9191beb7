//! Acceptance criteria 1 to 10. Each test prints one PASS/FAIL line and then
//! asserts the same verdict. Every tolerance is pinned here or in
//! `ksumlab::tolerances`.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ksumlab::report::{to_json, SuiteReport};
use ksumlab::suites::{kloosterman2power as k2, moments, run_cases, run_suite, Suite, VerifyOptions};
use ksumlab::{scan_csv, tolerances as tol};
use ksumlab_core::bilinear::{family_moduli, scan, Family};

/// Criterion 1: all `a mod q` for `q` up to this bound.
const KL_MAX_Q: u64 = 3000;
/// Criterion 2: exponents `6..=KLO2_MAX_S`.
const KLO2_MAX_S: u32 = 12;
/// Criterion 3 ranges.
const SQRT_MAX_K: u32 = 16;
const SHIFT_MAX_K: u32 = 12;
const SHIFT_MAX_LAMBDA: u32 = 4;
/// Criterion 4: instances and modulus range.
const SPLIT_INSTANCES: u64 = 200;
const SPLIT_MAX_Q: u64 = 2000;
/// Criterion 6: prime range and samples per prime.
const THMK_MIN_P: u64 = 5;
const THMK_MAX_P: u64 = 61;
const THMK_SAMPLES: usize = 50;
/// Criterion 7: largest prime of the `ℜ` sweep.
const R1_MAX_P: u64 = 97;
/// Criterion 8: grid size and wall-clock budget.
const VORONOI_CASES: usize = 20;
const VORONOI_BUDGET: Duration = Duration::from_secs(60);
/// Criterion 9: modulus range, `D_δ` cases and length cap.
const MOMENTS_MAX_Q: u64 = 500;
const DDELTA_CASES: usize = 50;
const BPM_MAX_LENGTH: u64 = 64;
/// Criterion 10 seed.
const DET_SEED: u64 = 20_240_607;

fn opts(seed: u64) -> VerifyOptions {
    VerifyOptions { seed, ..Default::default() }
}

fn kloosterman() -> &'static SuiteReport {
    static R: OnceLock<SuiteReport> = OnceLock::new();
    R.get_or_init(|| {
        let o = VerifyOptions { max_q: Some(KL_MAX_Q), max_s: Some(KLO2_MAX_S), exact: true, ..opts(0) };
        run_suite(Suite::Kloosterman2Power, &o).unwrap()
    })
}

fn prodsums() -> &'static SuiteReport {
    static R: OnceLock<SuiteReport> = OnceLock::new();
    R.get_or_init(|| {
        let o = VerifyOptions {
            max_p: Some(R1_MAX_P),
            max_q: Some(SPLIT_MAX_Q),
            samples: Some(SPLIT_INSTANCES as usize),
            ..opts(0)
        };
        run_suite(Suite::Prodsums, &o).unwrap()
    })
}

fn variety() -> &'static SuiteReport {
    static R: OnceLock<SuiteReport> = OnceLock::new();
    R.get_or_init(|| {
        let o = VerifyOptions { max_p: Some(THMK_MAX_P), samples: Some(THMK_SAMPLES), ..opts(0) };
        run_suite(Suite::Variety, &o).unwrap()
    })
}

fn moments_report() -> &'static SuiteReport {
    static R: OnceLock<SuiteReport> = OnceLock::new();
    R.get_or_init(|| {
        let o = VerifyOptions { max_q: Some(MOMENTS_MAX_Q), samples: Some(DDELTA_CASES), ..opts(0) };
        run_suite(Suite::Moments, &o).unwrap()
    })
}

/// One sub-check: a label, its verdict and what was observed.
struct Part {
    label: String,
    pass: bool,
    detail: String,
}

fn part(label: &str, pass: bool, detail: impl Into<String>) -> Part {
    Part { label: label.into(), pass, detail: detail.into() }
}

/// A named check of `r`: it must exist, cover at least `min_cases` cases and pass.
fn check(r: &SuiteReport, name: &str, min_cases: u64) -> Part {
    match r.check(name) {
        Some(c) => part(
            name,
            c.pass && c.cases >= min_cases,
            format!("{} failures of {} cases (need >= {min_cases})", c.failures, c.cases),
        ),
        None => part(name, false, "check missing from report"),
    }
}

fn constant(r: &SuiteReport, name: &str) -> f64 {
    r.measured_constants.get(name).copied().unwrap_or(f64::NAN)
}

/// Prints the criterion line and its parts, then asserts.
fn verdict(n: u32, title: &str, parts: Vec<Part>) {
    let pass = parts.iter().all(|p| p.pass);
    // One write, so lines of concurrent tests do not interleave. Writing to the
    // handle directly bypasses the harness capture, so passing criteria show too.
    let mut out = format!("criterion {n:>2} {}: {title}\n", if pass { "PASS" } else { "FAIL" });
    for p in &parts {
        out.push_str(&format!("    [{}] {}: {}\n", if p.pass { "ok" } else { "FAIL" }, p.label, p.detail));
    }
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(out.as_bytes()).and_then(|()| stdout.flush()).expect("stdout");
    assert!(pass, "criterion {n} failed: {title}");
}

#[test]
fn criterion_01_kl2_fast_matches_direct() {
    let r = kloosterman();
    let err = constant(r, "kl2_max_error");
    verdict(
        1,
        "kl2_fast equals the direct sum for every a mod q, q <= 3000",
        vec![
            check(r, "kl2_fast_vs_direct", KL_MAX_Q * (KL_MAX_Q + 1) / 2),
            part("max error", err < tol::KL_ORACLE, format!("{err:e} < {:e}", tol::KL_ORACLE)),
        ],
    );
}

#[test]
fn criterion_02_klo2_closed_form() {
    let r = kloosterman();
    let odd_pairs: u64 = (6..=KLO2_MAX_S).map(|s| 1u64 << (2 * (s - 1))).sum();
    let odd_b: u64 = (6..=KLO2_MAX_S).map(|s| 1u64 << (s - 1)).sum();
    verdict(
        2,
        "S(a, b; 2^s) closed form for s in 6..=12, numeric and exact",
        vec![check(r, "klo2_numeric", odd_pairs), check(r, "klo2_exact", odd_b)],
    );
}

#[test]
fn criterion_03_two_adic_square_roots() {
    let r = kloosterman();
    let sqrt_cases: u64 = (3..=SQRT_MAX_K).map(|k| 1u64 << (k - 3)).sum();
    verdict(
        3,
        "2-adic square roots for k <= 16 and the shift lemma for k <= 12, lambda <= 4",
        vec![
            part("sweep ranges", k2::SQRT_MAX_K >= SQRT_MAX_K, format!("sqrt k <= {}", k2::SQRT_MAX_K)),
            part(
                "shift ranges",
                k2::SHIFT_MAX_K >= SHIFT_MAX_K && k2::SHIFT_MAX_LAMBDA >= SHIFT_MAX_LAMBDA,
                format!("k <= {} lambda <= {}", k2::SHIFT_MAX_K, k2::SHIFT_MAX_LAMBDA),
            ),
            check(r, "two_adic_sqrt", sqrt_cases),
            check(r, "sqrt_shift_congruence", 1),
        ],
    );
}

#[test]
fn criterion_04_multiplicativity() {
    let r = prodsums();
    let er = constant(r, "split_r_max_error");
    let es = constant(r, "split_s_max_error");
    verdict(
        4,
        "twisted multiplicativity on 200 instances with q1 q2 <= 2000",
        vec![
            check(r, "split_r", SPLIT_INSTANCES),
            check(r, "split_s", SPLIT_INSTANCES),
            part("R max error", er < tol::MULTIPLICATIVITY, format!("{er:e} < {:e}", tol::MULTIPLICATIVITY)),
            part("S max error", es < tol::MULTIPLICATIVITY, format!("{es:e} < {:e}", tol::MULTIPLICATIVITY)),
        ],
    );
}

#[test]
fn criterion_05_symbolic_identities() {
    let r = run_suite(Suite::Symbolic, &opts(0)).unwrap();
    verdict(
        5,
        "symbolic identities hold with residual 0",
        vec![check(&r, "identities_printed", 1), check(&r, "identities_corrected", 1)],
    );
}

#[test]
fn criterion_06_point_count_regimes() {
    let r = variety();
    let primes = ksumlab::suites::primes_in(THMK_MIN_P, THMK_MAX_P);
    let slope = constant(r, "generic_count_slope");
    let json = to_json(r).unwrap();
    verdict(
        6,
        "point-count regimes for p in 5..=61 with 50 samples per prime",
        vec![
            check(r, "oracle_vs_k1", primes.len() as u64 * THMK_SAMPLES as u64),
            part(
                "generic slope",
                slope <= tol::GENERIC_COUNT_SLOPE,
                format!("{slope:.6} <= {}", tol::GENERIC_COUNT_SLOPE),
            ),
            check(r, "h_zero_linear_bound", 1),
            part(
                "findings reported",
                json.contains("\"findings\""),
                format!("{} findings in the report", r.findings.len()),
            ),
        ],
    );
}

#[test]
fn criterion_07_bound_ratio_slopes() {
    let r = prodsums();
    let mut parts = Vec::new();
    for name in ["r1", "s11", "cs2"] {
        let s = constant(r, &format!("{name}_slope"));
        parts.push(part(
            &format!("{name} slope"),
            s <= tol::BOUND_SLOPE,
            format!("{s:.6} <= {} (max ratio {:.6})", tol::BOUND_SLOPE, constant(r, &format!("{name}_max_ratio"))),
        ));
        parts.push(check(r, &format!("{name}_ratio_slope"), 1));
    }
    parts.push(part(
        "r1 reaches p = 97",
        r.measured_constants.contains_key(&format!("r1_max_ratio_at_{R1_MAX_P}")),
        format!("level {R1_MAX_P} present"),
    ));
    verdict(7, "bound ratios are stable in the level", parts);
}

#[test]
fn criterion_08_voronoi_grid() {
    let cases = moments::voronoi_cases(0);
    let mut r = SuiteReport::new("voronoi", serde_json::Value::Null);
    let t = Instant::now();
    run_cases(&mut r, "voronoi", &cases).unwrap();
    let elapsed = t.elapsed();
    verdict(
        8,
        "Voronoi summation on the 20-case grid within 1e-4 in under a minute",
        vec![
            part("grid size", cases.len() == VORONOI_CASES, format!("{} cases", cases.len())),
            check(&r, "voronoi", VORONOI_CASES as u64),
            part("tolerance", tol::VORONOI <= 1e-4, format!("{:e}", tol::VORONOI)),
            part("runtime", elapsed < VORONOI_BUDGET, format!("{:.3}s < {}s", elapsed.as_secs_f64(), VORONOI_BUDGET.as_secs())),
        ],
    );
}

#[test]
fn criterion_09_moment_components() {
    let r = moments_report();
    let longest = moments::BPM_LENGTHS.iter().copied().max().unwrap_or(0);
    verdict(
        9,
        "phi*, Hecke relations, D_delta scaling and the B^± envelope",
        vec![
            check(r, "phi_star_vs_enumeration", MOMENTS_MAX_Q),
            check(r, "hecke_relations", 1),
            check(r, "d_delta_scaling", DDELTA_CASES as u64),
            part("B lengths", longest == BPM_MAX_LENGTH, format!("M, N <= {longest}")),
            check(r, "bpm_envelope", 1),
            part(
                "measured constants",
                true,
                format!(
                    "calibration {:.6}, validation {:.6}, slack {}",
                    constant(r, "bpm_constant_calibration"),
                    constant(r, "bpm_constant_validation"),
                    tol::BPM_SLACK
                ),
            ),
        ],
    );
}

#[test]
fn criterion_10_determinism() {
    let variety_json = |seed| to_json(&run_suite(Suite::Variety, &VerifyOptions { max_p: Some(31), ..opts(seed) }).unwrap()).unwrap();
    let scan_text = |seed| {
        let qs = family_moduli(Family::Prime, 100, 2000, 4);
        scan_csv(&[scan(Family::Prime, &qs, "M=N=q^0.5".parse().unwrap(), 4, seed).unwrap()])
    };
    let a = variety_json(DET_SEED);
    let b = variety_json(DET_SEED);
    let c = scan_text(DET_SEED);
    let d = scan_text(DET_SEED);
    let mut parts = vec![
        part("variety report", a == b, format!("{} bytes", a.len())),
        part("scan csv", c == d, format!("{} bytes", c.len())),
        part("seed matters", a != variety_json(DET_SEED + 1), "a different seed changes the report"),
    ];
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let single = pool.install(|| variety_json(DET_SEED));
        parts.push(part("one thread", single == a, "single-threaded report equals the pooled one"));
    }
    verdict(10, "same seed, byte-identical reports", parts);
}
