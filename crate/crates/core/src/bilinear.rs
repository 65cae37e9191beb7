//! Bilinear forms with Kloosterman kernels.
//!
//! * `B(α, β) = Σ_m Σ_n α_m β_n Kl₂(cmn; q)`
//! * `Σ_{M≤m≤2M} |Σ_k λ(k) Kl₂(ckm; q)|²` (Weyl differencing sum)
//! * `Σ^d(b, AM; q) = Σ_r Σ_{(l₁-l₂, q) = d} W(l₁/AM) W(l₂/AM) Π_i Π_j Kl₂(c l_i (r + b_j); q)`
//!
//! Envelopes return the bracketed saving factor of each bound; `value` is the
//! factor times `‖α‖₂‖β‖₂(MN)^{1/2}`. Implied constants and `q^ε` are taken
//! to be 1, so envelopes chart exponents, not rigorous inequalities.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::exec;
use crate::kloosterman::{ExpSum, KlTable};
use crate::modcore::{divisors, factorize, gcd, is_prime, mobius, mul_mod, reduce, Modulus};
use crate::rng;
use crate::stats::loglog_slope;
use crate::{Error, Result};

/// Coefficients supported on `start..start + len`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoeffSeq {
    start: u64,
    values: Vec<Complex64>,
    l2: f64,
}

impl CoeffSeq {
    pub fn new(start: u64, values: Vec<Complex64>) -> Self {
        let l2 = values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        CoeffSeq { start, values, l2 }
    }

    pub fn real(start: u64, values: &[f64]) -> Self {
        Self::new(start, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn zeros(start: u64, len: usize) -> Self {
        Self::new(start, vec![Complex64::new(0.0, 0.0); len])
    }

    /// The indicator of a single index.
    pub fn spike(at: u64) -> Self {
        Self::real(at, &[1.0])
    }

    /// Independent uniform phases `e(θ)`.
    pub fn unimodular<R: Rng>(start: u64, len: usize, rng: &mut R) -> Self {
        let v = (0..len)
            .map(|_| Complex64::from_polar(1.0, std::f64::consts::TAU * rng.gen::<f64>()))
            .collect();
        Self::new(start, v)
    }

    /// Independent uniform signs.
    pub fn rademacher<R: Rng>(start: u64, len: usize, rng: &mut R) -> Self {
        let v = (0..len)
            .map(|_| Complex64::new(if rng.gen::<bool>() { 1.0 } else { -1.0 }, 0.0))
            .collect();
        Self::new(start, v)
    }

    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Coefficient at index `i`; zero outside the support.
    pub fn get(&self, i: u64) -> Complex64 {
        i.checked_sub(self.start)
            .and_then(|k| self.values.get(k as usize).copied())
            .unwrap_or_default()
    }

    pub fn l1(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).sum()
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }
}

fn require_coprime(c: i64, q: u64) -> Result<u64> {
    let c = reduce(c as i128, q);
    if gcd(c, q) != 1 {
        return Err(Error::NotCoprime(c, q));
    }
    Ok(c)
}

/// `Σ_m Σ_n α_m β_n Kl₂(cmn; q)`.
pub fn bilinear_form(alpha: &CoeffSeq, beta: &CoeffSeq, c: i64, q: &Modulus) -> Result<ExpSum> {
    let table = KlTable::new(q)?;
    Ok(ExpSum::numeric(bilinear_form_with(&table, alpha, beta, c)?))
}

/// [`bilinear_form`] against a prebuilt table.
pub fn bilinear_form_with(table: &KlTable, alpha: &CoeffSeq, beta: &CoeffSeq, c: i64) -> Result<Complex64> {
    let q = table.q();
    let c = require_coprime(c, q)?;
    Ok(exec::sum_range(alpha.len(), |i| {
        let a = alpha.values[i];
        if a == Complex64::default() {
            return Complex64::default();
        }
        let cm = mul_mod(c, (alpha.start + i as u64) % q, q);
        let inner: Complex64 = beta
            .values
            .iter()
            .enumerate()
            .map(|(j, b)| b * table.get(mul_mod(cm, (beta.start + j as u64) % q, q)))
            .sum();
        a * inner
    }))
}

/// `Σ_{M≤m≤2M} |Σ_k λ(k) Kl₂(ckm; q)|²`.
pub fn weyl_sum(lambda: &CoeffSeq, m: u64, c: i64, q: &Modulus) -> Result<f64> {
    let table = KlTable::new(q)?;
    weyl_sum_over(&table, lambda, m, 2 * m, c)
}

/// The Weyl sum with `m` running over `lo..=hi`.
pub fn weyl_sum_over(table: &KlTable, lambda: &CoeffSeq, lo: u64, hi: u64, c: i64) -> Result<f64> {
    let q = table.q();
    let c = require_coprime(c, q)?;
    let count = if hi >= lo { (hi - lo + 1) as usize } else { 0 };
    Ok(exec::sum_range(count, |i| {
        let cm = mul_mod(c, (lo + i as u64) % q, q);
        lambda
            .values
            .iter()
            .enumerate()
            .map(|(j, l)| l * table.get(mul_mod(cm, (lambda.start + j as u64) % q, q)))
            .sum::<Complex64>()
            .norm_sqr()
    }))
}

/// Smooth weight supported in `[1/2, 5]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    /// Equal to 1 on `[1, 4]`, glued to 0 by `C^∞` smoothsteps.
    Plateau,
    /// `exp(-1/((x-1/2)(5-x)))` scaled to peak at 1.
    Bump,
}

fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

impl Weight {
    pub fn eval(self, x: f64) -> f64 {
        if x <= 0.5 || x >= 5.0 {
            return 0.0;
        }
        match self {
            Weight::Plateau => {
                if x < 1.0 {
                    smoothstep(2.0 * (x - 0.5))
                } else if x <= 4.0 {
                    1.0
                } else {
                    smoothstep(5.0 - x)
                }
            }
            // Peak of (x-1/2)(5-x) is 2.25² at x = 2.75.
            Weight::Bump => (-1.0 / ((x - 0.5) * (5.0 - x)) + 1.0 / (2.25 * 2.25)).exp(),
        }
    }
}

/// `(l, W(l/AM))` for every `l ≥ 1` with nonzero weight.
fn weighted_ls(weight: Weight, am: f64) -> Vec<(u64, f64)> {
    let hi = (5.0 * am).ceil() as u64;
    (1..=hi)
        .map(|l| (l, weight.eval(l as f64 / am)))
        .filter(|&(_, w)| w != 0.0)
        .collect()
}

fn sigma_pre(q: u64, d: u64, am: f64) -> Result<()> {
    if d == 0 || !q.is_multiple_of(d) {
        return Err(Error::NotDivisor { d, q });
    }
    if !(am > 0.0 && am.is_finite()) {
        return Err(Error::Precondition(format!("AM = {am} must be positive")));
    }
    Ok(())
}

/// `Σ^d(b, AM; q)` with the plateau weight.
pub fn sigma_d(b: [i64; 4], am: f64, d: u64, c: i64, q: &Modulus) -> Result<ExpSum> {
    let table = KlTable::new(q)?;
    let v = sigma_d_with(&table, Weight::Plateau, b, am, d, c)?;
    Ok(ExpSum::numeric(Complex64::new(v, 0.0)))
}

/// `Σ^d` with the gcd condition written as `Σ_{d | e | q} μ(e/d) [e | l₁ - l₂]`,
/// so each `r` costs `O(L τ(q))` for `L` weighted `l`.
pub fn sigma_d_with(table: &KlTable, weight: Weight, b: [i64; 4], am: f64, d: u64, c: i64) -> Result<f64> {
    let q = table.q();
    sigma_pre(q, d, am)?;
    let c = require_coprime(c, q)?;
    let ls = weighted_ls(weight, am);
    if ls.is_empty() {
        return Ok(0.0);
    }
    let mut es = Vec::new();
    for e in divisors(q)? {
        if e % d == 0 {
            let mu = mobius(e / d)?;
            if mu != 0 {
                es.push((e, mu as f64));
            }
        }
    }
    let row = table.row();
    let cl: Vec<u64> = ls.iter().map(|&(l, _)| mul_mod(c, l % q, q)).collect();
    let span = ls.last().map(|x| x.0).unwrap_or(0) - ls[0].0;
    Ok(exec::sum_range(q as usize, |r| {
        let shifted: Vec<u64> = b.iter().map(|&bj| reduce(r as i128 + bj as i128, q)).collect();
        let p: Vec<f64> = ls
            .iter()
            .zip(&cl)
            .map(|(&(_, w), &x)| w * shifted.iter().map(|&s| row[mul_mod(x, s, q) as usize]).product::<f64>())
            .collect();
        let diag: f64 = p.iter().map(|v| v * v).sum();
        let mut acc = 0.0;
        for &(e, mu) in &es {
            if e > span {
                acc += mu * diag;
                continue;
            }
            let mut buckets = vec![0.0; e as usize];
            for (&(l, _), v) in ls.iter().zip(&p) {
                buckets[(l % e) as usize] += v;
            }
            acc += mu * buckets.iter().map(|v| v * v).sum::<f64>();
        }
        acc
    }))
}

/// Literal triple loop over `r, l₁, l₂`.
pub fn sigma_d_direct(table: &KlTable, weight: Weight, b: [i64; 4], am: f64, d: u64, c: i64) -> Result<f64> {
    let q = table.q();
    sigma_pre(q, d, am)?;
    let c = reduce(c as i128, q);
    let ls = weighted_ls(weight, am);
    let mut total = 0.0;
    for r in 0..q as i128 {
        for &(l1, w1) in &ls {
            for &(l2, w2) in &ls {
                if gcd(l1.abs_diff(l2), q) != d {
                    continue;
                }
                let mut prod = w1 * w2;
                for l in [l1, l2] {
                    for &bj in &b {
                        prod *= table.get_signed(c as i128 * l as i128 * (r + bj as i128));
                    }
                }
                total += prod;
            }
        }
    }
    Ok(total)
}

/// `A²M²q`.
pub fn sigma_trivial_envelope(am: f64, q: u64) -> f64 {
    am * am * q as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Theorem {
    #[serde(rename = "main")]
    Main,
    BKs,
    BK,
    SumMK,
    PV,
    #[serde(rename = "trivial")]
    Trivial,
}

impl Theorem {
    pub const ALL: [Theorem; 6] = [Theorem::Main, Theorem::BKs, Theorem::BK, Theorem::SumMK, Theorem::PV, Theorem::Trivial];

    pub fn tag(self) -> &'static str {
        match self {
            Theorem::Main => "main",
            Theorem::BKs => "BKs",
            Theorem::BK => "BK",
            Theorem::SumMK => "SumMK",
            Theorem::PV => "PV",
            Theorem::Trivial => "trivial",
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Theorem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Theorem::ALL
            .into_iter()
            .find(|t| t.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Unknown { kind: "theorem", name: s.to_string() })
    }
}

/// Inputs of an envelope; unused fields are ignored by the theorem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeParams {
    pub q: u64,
    pub m: f64,
    pub n: f64,
    /// Divisor `s | q` for BKs and SumMK; the best divisor is chosen when absent.
    pub s: Option<u64>,
    /// `ρ` for BK; the `q^{1/3}`-smooth part of `q` when absent.
    pub rho: Option<u64>,
    /// Smallest prime of `q/ρ` for BK; computed when absent.
    pub p_min: Option<u64>,
    /// `K` for SumMK.
    pub k: Option<f64>,
    pub alpha_l2: f64,
    pub beta_l2: f64,
}

impl EnvelopeParams {
    pub fn new(q: u64, m: f64, n: f64) -> Self {
        EnvelopeParams { q, m, n, s: None, rho: None, p_min: None, k: None, alpha_l2: 1.0, beta_l2: 1.0 }
    }
}

/// Which half of the case split for the main bound applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProofCase {
    I,
    II,
}

impl fmt::Display for ProofCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProofCase::I => "I",
            ProofCase::II => "II",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Envelope {
    pub theorem: Theorem,
    pub params: EnvelopeParams,
    /// Individual terms of the bracket.
    pub terms: Vec<f64>,
    /// Sum of `terms`.
    pub saving: f64,
    /// Largest term; below 1 exactly when every term is a power saving.
    pub max_term: f64,
    /// `saving · ‖α‖₂‖β‖₂(MN)^{1/2}`, or `‖λ‖₂² · saving` for SumMK.
    pub value: f64,
    /// Violated hypotheses; the value is still computed.
    pub flags: Vec<String>,
    pub rho: Option<u64>,
    pub rho0: Option<f64>,
    pub case: Option<ProofCase>,
    pub chosen_s: Option<u64>,
    pub p_min: Option<u64>,
    /// `A = M^{-1/2}N^{1/2}q^{1/8}ρ^{3/8}`, `B = M^{1/2}N^{1/2}q^{-1/8}ρ^{-3/8}` for BK.
    pub ab: Option<(f64, f64)>,
    /// Bound from the selected case of the main proof.
    pub case_bound: Option<f64>,
    /// Bound from the other case, when its hypotheses can be met.
    pub alt_bound: Option<f64>,
}

/// `ρ = Π_{p³ ≤ q, p^k ∥ q} p^k`.
pub fn small_part(q: u64) -> Result<u64> {
    Ok(factorize(q)?
        .into_iter()
        .filter(|&(p, _)| p.saturating_mul(p).saturating_mul(p) <= q)
        .map(|(p, k)| p.pow(k))
        .product())
}

/// `ρ₀ = M^{12/25} N^{-4/5} q^{1/5}`.
pub fn rho0(q: u64, m: f64, n: f64) -> f64 {
    m.powf(12.0 / 25.0) * n.powf(-0.8) * (q as f64).powf(0.2)
}

/// A divisor `s | ρ` with `ρ₀ ≤ s ≤ max{q^{1/3}, ρ₀²}`: the least prime of `ρ`
/// in `[ρ₀, q^{1/3}]` if one exists, else the least admissible divisor.
pub fn choose_s(rho: u64, rho0: f64, q: u64) -> Result<Option<u64>> {
    let cube = (q as f64).cbrt();
    let hi = cube.max(rho0 * rho0);
    let primes = factorize(rho)?;
    if let Some(&(p, _)) = primes.iter().find(|&&(p, _)| p as f64 >= rho0 && p as f64 <= cube) {
        return Ok(Some(p));
    }
    Ok(divisors(rho)?.into_iter().find(|&s| s as f64 >= rho0 && s as f64 <= hi))
}

pub fn main_terms(q: u64, m: f64, n: f64) -> [f64; 3] {
    let q = q as f64;
    [
        m.powf(-0.5) * q.powf(1.0 / 6.0),
        m.powf(-3.0 / 25.0) * n.powf(-0.3) * q.powf(0.2),
        (m * n).powf(-3.0 / 16.0) * q.powf(11.0 / 64.0),
    ]
}

pub fn pv_terms(q: u64, m: f64, n: f64) -> [f64; 3] {
    let q = q as f64;
    [q.powf(-0.25), m.powf(-0.5), n.powf(-0.5) * q.powf(0.25) * q.ln()]
}

pub fn bks_terms(q: u64, m: f64, n: f64, s: u64) -> [f64; 3] {
    let (q, s) = (q as f64, s as f64);
    [m.powf(-0.5) * s.sqrt(), q.powf(-0.25) * s.powf(0.25), n.powf(-0.5) * q.powf(0.25) * s.powf(-0.25)]
}

pub fn bk_terms(q: u64, m: f64, n: f64, rho: u64, p_min: f64) -> [f64; 3] {
    let (q, rho) = (q as f64, rho as f64);
    [m.powf(-0.5), p_min.powf(-0.5), (m * n).powf(-3.0 / 16.0) * q.powf(11.0 / 64.0) * rho.powf(9.0 / 64.0)]
}

pub fn summk_terms(q: u64, m: f64, k: f64, s: u64) -> [f64; 3] {
    let (q, s) = (q as f64, s as f64);
    [m * s, k * m * s.sqrt() / q.sqrt(), k * q.sqrt() / s.sqrt()]
}

fn sum(terms: &[f64]) -> f64 {
    terms.iter().sum()
}

fn best_divisor(q: u64, f: impl Fn(u64) -> f64) -> Result<u64> {
    let mut best = (f64::INFINITY, 1);
    for s in divisors(q)? {
        let v = f(s);
        if v < best.0 {
            best = (v, s);
        }
    }
    Ok(best.1)
}

/// Case I bound: `M^{-1/2} + q^{-1/6} + (MN)^{-3/16} q^{11/64} ρ^{9/64}`.
fn case_i_bound(q: u64, m: f64, n: f64, rho: u64) -> f64 {
    sum(&bk_terms(q, m, n, rho, (q as f64).cbrt()))
}

/// Evaluates a bound envelope; hypothesis violations are flagged, never fatal.
pub fn envelope(theorem: Theorem, params: &EnvelopeParams) -> Envelope {
    let p = params;
    let (q, m, n) = (p.q, p.m, p.n);
    let qf = q as f64;
    let mut flags = Vec::new();
    let mut flag = |ok: bool, what: &str| {
        if !ok {
            flags.push(format!("violated: {what}"));
        }
    };
    flag(q >= 1, "q >= 1");
    flag(m >= 1.0 && n >= 1.0, "M, N >= 1");
    let mut env = Envelope {
        theorem,
        params: p.clone(),
        terms: Vec::new(),
        saving: 0.0,
        max_term: 0.0,
        value: 0.0,
        flags: Vec::new(),
        rho: None,
        rho0: None,
        case: None,
        chosen_s: None,
        p_min: None,
        ab: None,
        case_bound: None,
        alt_bound: None,
    };
    let divisor_ok = |s: u64| s >= 1 && q % s == 0;
    match theorem {
        Theorem::Trivial => env.terms = vec![1.0],
        Theorem::PV => env.terms = pv_terms(q, m, n).to_vec(),
        Theorem::Main => {
            flag(m <= n * qf.powf(0.25), "1 <= M <= N q^{1/4}");
            flag(m.powf(1.4) * n < qf.powf(1.5), "M^{7/5} N < q^{3/2}");
            flag(m * n <= qf.powf(1.25), "MN <= q^{5/4}");
            env.terms = main_terms(q, m, n).to_vec();
            if let Ok(rho) = small_part(q) {
                let r0 = rho0(q, m, n);
                env.rho = Some(rho);
                env.rho0 = Some(r0);
                let s = choose_s(rho, r0, q).ok().flatten();
                let b1 = case_i_bound(q, m, n, rho);
                let b2 = s.map(|s| sum(&bks_terms(q, m, n, s)));
                if rho as f64 <= r0.max(1.0) {
                    env.case = Some(ProofCase::I);
                    env.case_bound = Some(b1);
                    env.alt_bound = b2;
                } else {
                    env.case = Some(ProofCase::II);
                    env.chosen_s = s;
                    env.case_bound = b2;
                    env.alt_bound = Some(b1);
                    flag(s.is_some(), "a divisor s | rho with rho0 <= s <= max{q^{1/3}, rho0^2} exists");
                }
            }
        }
        Theorem::BKs => {
            let s = p.s.unwrap_or_else(|| best_divisor(q, |s| sum(&bks_terms(q, m, n, s))).unwrap_or(1));
            flag(divisor_ok(s), "s | q");
            env.chosen_s = Some(s);
            env.terms = bks_terms(q, m, n, s).to_vec();
        }
        Theorem::SumMK => {
            let k = p.k.unwrap_or(n);
            let s = p.s.unwrap_or_else(|| best_divisor(q, |s| sum(&summk_terms(q, m, k, s))).unwrap_or(1));
            flag(divisor_ok(s), "s | q");
            flag(k >= 1.0, "K >= 1");
            env.chosen_s = Some(s);
            env.terms = summk_terms(q, m, k, s).to_vec();
        }
        Theorem::BK => {
            let rho = p.rho.or_else(|| small_part(q).ok()).unwrap_or(1);
            flag(divisor_ok(rho), "rho | q");
            let qstar = if divisor_ok(rho) { q / rho } else { 1 };
            let primes = factorize(qstar).unwrap_or_default();
            let omega: u32 = primes.iter().map(|&(_, k)| k).sum();
            let pmin = p.p_min.or_else(|| primes.first().map(|&(p, _)| p));
            flag(qstar > 1, "q* > 1 (p_min undefined for q* = 1)");
            flag((1..=2).contains(&omega), "q* is a prime or a product of two primes");
            if let Some(pm) = pmin {
                flag(pm as f64 >= (qstar as f64).cbrt(), "p_min >= (q/rho)^{1/3}");
            }
            flag(m <= n * qf.powf(0.25), "1 <= M <= N q^{1/4}");
            flag(m * n <= qf.powf(1.25) * (rho as f64).powf(-0.25), "MN <= q^{5/4} rho^{-1/4}");
            let rf = rho as f64;
            let a = m.powf(-0.5) * n.sqrt() * qf.powf(0.125) * rf.powf(0.375);
            let b = m.sqrt() * n.sqrt() * qf.powf(-0.125) * rf.powf(-0.375);
            env.ab = Some((a, b));
            env.rho = Some(rho);
            env.p_min = pmin;
            env.terms = bk_terms(q, m, n, rho, pmin.unwrap_or(1) as f64).to_vec();
        }
    }
    env.saving = sum(&env.terms);
    env.max_term = env.terms.iter().cloned().fold(0.0, f64::max);
    env.value = match theorem {
        Theorem::SumMK => p.alpha_l2 * p.alpha_l2 * env.saving,
        _ => env.saving * p.alpha_l2 * p.beta_l2 * (m * n).sqrt(),
    };
    env.flags = flags;
    env
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Prime,
    SemiprimeBalanced,
    PrimeSquare,
    Smooth,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Prime, Family::SemiprimeBalanced, Family::PrimeSquare, Family::Smooth];

    pub fn tag(self) -> &'static str {
        match self {
            Family::Prime => "prime",
            Family::SemiprimeBalanced => "semiprime_balanced",
            Family::PrimeSquare => "prime_square",
            Family::Smooth => "smooth",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.tag() == s)
            .ok_or_else(|| Error::Unknown { kind: "family", name: s.to_string() })
    }
}

fn next_prime(mut n: u64) -> u64 {
    while !is_prime(n) {
        n += 1;
    }
    n
}

fn prev_prime(mut n: u64) -> Option<u64> {
    while n >= 2 {
        if is_prime(n) {
            return Some(n);
        }
        n -= 1;
    }
    None
}

/// Up to `count` moduli of the family in `[q_min, q_max]`, near log-spaced targets.
pub fn family_moduli(family: Family, q_min: u64, q_max: u64, count: usize) -> Vec<u64> {
    if q_max < q_min.max(2) || count == 0 {
        return Vec::new();
    }
    let lo = q_min.max(2) as f64;
    let hi = q_max as f64;
    let targets: Vec<f64> = (0..count)
        .map(|i| if count == 1 { lo } else { lo * (hi / lo).powf(i as f64 / (count - 1) as f64) })
        .collect();
    let smooth: Vec<u64> = if family == Family::Smooth {
        let mut v = Vec::new();
        let mut a = 1u64;
        while a <= q_max {
            let mut x = a;
            while x <= q_max {
                if x >= q_min {
                    v.push(x);
                }
                x *= 3;
            }
            a *= 2;
        }
        v.sort_unstable();
        v
    } else {
        Vec::new()
    };
    let mut out: Vec<u64> = targets
        .iter()
        .filter_map(|&t| {
            let q = match family {
                Family::Prime => next_prime(t.round() as u64),
                Family::PrimeSquare => {
                    let p = next_prime(t.sqrt().ceil() as u64);
                    p * p
                }
                Family::SemiprimeBalanced => {
                    let p = prev_prime(t.sqrt().floor() as u64)?;
                    let p2 = next_prime(p + 1);
                    let q = p * p2;
                    if q < q_min {
                        next_prime(p2 + 1) * p2
                    } else {
                        q
                    }
                }
                Family::Smooth => *smooth.iter().min_by(|a, b| {
                    ((**a as f64).ln() - t.ln()).abs().total_cmp(&((**b as f64).ln() - t.ln()).abs())
                })?,
            };
            (q >= q_min && q <= q_max).then_some(q)
        })
        .collect();
    out.dedup();
    out
}

/// `(M, N) = (q^{m_exp}, q^{n_exp})`, floored and at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Shape {
    pub m_exp: f64,
    pub n_exp: f64,
}

impl Shape {
    pub fn sizes(&self, q: u64) -> (u64, u64) {
        let f = |e: f64| ((q as f64).powf(e).floor() as u64).max(1);
        (f(self.m_exp), f(self.n_exp))
    }
}

impl FromStr for Shape {
    type Err = Error;
    /// Accepts `M=N=q^a` or `M=q^a,N=q^b`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("shape '{s}'"));
        let exp = |t: &str| -> Result<f64> { t.trim().strip_prefix("q^").ok_or_else(bad)?.parse().map_err(|_| bad()) };
        let t = s.replace(' ', "");
        if let Some(rest) = t.strip_prefix("M=N=") {
            let e = exp(rest)?;
            return Ok(Shape { m_exp: e, n_exp: e });
        }
        let (mp, np) = t.split_once(',').ok_or_else(bad)?;
        Ok(Shape {
            m_exp: exp(mp.strip_prefix("M=").ok_or_else(bad)?)?,
            n_exp: exp(np.strip_prefix("N=").ok_or_else(bad)?)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    Unimodular,
    Rademacher,
}

/// One modulus of a scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub q: u64,
    pub family: Family,
    pub m: u64,
    pub n: u64,
    /// Largest `|B| / (‖α‖‖β‖(MN)^{1/2})` over both ensembles.
    pub trial_max_ratio: f64,
    pub max_unimodular: f64,
    pub max_rademacher: f64,
    pub envelope_main: f64,
    pub envelope_pv: f64,
    /// BKs saving with the best `s | q`.
    pub envelope_bks: f64,
    pub bks_s: u64,
    pub case: Option<ProofCase>,
    pub chosen_s: Option<u64>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub family: Family,
    pub shape: Shape,
    pub trials: usize,
    pub seed: u64,
    pub rows: Vec<ScanRow>,
    /// Log-log slope of the trial maximum against `q`.
    pub measured_exponent: Option<f64>,
    pub exponent_main: Option<f64>,
    pub exponent_pv: Option<f64>,
    pub exponent_bks: Option<f64>,
    /// Measured exponents exceeding an envelope exponent by more than the tolerance.
    pub findings: Vec<String>,
}

/// Allowed excess of a measured exponent over an envelope exponent.
pub const SCAN_SLACK: f64 = 0.05;

/// Coefficients are supported on `[M, 2M)` and `[N, 2N)`, `c = 1`.
pub fn scan(family: Family, q_list: &[u64], shape: Shape, trials: usize, seed: u64) -> Result<ScanReport> {
    let mut rows = Vec::with_capacity(q_list.len());
    for &q in q_list {
        let modulus = Modulus::new(q)?;
        let table = KlTable::new(&modulus)?;
        let (m, n) = shape.sizes(q);
        let label = format!("scan/{family}/{q}");
        let ratios = exec::map_range(2 * trials, |i| -> Result<f64> {
            let ens = if i < trials { Ensemble::Unimodular } else { Ensemble::Rademacher };
            let mut r = rng::stream(seed, &label, i as u64);
            let (alpha, beta) = match ens {
                Ensemble::Unimodular => {
                    (CoeffSeq::unimodular(m, m as usize, &mut r), CoeffSeq::unimodular(n, n as usize, &mut r))
                }
                Ensemble::Rademacher => {
                    (CoeffSeq::rademacher(m, m as usize, &mut r), CoeffSeq::rademacher(n, n as usize, &mut r))
                }
            };
            let v = bilinear_form_with(&table, &alpha, &beta, 1)?;
            Ok(v.norm() / (alpha.l2() * beta.l2() * ((m * n) as f64).sqrt()))
        });
        let ratios: Vec<f64> = ratios.into_iter().collect::<Result<_>>()?;
        let max_of = |s: &[f64]| s.iter().cloned().fold(0.0, f64::max);
        let (mf, nf) = (m as f64, n as f64);
        let params = EnvelopeParams::new(q, mf, nf);
        let main = envelope(Theorem::Main, &params);
        let bks = envelope(Theorem::BKs, &params);
        let max_unimodular = max_of(&ratios[..trials]);
        let max_rademacher = max_of(&ratios[trials..]);
        rows.push(ScanRow {
            q,
            family,
            m,
            n,
            trial_max_ratio: max_unimodular.max(max_rademacher),
            max_unimodular,
            max_rademacher,
            envelope_main: main.saving,
            envelope_pv: envelope(Theorem::PV, &params).saving,
            envelope_bks: bks.saving,
            bks_s: bks.chosen_s.unwrap_or(1),
            case: main.case,
            chosen_s: main.chosen_s,
            flags: main.flags,
        });
    }
    let slope = |f: &dyn Fn(&ScanRow) -> f64| {
        loglog_slope(&rows.iter().map(|r| (r.q as f64, f(r))).collect::<Vec<_>>())
    };
    let measured = slope(&|r| r.trial_max_ratio);
    let exponent_main = slope(&|r| r.envelope_main);
    let exponent_pv = slope(&|r| r.envelope_pv);
    let exponent_bks = slope(&|r| r.envelope_bks);
    let mut findings = Vec::new();
    if let Some(mx) = measured {
        for (name, e) in [("main", exponent_main), ("PV", exponent_pv), ("BKs", exponent_bks)] {
            if let Some(e) = e {
                if mx > e + SCAN_SLACK {
                    findings.push(format!("measured exponent {mx:.4} exceeds {name} exponent {e:.4} by more than {SCAN_SLACK}"));
                }
            }
        }
    }
    Ok(ScanReport {
        family,
        shape,
        trials,
        seed,
        rows,
        measured_exponent: measured,
        exponent_main,
        exponent_pv,
        exponent_bks,
        findings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kloosterman::kl2_direct;
    use proptest::prelude::*;
    use rand::Rng;

    fn table(q: u64) -> KlTable {
        KlTable::new(&Modulus::new(q).unwrap()).unwrap()
    }

    fn max_kl(t: &KlTable) -> f64 {
        t.row().iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    #[test]
    fn spike_gives_single_kloosterman_sum() {
        let q = Modulus::new(5).unwrap();
        let v = bilinear_form(&CoeffSeq::spike(1), &CoeffSeq::spike(1), 1, &q).unwrap().value;
        let want = kl2_direct(1, 5).unwrap().value;
        assert!((v - want).norm() < 1e-12);
        assert!((v.re - 0.17082).abs() < 1e-5);
    }

    #[test]
    fn zero_coefficients_give_zero() {
        let q = Modulus::new(101).unwrap();
        let a = CoeffSeq::real(1, &[1.0, -2.0, 3.0]);
        assert_eq!(bilinear_form(&a, &CoeffSeq::zeros(1, 5), 3, &q).unwrap().value.norm(), 0.0);
        assert_eq!(weyl_sum(&CoeffSeq::zeros(4, 5), 4, 1, &q).unwrap(), 0.0);
    }

    #[test]
    fn non_coprime_c_rejected() {
        let q = Modulus::new(15).unwrap();
        let a = CoeffSeq::spike(1);
        assert!(matches!(bilinear_form(&a, &a, 5, &q), Err(Error::NotCoprime(5, 15))));
        assert!(sigma_d([0, 1, 2, 3], 2.0, 1, 3, &q).is_err());
    }

    #[test]
    fn rademacher_form_within_trivial_bound() {
        let q = 1009;
        let t = table(q);
        let m = (q as f64).sqrt() as u64;
        let mut r = rng::stream(1, "test-rademacher", 0);
        let a = CoeffSeq::rademacher(1, m as usize, &mut r);
        let b = CoeffSeq::rademacher(1, m as usize, &mut r);
        let v = bilinear_form_with(&t, &a, &b, 1).unwrap().norm();
        assert!(v <= a.l2() * b.l2() * (m as f64) * max_kl(&t));
    }

    #[test]
    fn weyl_spike_matches_direct_sum() {
        let (q, k, m, c) = (91u64, 3u64, 7u64, 2i64);
        let got = weyl_sum(&CoeffSeq::spike(k), m, c, &Modulus::new(q).unwrap()).unwrap();
        let want: f64 = (m..=2 * m)
            .map(|mm| kl2_direct((c as u64 * k * mm) as i128, q).unwrap().value.norm_sqr())
            .sum();
        assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn weyl_sum_constants_against_summk() {
        let q = 105;
        let t = table(q);
        let (m, k) = (12u64, 10u64);
        let mut r = rng::stream(3, "test-summk", 0);
        let lambda = CoeffSeq::unimodular(k, (k + 1) as usize, &mut r);
        let v = weyl_sum_over(&t, &lambda, m, 2 * m, 1).unwrap();
        for s in [3, 5, 7, 15] {
            let mut p = EnvelopeParams::new(q, m as f64, 1.0);
            p.k = Some(k as f64);
            p.s = Some(s);
            p.alpha_l2 = lambda.l2();
            let env = envelope(Theorem::SumMK, &p);
            assert!(env.flags.is_empty());
            let c = v / env.value;
            assert!(c.is_finite() && c > 0.0, "s = {s}: C = {c}");
        }
    }

    #[test]
    fn plateau_weight_shape() {
        let w = Weight::Plateau;
        for x in [1.0, 2.0, 3.3, 4.0] {
            assert_eq!(w.eval(x), 1.0);
        }
        for x in [0.0, 0.5, 5.0, 7.0] {
            assert_eq!(w.eval(x), 0.0);
        }
        let xs: Vec<f64> = (0..=50).map(|i| 0.5 + i as f64 / 100.0).collect();
        assert!(xs.windows(2).all(|p| w.eval(p[0]) <= w.eval(p[1])));
        assert!((Weight::Bump.eval(2.75) - 1.0).abs() < 1e-15);
        assert!(Weight::Bump.eval(1.0) < 1.0);
    }

    #[test]
    fn sigma_at_q_one_is_weight_count() {
        let am = 3.7;
        let got = sigma_d([0, 1, 2, 3], am, 1, 1, &Modulus::new(1).unwrap()).unwrap().value.re;
        let s: f64 = weighted_ls(Weight::Plateau, am).iter().map(|x| x.1).sum();
        assert!((got - s * s).abs() < 1e-9 * s * s);
    }

    #[test]
    fn sigma_matches_triple_loop() {
        let t = table(15);
        for d in [1, 3, 5, 15] {
            for w in [Weight::Plateau, Weight::Bump] {
                let fast = sigma_d_with(&t, w, [0, 1, 2, 3], 10.0, d, 1).unwrap();
                let slow = sigma_d_direct(&t, w, [0, 1, 2, 3], 10.0, d, 1).unwrap();
                assert!((fast - slow).abs() < 1e-8 * slow.abs().max(1.0), "d={d}: {fast} vs {slow}");
            }
        }
        let t = table(28);
        let fast = sigma_d_with(&t, Weight::Plateau, [0, 3, 5, 11], 2.5, 2, 3).unwrap();
        let slow = sigma_d_direct(&t, Weight::Plateau, [0, 3, 5, 11], 2.5, 2, 3).unwrap();
        assert!((fast - slow).abs() < 1e-8 * slow.abs().max(1.0));
    }

    #[test]
    fn sigma_within_trivial_envelope() {
        for q in [7u64, 15, 16, 21] {
            let t = table(q);
            let am = 4.0;
            let v = sigma_d_with(&t, Weight::Plateau, [0, 1, 3, 4], am, 1, 1).unwrap();
            let wsum: f64 = weighted_ls(Weight::Plateau, am).iter().map(|x| x.1).sum();
            assert!(v.abs() <= q as f64 * wsum * wsum * max_kl(&t).powi(8) + 1e-9);
            assert!((v.abs() / sigma_trivial_envelope(am, q)).is_finite());
        }
    }

    #[test]
    fn sigma_rejects_non_divisor() {
        let q = Modulus::new(15).unwrap();
        assert!(matches!(sigma_d([0, 1, 2, 3], 3.0, 4, 1, &q), Err(Error::NotDivisor { d: 4, q: 15 })));
    }

    #[test]
    fn pv_envelope_literal() {
        let (q, m) = (1_000_000u64, 1000.0);
        let env = envelope(Theorem::PV, &EnvelopeParams::new(q, m, m));
        let qf = q as f64;
        let want = qf.powf(-0.25) + m.powf(-0.5) + m.powf(-0.5) * qf.powf(0.25) * qf.ln();
        assert!((env.saving - want).abs() < 1e-12 * want);
        assert!((env.value - want * m).abs() < 1e-9 * want * m);
    }

    #[test]
    fn main_nontrivial_beyond_ten_twentyfirsts() {
        let q = 1_000_000u64;
        let qf = q as f64;
        let at = |x: f64| {
            let m = qf.powf(x);
            envelope(Theorem::Main, &EnvelopeParams::new(q, m, m)).max_term
        };
        assert!(at(10.0 / 21.0 + 0.01) < 1.0);
        assert!(at(10.0 / 21.0 - 0.01) > 1.0);
        assert!(at(0.5) < 1.0);
        // At M = N = q^{1/2} the dominant saving is q^{-1/100}.
        assert!((at(0.5).ln() / qf.ln() + 0.01).abs() < 1e-9);
        for i in 0..=40 {
            let x = 0.40 + i as f64 * 0.005;
            if (x - 10.0 / 21.0).abs() > 1e-6 {
                assert_eq!(at(x) < 1.0, x > 10.0 / 21.0, "x = {x}");
            }
        }
    }

    #[test]
    fn bk_flags_trivial_rough_part() {
        let q = 1024u64;
        let mut p = EnvelopeParams::new(q, 30.0, 30.0);
        p.rho = Some(q);
        let env = envelope(Theorem::BK, &p);
        assert!(env.flags.iter().any(|f| f.contains("p_min undefined")));
        assert!(env.value > 0.0);
        let env = envelope(Theorem::BK, &EnvelopeParams::new(1009 * 1013, 500.0, 500.0));
        assert!(env.flags.is_empty(), "{:?}", env.flags);
        assert_eq!(env.p_min, Some(1009));
    }

    #[test]
    fn small_part_and_s_choice() {
        assert_eq!(small_part(2 * 2 * 3 * 1009).unwrap(), 12);
        assert_eq!(small_part(1009).unwrap(), 1);
        assert_eq!(choose_s(12, 2.5, 12 * 1009).unwrap(), Some(3));
        assert_eq!(choose_s(64, 5.0, 64 * 1009).unwrap(), Some(8));
    }

    #[test]
    fn case_selection_consistent() {
        let mut r = rng::stream(11, "test-cases", 0);
        let mut checked = 0;
        let mut minimal = 0;
        while checked < 100 {
            let q: u64 = r.gen_range(1_000..50_000_000);
            let qf = q as f64;
            let m = qf.powf(r.gen_range(0.2..0.8));
            let n = qf.powf(r.gen_range(0.2..0.8));
            let env = envelope(Theorem::Main, &EnvelopeParams::new(q, m, n));
            if !env.flags.is_empty() || m < 1.0 {
                continue;
            }
            checked += 1;
            let (rho, r0) = (env.rho.unwrap(), env.rho0.unwrap());
            let bound = env.case_bound.unwrap();
            match env.case.unwrap() {
                ProofCase::I => assert!(rho as f64 <= r0.max(1.0)),
                ProofCase::II => {
                    let s = env.chosen_s.unwrap();
                    assert!(rho % s == 0 && s as f64 >= r0 && s as f64 <= qf.cbrt().max(r0 * r0));
                }
            }
            // The selected bound is dominated by the combined main saving unless that is trivial.
            assert!(bound <= 4.0 * env.saving || env.saving >= 1.0, "q={q} M={m} N={n}: {bound} vs {}", env.saving);
            if env.alt_bound.is_none_or(|a| bound <= a * (1.0 + 1e-12)) {
                minimal += 1;
            }
        }
        assert!(minimal > 0);
    }

    #[test]
    fn cauchy_schwarz_and_trivial_bound() {
        let mut r = rng::stream(5, "test-cs", 0);
        for i in 0..50 {
            let q: u64 = r.gen_range(2..=2000);
            let t = table(q);
            let (m, n) = (r.gen_range(1..30u64), r.gen_range(1..30u64));
            let a = CoeffSeq::unimodular(m, m as usize + 1, &mut r);
            let b = CoeffSeq::rademacher(n, n as usize + 1, &mut r);
            let c = loop {
                let c = r.gen_range(1..q.max(2) as i64);
                if gcd(c as u64 % q, q) == 1 {
                    break c;
                }
            };
            let v = bilinear_form_with(&t, &a, &b, c).unwrap().norm();
            let inner = weyl_sum_over(&t, &a, n, 2 * n, c).unwrap();
            assert!(v * v <= b.l2().powi(2) * inner * (1.0 + 1e-9) + 1e-9, "case {i}");
            assert!(v <= a.l1() * b.l1() * max_kl(&t) + 1e-9);
        }
    }

    #[test]
    fn family_moduli_have_the_right_shape() {
        let primes = family_moduli(Family::Prime, 1009, 9973, 6);
        assert_eq!(primes.first(), Some(&1009));
        assert!(primes.iter().all(|&q| is_prime(q) && q <= 9973));
        for q in family_moduli(Family::PrimeSquare, 25, 9409, 6) {
            let p = (q as f64).sqrt().round() as u64;
            assert!(p * p == q && is_prime(p));
        }
        for q in family_moduli(Family::SemiprimeBalanced, 1000, 100_000, 6) {
            let f = factorize(q).unwrap();
            assert!(f.len() == 2 && f.iter().all(|&(_, k)| k == 1));
            assert!((f[1].0 as f64) < 2.0 * f[0].0 as f64);
        }
        for q in family_moduli(Family::Smooth, 1000, 20000, 6) {
            assert!(factorize(q).unwrap().iter().all(|&(p, _)| p <= 3));
        }
    }

    #[test]
    fn shape_parsing() {
        assert_eq!("M=N=q^0.5".parse::<Shape>().unwrap(), Shape { m_exp: 0.5, n_exp: 0.5 });
        assert_eq!("M=q^0.4,N=q^0.6".parse::<Shape>().unwrap(), Shape { m_exp: 0.4, n_exp: 0.6 });
        assert!("M=10".parse::<Shape>().is_err());
    }

    #[test]
    fn scan_is_deterministic() {
        let qs = family_moduli(Family::Prime, 101, 1000, 4);
        let shape = Shape { m_exp: 0.5, n_exp: 0.5 };
        let a = scan(Family::Prime, &qs, shape, 3, 9).unwrap();
        let b = scan(Family::Prime, &qs, shape, 3, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), qs.len());
        assert!(a.rows.iter().all(|r| r.trial_max_ratio > 0.0 && r.trial_max_ratio <= 2.0));
    }

    proptest! {
        #[test]
        fn coeff_norm_is_cached_correctly(vals in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 0..40)) {
            let c = CoeffSeq::new(3, vals.iter().map(|&(a, b)| Complex64::new(a, b)).collect());
            let direct: f64 = vals.iter().map(|&(a, b)| a * a + b * b).sum();
            prop_assert!((c.l2() * c.l2() - direct).abs() <= 1e-12 * direct.max(1.0));
        }
    }
}
