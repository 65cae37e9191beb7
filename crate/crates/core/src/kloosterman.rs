//! Normalized Kloosterman sums `Kl₂(a; q) = q^{-1/2} Σ*_{x mod q} e((ax + x̄)/q)`.
//!
//! Three evaluators are provided:
//!
//! * [`kl2_direct`] sums over the units literally and is the reference for
//!   everything else; [`kl2_direct_row`] does the same for every `a` at once.
//! * [`kl2_fast`] / [`KlTable`] factor `q` into prime powers and recombine with
//!   twisted multiplicativity. Odd prime-power rows come from a length-`p^k`
//!   FFT of the literal sum; rows for `2^s` use the closed form
//!   [`s2_formula`] where it is valid.
//! * [`s2_formula`] evaluates `S(a, b; 2^s)` in closed form through the 2-adic
//!   square root, optionally as an exact element of `Z[ζ_N]`, `N = 2^{s+3}`.
//!
//! `Kl₂(a; 1) = 1` by convention.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::exec;
use crate::modcore::{gcd, inv_mod, inv_mod_pow2, mul_mod, reduce, two_adic_sqrt, Modulus};
use crate::{Error, Result};

/// `e(x) = exp(2πix)` for `x = num/den`, reduced first to keep the angle small.
#[inline]
pub fn e_frac(num: i128, den: u64) -> Complex64 {
    let r = reduce(num, den);
    Complex64::from_polar(1.0, TAU * r as f64 / den as f64)
}

/// Exact element `denom^{-1} · inv_sqrt^{-1/2} · Σ c_j ζ_N^j` of a cyclotomic field.
///
/// When `order` is a power of two the terms are kept in the reduced basis
/// `0 <= j < N/2` (using `ζ^{N/2} = -1`), so equal values have equal terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Cyclo {
    pub order: u64,
    pub terms: Vec<(u64, i64)>,
    pub denom: u64,
    pub inv_sqrt: u64,
}

impl Cyclo {
    pub fn zero(order: u64) -> Self {
        Cyclo { order, terms: Vec::new(), denom: 1, inv_sqrt: 1 }
    }

    pub fn monomial(order: u64, exp: i128, coeff: i64) -> Self {
        let mut c = Cyclo::zero(order);
        c.terms.push((reduce(exp, order), coeff));
        c.normalize();
        c
    }

    fn reduced_basis(&self) -> bool {
        self.order >= 2 && self.order.is_power_of_two()
    }

    /// Build from a dense coefficient vector of length `order`.
    pub fn from_dense(order: u64, dense: &[i64]) -> Self {
        let mut c = Cyclo::zero(order);
        c.terms = dense
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(j, &v)| (j as u64, v))
            .collect();
        c.normalize();
        c
    }

    fn normalize(&mut self) {
        let half = self.order / 2;
        let fold = self.reduced_basis();
        let mut acc: HashMap<u64, i64> = HashMap::new();
        for &(j, c) in &self.terms {
            let j = j % self.order;
            let (j, c) = if fold && j >= half { (j - half, -c) } else { (j, c) };
            *acc.entry(j).or_insert(0) += c;
        }
        let mut terms: Vec<(u64, i64)> = acc.into_iter().filter(|&(_, c)| c != 0).collect();
        terms.sort_unstable();
        self.terms = terms;
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Sum of two elements with the same order and scaling.
    pub fn add(&self, other: &Cyclo) -> Result<Cyclo> {
        if self.order != other.order || self.denom != other.denom || self.inv_sqrt != other.inv_sqrt {
            return Err(Error::Precondition("cyclotomic operands differ in order or scaling".into()));
        }
        let mut out = self.clone();
        out.terms.extend_from_slice(&other.terms);
        out.normalize();
        Ok(out)
    }

    pub fn mul(&self, other: &Cyclo) -> Result<Cyclo> {
        if self.order != other.order {
            return Err(Error::Precondition("cyclotomic operands differ in order".into()));
        }
        let mut out = Cyclo::zero(self.order);
        out.denom = self.denom * other.denom;
        out.inv_sqrt = self.inv_sqrt * other.inv_sqrt;
        for &(i, a) in &self.terms {
            for &(j, b) in &other.terms {
                out.terms.push(((i + j) % self.order, a * b));
            }
        }
        out.normalize();
        Ok(out)
    }

    pub fn scale(&self, k: i64) -> Cyclo {
        let mut out = self.clone();
        out.terms.iter_mut().for_each(|t| t.1 *= k);
        out.normalize();
        out
    }

    pub fn eval(&self) -> Complex64 {
        let s: Complex64 = self
            .terms
            .iter()
            .map(|&(j, c)| c as f64 * e_frac(j as i128, self.order))
            .sum();
        s / (self.denom as f64 * (self.inv_sqrt as f64).sqrt())
    }
}

/// Value of a complete exponential sum, with an optional exact form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpSum {
    pub value: Complex64,
    pub exact: Option<Cyclo>,
}

impl ExpSum {
    pub fn numeric(value: Complex64) -> Self {
        ExpSum { value, exact: None }
    }

    pub fn from_exact(c: Cyclo) -> Self {
        ExpSum { value: c.eval(), exact: Some(c) }
    }
}

/// Unnormalized `S(a, b; q) = Σ*_{x mod q} e((ax + b x̄)/q)` by literal summation.
pub fn kloosterman_sum(a: i128, b: i128, q: u64) -> Result<Complex64> {
    if q == 0 {
        return Err(Error::ZeroModulus);
    }
    if q == 1 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let (a, b) = (reduce(a, q), reduce(b, q));
    Ok((1..q)
        .filter(|&x| gcd(x, q) == 1)
        .map(|x| {
            let xb = inv_mod(x, q).expect("unit");
            let ph = (mul_mod(a, x, q) as u128 + mul_mod(b, xb, q) as u128) % q as u128;
            e_frac(ph as i128, q)
        })
        .sum())
}

pub fn kl2_direct(a: i128, q: u64) -> Result<ExpSum> {
    let s = kloosterman_sum(a, 1, q)?;
    Ok(ExpSum::numeric(s / (q as f64).sqrt()))
}

/// Literal `Kl₂(a; q)` for every `a mod q`, in `O(q φ(q))`.
pub fn kl2_direct_row(q: u64) -> Result<Vec<Complex64>> {
    if q == 0 {
        return Err(Error::ZeroModulus);
    }
    if q == 1 {
        return Ok(vec![Complex64::new(1.0, 0.0)]);
    }
    let n = q as usize;
    let table: Vec<Complex64> = (0..q).map(|j| e_frac(j as i128, q)).collect();
    let units: Vec<(usize, usize)> = (1..q)
        .filter(|&x| gcd(x, q) == 1)
        .map(|x| (x as usize, inv_mod(x, q).expect("unit") as usize))
        .collect();
    let norm = 1.0 / (q as f64).sqrt();
    const BLOCK: usize = 512;
    let blocks = exec::map_range(n.div_ceil(BLOCK), |blk| {
        let lo = blk * BLOCK;
        let hi = (lo + BLOCK).min(n);
        let mut acc = vec![Complex64::new(0.0, 0.0); hi - lo];
        for &(x, xb) in &units {
            // idx = a·x + x̄ mod q, advanced by x as a increases.
            let mut idx = ((lo as u128 * x as u128 + xb as u128) % n as u128) as usize;
            for slot in acc.iter_mut() {
                *slot += table[idx];
                idx += x;
                if idx >= n {
                    idx -= n;
                }
            }
        }
        acc
    });
    Ok(blocks.into_iter().flatten().map(|z| z * norm).collect())
}

/// Unnormalized `S(a, b; q)` for every `b mod q`, as the transform of
/// `y ↦ e(a ȳ / q)` over units `y`.
pub fn kloosterman_row(a: i128, q: u64) -> Result<Vec<Complex64>> {
    if q == 0 {
        return Err(Error::ZeroModulus);
    }
    let a = reduce(a, q);
    let n = q as usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    if q == 1 {
        buf[0] = Complex64::new(1.0, 0.0);
        return Ok(buf);
    }
    for y in 1..q {
        if gcd(y, q) == 1 {
            buf[y as usize] = e_frac(mul_mod(a, inv_mod(y, q)?, q) as i128, q);
        }
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    Ok(buf)
}

/// `Kl₂(a; q)` as an exact element of `Z[ζ_q]` scaled by `q^{-1/2}`.
pub fn kl2_exact(a: i128, q: u64) -> Result<Cyclo> {
    if q == 0 {
        return Err(Error::ZeroModulus);
    }
    if q == 1 {
        return Ok(Cyclo::monomial(1, 0, 1));
    }
    let a = reduce(a, q);
    let mut dense = vec![0i64; q as usize];
    for x in 1..q {
        if gcd(x, q) == 1 {
            let ph = (mul_mod(a, x, q) + inv_mod(x, q)?) % q;
            dense[ph as usize] += 1;
        }
    }
    let mut c = Cyclo::from_dense(q, &dense);
    c.inv_sqrt = q;
    Ok(c)
}

/// `Kl₂(a; p^k)` for every `a`, through an FFT of `x ↦ e(x̄/p^k)` on units.
fn fft_row(pk: u64) -> Vec<f64> {
    let n = pk as usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for x in 1..pk {
        if gcd(x, pk) == 1 {
            buf[x as usize] = e_frac(inv_mod(x, pk).expect("unit") as i128, pk);
        }
    }
    // Inverse transform carries the e(+ax/q) sign.
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let norm = 1.0 / (pk as f64).sqrt();
    buf.iter().map(|z| z.re * norm).collect()
}

/// Rows `2^s` with a valid closed form; see [`kl2_fast`].
fn closed_form_applies(s: u32) -> bool {
    s >= 6 && s != 7
}

fn pow2_row(s: u32) -> Vec<f64> {
    let q = 1u64 << s;
    let norm = 1.0 / (q as f64).sqrt();
    (0..q)
        .map(|a| s2_formula(1, a as i128, s, false).expect("valid arguments").value.re * norm)
        .collect()
}

const MAX_TABLE: u64 = 1 << 24;

fn row_cache() -> &'static Mutex<HashMap<u64, Arc<Vec<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Cached `Kl₂(·; p^k)` row.
fn prime_power_row(p: u64, k: u32) -> Arc<Vec<f64>> {
    let pk = p.pow(k);
    if let Some(r) = row_cache().lock().expect("cache lock").get(&pk) {
        return r.clone();
    }
    let row = Arc::new(if p == 2 && closed_form_applies(k) { pow2_row(k) } else { fft_row(pk) });
    // Racing builders produce identical rows; the first insert wins.
    row_cache().lock().expect("cache lock").entry(pk).or_insert(row).clone()
}

#[derive(Debug, Clone)]
struct Part {
    pk: u64,
    twist: u64,
    row: Arc<Vec<f64>>,
}

/// `Kl₂(·; q)` assembled from prime-power rows by twisted multiplicativity.
#[derive(Debug, Clone)]
pub struct KlTable {
    q: u64,
    parts: Vec<Part>,
}

impl KlTable {
    pub fn new(q: &Modulus) -> Result<Self> {
        let mut parts = Vec::new();
        for &(p, k) in q.factors() {
            let pk = p.pow(k);
            if pk > MAX_TABLE {
                return Err(Error::OutOfRange(format!("prime power {pk} too large for a table")));
            }
            let rest = q.q() / pk;
            let rinv = inv_mod(rest % pk, pk)?;
            parts.push(Part { pk, twist: mul_mod(rinv, rinv, pk), row: prime_power_row(p, k) });
        }
        Ok(KlTable { q: q.q(), parts })
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    #[inline]
    pub fn get(&self, a: u64) -> f64 {
        self.parts
            .iter()
            .map(|pt| pt.row[mul_mod(a % pt.pk, pt.twist, pt.pk) as usize])
            .product()
    }

    pub fn get_signed(&self, a: i128) -> f64 {
        self.get(reduce(a, self.q.max(1)))
    }

    /// The full row `a = 0..q`.
    pub fn row(&self) -> Vec<f64> {
        exec::map_range(self.q as usize, |a| self.get(a as u64))
    }
}

/// `Kl₂(a; p^k)` without tables.
fn kl2_prime_power(a: u64, p: u64, k: u32) -> f64 {
    let pk = p.pow(k);
    if p == 2 && closed_form_applies(k) {
        s2_formula(1, a as i128, k, false).expect("valid arguments").value.re / (pk as f64).sqrt()
    } else {
        kloosterman_sum(a as i128, 1, pk).expect("positive modulus").re / (pk as f64).sqrt()
    }
}

/// Prime powers up to this size are read from the shared row cache in [`kl2_fast`].
pub const FAST_ROW_MAX: u64 = 1 << 16;

/// `Kl₂(a; q)` by twisted multiplicativity over the prime powers of `q`.
///
/// Factors up to [`FAST_ROW_MAX`] come from cached rows. Larger ones are summed
/// per call. `2^s` factors with `s >= 6` use the closed form, except `s = 7`,
/// where the closed form is off by a sign (see `closed_form_fails_at_128` in
/// the tests) and direct summation is used instead.
pub fn kl2_fast(a: i128, q: &Modulus) -> ExpSum {
    let qq = q.q();
    let a = reduce(a, qq);
    let v = q
        .factors()
        .iter()
        .map(|&(p, k)| {
            let pk = p.pow(k);
            let rinv = inv_mod((qq / pk) % pk, pk).expect("coprime cofactor");
            let ak = mul_mod(a % pk, mul_mod(rinv, rinv, pk), pk);
            if pk <= FAST_ROW_MAX {
                prime_power_row(p, k)[ak as usize]
            } else {
                kl2_prime_power(ak, p, k)
            }
        })
        .product::<f64>();
    ExpSum::numeric(Complex64::new(v, 0.0))
}

/// A query `Kl₂(c·a; q)`.
#[derive(Debug, Clone)]
pub struct KlQuery {
    pub a: i128,
    pub q: Modulus,
    pub c: Option<u64>,
}

impl KlQuery {
    pub fn eval(&self) -> Result<ExpSum> {
        let c = match self.c {
            Some(c) if gcd(c, self.q.q()) != 1 => return Err(Error::NotCoprime(c, self.q.q())),
            Some(c) => c as i128,
            None => 1,
        };
        Ok(kl2_fast(c * self.a, &self.q))
    }
}

fn check_odd(x: i128, what: &str) -> Result<()> {
    if x.rem_euclid(2) == 0 {
        return Err(Error::Precondition(format!("{what} = {x} must be odd")));
    }
    Ok(())
}

/// `τ(x, 2^s)`: `(1 + e(x/4))/√2` for even `s`, `e(x/8)` for odd `s`.
///
/// Depends only on `s mod 2` and `x mod 8`. Defined here for all `s >= 2`.
pub fn tau2(x: i128, s: u32) -> Result<ExpSum> {
    check_odd(x, "x")?;
    if s < 2 {
        return Err(Error::Precondition(format!("s = {s} < 2")));
    }
    Ok(ExpSum::numeric(tau2_value(x, s)))
}

fn tau2_value(x: i128, s: u32) -> Complex64 {
    if s.is_multiple_of(2) {
        (Complex64::new(1.0, 0.0) + e_frac(x, 4)) / 2f64.sqrt()
    } else {
        e_frac(x, 8)
    }
}

/// `2^{(s+1)/2} τ(x, 2^s)` as an element of `Z[ζ_N]`, `N = 2^{s+3}`.
fn scaled_tau_exact(x: i128, s: u32) -> Cyclo {
    let n = 1u64 << (s + 3);
    if s.is_multiple_of(2) {
        // 2^{(s+1)/2}(1 + e(x/4))/√2 = 2^{s/2}(1 + ζ_N^{xN/4})
        let c = 1i64 << (s / 2);
        Cyclo::monomial(n, 0, c).add(&Cyclo::monomial(n, x * (n / 4) as i128, c)).expect("same order")
    } else {
        Cyclo::monomial(n, x * (n / 8) as i128, 1i64 << (s.div_ceil(2)))
    }
}

/// Closed form for `S(a, b; 2^s)`, `s >= 6`, `a` odd:
/// zero unless `a ≡ b mod 8`, else `2^{(s+1)/2} Σ_± τ(±r, 2^s) e(±2r/2^s)` with `r = (ab)_{1/2}`.
pub fn s2_formula(a: i128, b: i128, s: u32, exact: bool) -> Result<ExpSum> {
    check_odd(a, "a")?;
    if s < 6 {
        return Err(Error::Precondition(format!("s = {s} < 6")));
    }
    if s > 40 {
        return Err(Error::OutOfRange(format!("s = {s} > 40")));
    }
    let n = 1u64 << (s + 3);
    if (a - b).rem_euclid(8) != 0 {
        return Ok(if exact { ExpSum::from_exact(Cyclo::zero(n)) } else { ExpSum::numeric(Complex64::new(0.0, 0.0)) });
    }
    let r = two_adic_sqrt(a.wrapping_mul(b), s)? as i128;
    if exact {
        let mut acc = Cyclo::zero(n);
        for sign in [1i128, -1] {
            let phase = Cyclo::monomial(n, sign * 2 * r * 8, 1);
            acc = acc.add(&scaled_tau_exact(sign * r, s).mul(&phase)?)?;
        }
        return Ok(ExpSum::from_exact(acc));
    }
    let scale = 2f64.powf((s + 1) as f64 / 2.0);
    let v: Complex64 = [1i128, -1]
        .iter()
        .map(|&sg| tau2_value(sg * r, s) * e_frac(sg * 2 * r, 1 << s))
        .sum();
    Ok(ExpSum::numeric(v * scale))
}

/// `S(a, b; 2^s)` by literal summation as an exact element of `Z[ζ_N]`, `N = 2^{s+3}`.
pub fn s2_direct_exact(a: i128, b: i128, s: u32) -> Result<Cyclo> {
    if s > 24 {
        return Err(Error::OutOfRange(format!("s = {s} > 24")));
    }
    let q = 1u64 << s;
    let n = q << 3;
    let (a, b) = (reduce(a, q), reduce(b, q));
    let mut dense = vec![0i64; n as usize];
    for x in (1..q).step_by(2) {
        let xb = inv_mod_pow2(x as u128, s) as u64;
        let ph = (a.wrapping_mul(x).wrapping_add(b.wrapping_mul(xb))) & (q - 1);
        dense[(ph << 3) as usize] += 1;
    }
    Ok(Cyclo::from_dense(n, &dense))
}

/// Single branch `S^ε(m, n; 2^s) = 2^{(s+1)/2} τ(ε(mn)_{1/2}, 2^s) e(2ε(mn)_{1/2}/2^s)`,
/// zero unless `m ≡ n mod 8`.
pub fn s_eps(m: i128, n: i128, s: u32, eps: i8) -> Result<ExpSum> {
    check_odd(m, "m")?;
    check_odd(n, "n")?;
    if s < 2 {
        return Err(Error::Precondition(format!("s = {s} < 2")));
    }
    if eps != 1 && eps != -1 {
        return Err(Error::Precondition("ε must be ±1".into()));
    }
    Ok(ExpSum::numeric(s_eps_value(m, n, s, eps)?))
}

pub(crate) fn s_eps_value(m: i128, n: i128, s: u32, eps: i8) -> Result<Complex64> {
    if (m - n).rem_euclid(8) != 0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let r = eps as i128 * two_adic_sqrt(m.wrapping_mul(n), s.max(3))? as i128;
    let scale = 2f64.powf((s + 1) as f64 / 2.0);
    Ok(tau2_value(r, s) * e_frac(2 * r, 1 << s) * scale)
}

/// `e^{iπ/4}`, the common value of several `τ` evaluations.
pub fn zeta8() -> Complex64 {
    Complex64::from_polar(1.0, PI / 4.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn direct_examples() {
        let v = kl2_direct(1, 2).unwrap().value;
        assert!(close(v, Complex64::new(1.0 / 2f64.sqrt(), 0.0), 1e-15));
        let v = kl2_direct(3, 3).unwrap().value;
        assert!(close(v, Complex64::new(-1.0 / 3f64.sqrt(), 0.0), 1e-15));
        let v = kl2_direct(1, 5).unwrap().value;
        let want = (2.0 + 2.0 * (4.0 * PI / 5.0).cos()) / 5f64.sqrt();
        assert!(close(v, Complex64::new(want, 0.0), 1e-14));
        assert_abs_diff_eq!(want, 0.17082, epsilon = 1e-5);
        assert_eq!(kl2_direct(5, 1).unwrap().value, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn fast_examples() {
        for (a, q) in [(1i128, 15u64), (7, 1024), (1, 1), (5, 128), (3, 64 * 45)] {
            let m = Modulus::new(q).unwrap();
            let f = kl2_fast(a, &m).value;
            let d = kl2_direct(a, q).unwrap().value;
            assert!(close(f, d, 1e-9), "a={a} q={q}: {f} vs {d}");
        }
    }

    #[test]
    fn row_matches_single() {
        for q in [1u64, 2, 9, 12, 64, 97, 100] {
            let row = kl2_direct_row(q).unwrap();
            let tab = KlTable::new(&Modulus::new(q).unwrap()).unwrap();
            for a in 0..q {
                let d = kl2_direct(a as i128, q).unwrap().value;
                assert!(close(row[a as usize], d, 1e-12));
                assert!((tab.get(a) - d.re).abs() < 1e-9, "q={q} a={a}");
            }
        }
    }

    #[test]
    fn uncached_prime_power_matches_row() {
        for (p, k) in [(2u64, 6u32), (2, 7), (2, 9), (3, 5), (101, 1), (7, 3)] {
            let row = prime_power_row(p, k);
            for a in 0..p.pow(k) {
                assert!((kl2_prime_power(a, p, k) - row[a as usize]).abs() < 1e-9, "p={p} k={k} a={a}");
            }
        }
    }

    #[test]
    fn kloosterman_row_matches_literal() {
        for q in [1u64, 2, 15, 64, 101] {
            for a in [0i128, 1, 7, -3] {
                let row = kloosterman_row(a, q).unwrap();
                for b in 0..q {
                    let d = kloosterman_sum(a, b as i128, q).unwrap();
                    assert!(close(row[b as usize], d, 1e-9), "q={q} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn kl2_exact_matches_numeric() {
        for q in [1u64, 7, 12, 64, 81] {
            for a in 0..q.min(20) {
                let e = kl2_exact(a as i128, q).unwrap().eval();
                assert!(close(e, kl2_direct(a as i128, q).unwrap().value, 1e-12));
            }
        }
        assert!(kl2_exact(1, 0).is_err());
    }

    #[test]
    fn tau_examples() {
        assert!(close(tau2(1, 6).unwrap().value, zeta8(), 1e-15));
        assert!(close(tau2(1, 7).unwrap().value, zeta8(), 1e-15));
        assert!(close(tau2(3, 7).unwrap().value, e_frac(3, 8), 1e-15));
        assert!(tau2(2, 7).is_err());
        // Defining Gauss-sum averages agree with the closed forms.
        for x in [1i128, 3, 5, 7] {
            let even: Complex64 = (0..4).map(|t| e_frac(x * t * t, 4)).sum::<Complex64>() / (2.0 * 2f64.sqrt());
            let odd: Complex64 = (0..8).map(|t| e_frac(x * t * t, 8)).sum::<Complex64>() / 4.0;
            assert!(close(tau2(x, 8).unwrap().value, even, 1e-14));
            assert!(close(tau2(x, 9).unwrap().value, odd, 1e-14));
        }
    }

    #[test]
    fn s2_formula_examples() {
        assert_eq!(s2_formula(1, 3, 6, false).unwrap().value, Complex64::new(0.0, 0.0));
        let direct = kloosterman_sum(1, 1, 64).unwrap();
        assert!(close(s2_formula(1, 1, 6, false).unwrap().value, direct, 1e-9));
        assert!(s2_formula(2, 2, 6, false).is_err());
        let exact = s2_formula(1, 1, 6, true).unwrap();
        assert_eq!(exact.exact.clone().unwrap(), s2_direct_exact(1, 1, 6).unwrap());
        assert!(close(exact.value, direct, 1e-9));
    }

    #[test]
    fn closed_form_fails_at_128() {
        // At s = 7 the quadratic expansion behind the closed form is not exact
        // modulo 2^7; the two sides differ by a sign.
        let direct = kloosterman_sum(9, 17, 128).unwrap();
        let formula = s2_formula(9, 17, 7, false).unwrap().value;
        assert!(direct.norm() > 1.0);
        assert!(close(formula, -direct, 1e-9));
    }

    #[test]
    fn s_eps_examples() {
        assert_eq!(s_eps(1, 3, 6, 1).unwrap().value, Complex64::new(0.0, 0.0));
        let sum = s_eps(1, 1, 6, 1).unwrap().value + s_eps(1, 1, 6, -1).unwrap().value;
        assert!(close(sum, kloosterman_sum(1, 1, 64).unwrap(), 1e-9));
        let v = s_eps(17, 9, 7, -1).unwrap().value;
        let r = -(two_adic_sqrt(153, 7).unwrap() as i128);
        let want = 16.0 * e_frac(r, 8) * e_frac(2 * r, 128);
        assert!(close(v, want, 1e-12));
        assert!(s_eps(2, 1, 6, 1).is_err());
    }

    #[test]
    fn cyclo_reduced_basis_is_canonical() {
        let n = 64;
        let a = Cyclo::monomial(n, 40, 3);
        assert_eq!(a.terms, vec![(8, -3)]);
        let z = a.add(&Cyclo::monomial(n, 8, 3)).unwrap();
        assert!(z.is_zero());
        let p = Cyclo::monomial(n, 5, 2).mul(&Cyclo::monomial(n, 30, 1)).unwrap();
        assert_eq!(p.terms, vec![(3, -2)]);
        assert!(close(p.eval(), -2.0 * e_frac(3, 64), 1e-14));
    }

    #[test]
    fn degenerate_prime_powers() {
        for p in [3u64, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47] {
            for j in 1..=3u32 {
                let pj = p.pow(j);
                if pj > 20_000 {
                    continue;
                }
                for a in [p, 2 * p, p * (p - 1)] {
                    let v = kl2_direct(a as i128, pj).unwrap().value;
                    let want = if j == 1 { -1.0 / (p as f64).sqrt() } else { 0.0 };
                    assert!(close(v, Complex64::new(want, 0.0), 1e-9), "p={p} j={j} a={a}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn weil_bound(q in 1u64..600, a in any::<u64>()) {
            let a = a % q;
            prop_assume!(gcd(a, q) == 1);
            let d = crate::modcore::divisor_count(q).unwrap() as f64;
            prop_assert!(kl2_direct(a as i128, q).unwrap().value.norm() <= d + 1e-9);
        }

        #[test]
        fn twisted_multiplicativity(q1 in 1u64..120, q2 in 1u64..120, a in any::<i64>()) {
            prop_assume!(gcd(q1, q2) == 1);
            let a = a as i128;
            let i1 = inv_mod(q1 % q2.max(1), q2).unwrap_or(0) as i128;
            let i2 = inv_mod(q2 % q1.max(1), q1).unwrap_or(0) as i128;
            let lhs = kl2_direct(a, q1 * q2).unwrap().value;
            let rhs = kl2_direct(a * i2 * i2, q1).unwrap().value * kl2_direct(a * i1 * i1, q2).unwrap().value;
            prop_assert!(close(lhs, rhs, 1e-9));
        }

        #[test]
        fn kloosterman_sums_are_real(q in 1u64..500, a in any::<i64>()) {
            prop_assert!(kl2_direct(a as i128, q).unwrap().value.im.abs() < 1e-10);
        }
    }
}
