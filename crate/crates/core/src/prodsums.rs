//! Complete sums of products of shifted Kloosterman sums.
//!
//! * `ℜ(b, l; q) = Σ_{r mod q} Π_{i≤2} Π_{j≤4} Kl₂(l_i (r + b_j); q)`
//! * `𝔖(b, h, d; q) = Σ_{r, s₁, s₂ mod q, (s₁-s₂, q) = d} e_q(h₁s₁ + h₂s₂) Π_{i,j} Kl₂(s_i (r + b_j); q)`
//! * `𝒮^ε_d(h, k₁, k₂; 2^s) = Σ*_{m mod 2^s} S^ε(k₁, md) conj(S^ε(k₂, md)) e(-hm/2^s)`
//!
//! The phase of `𝔖` is applied once per `i`, not once per `(i, j)`.
//!
//! `𝔖` is evaluated in `O(q² τ(q))` by writing the gcd condition as
//! `Σ_{d | e | q} μ(e/d) [e | s₁ - s₂]` and summing over residue classes mod
//! `e`; [`s_sum_direct`] is the literal triple loop.

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::exec;
use crate::kloosterman::{e_frac, kl2_direct_row, s_eps_value, ExpSum, KlTable};
use crate::modcore::{divisors, gcd, inv_mod, is_prime, mobius, mul_mod, reduce, Modulus};
use crate::rng;
use crate::stats::loglog_slope;
use crate::variety::{self, Regime};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BClass {
    Delta,
    ExplicitBad,
    Generic,
    Unknown,
}

/// Shift tuple `b` with its class modulo a prime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TupleB {
    pub b: [i64; 4],
    pub class_mod_p: BClass,
}

impl TupleB {
    /// Classify `b` modulo `p`; non-prime moduli give [`BClass::Unknown`].
    pub fn classify(b: [i64; 4], p: u64) -> Self {
        let class_mod_p = if !is_prime(p) {
            BClass::Unknown
        } else if variety::vdelta_member(&b, p) {
            BClass::Delta
        } else if variety::in_v4bad(&b, p) {
            BClass::ExplicitBad
        } else {
            BClass::Generic
        };
        TupleB { b, class_mod_p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TupleH {
    pub h: [i64; 2],
}

/// Shifted arguments `(r + b_j) mod q`.
#[inline]
fn shifts(b: &[i64; 4], r: u64, q: u64) -> [u64; 4] {
    b.map(|bj| reduce(r as i128 + bj as i128, q))
}

/// `Π_j Kl₂(l (r + b_j); q)`.
#[inline]
fn kl_product(table: &KlTable, l: u64, sh: &[u64; 4], q: u64) -> f64 {
    sh.iter().map(|&x| table.get(mul_mod(l, x, q))).product()
}

pub fn r_sum(b: &[i64; 4], l: [i64; 2], q: &Modulus) -> Result<ExpSum> {
    let table = KlTable::new(q)?;
    Ok(ExpSum::numeric(Complex64::new(r_sum_with(&table, b, l), 0.0)))
}

/// [`r_sum`] against a prebuilt table.
pub fn r_sum_with(table: &KlTable, b: &[i64; 4], l: [i64; 2]) -> f64 {
    let q = table.q();
    let (l1, l2) = (reduce(l[0] as i128, q), reduce(l[1] as i128, q));
    (0..q)
        .map(|r| {
            let sh = shifts(b, r, q);
            kl_product(table, l1, &sh, q) * kl_product(table, l2, &sh, q)
        })
        .sum()
}

/// `ℜ` with every Kloosterman factor read from the literal row [`kl2_direct_row`].
pub fn r_sum_direct(b: &[i64; 4], l: [i64; 2], q: u64) -> Result<ExpSum> {
    let row = kl2_direct_row(q)?;
    let mut total = Complex64::new(0.0, 0.0);
    for r in 0..q as i128 {
        let mut prod = Complex64::new(1.0, 0.0);
        for &li in &l {
            for &bj in b {
                prod *= row[reduce(li as i128 * (r + bj as i128), q) as usize];
            }
        }
        total += prod;
    }
    Ok(ExpSum::numeric(total))
}

fn coprime_parts(q1: u64, q2: u64) -> Result<()> {
    if q1 == 0 || q2 == 0 {
        return Err(Error::ZeroModulus);
    }
    if gcd(q1, q2) != 1 {
        return Err(Error::NotCoprime(q1, q2));
    }
    Ok(())
}

/// `(ℜ(b, q̄₂² l; q₁), ℜ(b, q̄₁² l; q₂))`.
pub fn split_r(b: &[i64; 4], l: [i64; 2], q1: u64, q2: u64) -> Result<(ExpSum, ExpSum)> {
    coprime_parts(q1, q2)?;
    let twist = |other: u64, own: u64| -> Result<i128> {
        let inv = inv_mod(other % own, own)? as i128;
        Ok(inv * inv)
    };
    let (t1, t2) = (twist(q2, q1)?, twist(q1, q2)?);
    let scale = |t: i128, m: u64| l.map(|li| reduce(li as i128 * t, m) as i64);
    Ok((r_sum(b, scale(t1, q1), &Modulus::new(q1)?)?, r_sum(b, scale(t2, q2), &Modulus::new(q2)?)?))
}

fn check_divisor(d: u64, q: u64) -> Result<()> {
    if d == 0 || !q.is_multiple_of(d) {
        return Err(Error::NotDivisor { d, q });
    }
    Ok(())
}

/// Per-`r` vectors `X(s) = e(h₁s/q) P_r(s)` and `Y(s) = e(h₂s/q) P_r(s)`.
fn phased_products(table: &KlTable, b: &[i64; 4], h: [i64; 2], r: u64) -> (Vec<Complex64>, Vec<Complex64>) {
    let q = table.q();
    let sh = shifts(b, r, q);
    let mut x = Vec::with_capacity(q as usize);
    let mut y = Vec::with_capacity(q as usize);
    for s in 0..q {
        let p = kl_product(table, s, &sh, q);
        x.push(e_frac(h[0] as i128 * s as i128, q) * p);
        y.push(e_frac(h[1] as i128 * s as i128, q) * p);
    }
    (x, y)
}

pub fn s_sum(b: &[i64; 4], h: [i64; 2], d: u64, q: &Modulus) -> Result<ExpSum> {
    let qq = q.q();
    check_divisor(d, qq)?;
    let table = KlTable::new(q)?;
    let classes: Vec<(u64, i64)> = divisors(qq / d)?
        .into_iter()
        .map(|f| Ok((d * f, mobius(f)?)))
        .filter(|r: &Result<(u64, i64)>| r.as_ref().map_or(true, |&(_, mu)| mu != 0))
        .collect::<Result<_>>()?;
    let row = table.row();
    let n = qq as usize;
    let phase: [Vec<Complex64>; 2] = h.map(|hi| (0..qq).map(|s| e_frac(hi as i128 * s as i128, qq)).collect());
    let total = exec::sum_range(n, |r| {
        // idx_j = s·(r + b_j) mod q, advanced by r + b_j per step of s.
        let sh = shifts(b, r as u64, qq).map(|v| v as usize);
        let mut idx = [0usize; 4];
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for s in 0..n {
            let p = row[idx[0]] * row[idx[1]] * row[idx[2]] * row[idx[3]];
            x.push(phase[0][s] * p);
            y.push(phase[1][s] * p);
            for j in 0..4 {
                idx[j] += sh[j];
                if idx[j] >= n {
                    idx[j] -= n;
                }
            }
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for &(e, mu) in &classes {
            let e = e as usize;
            let mut sx = vec![Complex64::new(0.0, 0.0); e];
            let mut sy = vec![Complex64::new(0.0, 0.0); e];
            for s in 0..x.len() {
                sx[s % e] += x[s];
                sy[s % e] += y[s];
            }
            let inner: Complex64 = sx.iter().zip(&sy).map(|(a, b)| a * b).sum();
            acc += inner * mu as f64;
        }
        acc
    });
    Ok(ExpSum::numeric(total))
}

/// Literal triple loop over `r, s₁, s₂` with the gcd condition.
pub fn s_sum_direct(b: &[i64; 4], h: [i64; 2], d: u64, q: &Modulus) -> Result<ExpSum> {
    let qq = q.q();
    check_divisor(d, qq)?;
    let table = KlTable::new(q)?;
    let mut total = Complex64::new(0.0, 0.0);
    for r in 0..qq {
        let (x, y) = phased_products(&table, b, h, r);
        for s1 in 0..qq {
            for s2 in 0..qq {
                if gcd((s1 + qq - s2) % qq, qq) == d {
                    total += x[s1 as usize] * y[s2 as usize];
                }
            }
        }
    }
    Ok(ExpSum::numeric(total))
}

/// `(𝔖(b, q₂h, d₁; q₁), 𝔖(b, q₁h, d₂; q₂))` with `d_i = (d, q_i)`.
pub fn split_s(b: &[i64; 4], h: [i64; 2], d: u64, q1: u64, q2: u64) -> Result<(ExpSum, ExpSum)> {
    coprime_parts(q1, q2)?;
    check_divisor(d, q1 * q2)?;
    let (d1, d2) = (gcd(d, q1), gcd(d, q2));
    let scale = |c: u64| h.map(|hi| (hi as i128 * c as i128) as i64);
    Ok((
        s_sum(b, scale(q2), d1, &Modulus::new(q1)?)?,
        s_sum(b, scale(q1), d2, &Modulus::new(q2)?)?,
    ))
}

fn check_script_args(k1: i64, k2: i64, d: i64, s: u32, eps: i8) -> Result<()> {
    if [k1, k2, d].iter().any(|v| v.rem_euclid(2) == 0) {
        return Err(Error::Precondition("k₁, k₂ and d must be odd".into()));
    }
    if !(2..=40).contains(&s) {
        return Err(Error::Precondition(format!("s = {s} outside [2, 40]")));
    }
    if eps != 1 && eps != -1 {
        return Err(Error::Precondition("ε must be ±1".into()));
    }
    Ok(())
}

/// `𝒮^ε_d(h, k₁, k₂; 2^s)`.
pub fn script_s2(h: i64, k1: i64, k2: i64, d: i64, s: u32, eps: i8) -> Result<ExpSum> {
    check_script_args(k1, k2, d, s, eps)?;
    let q = 1u64 << s;
    let terms = exec::map_range((q / 2) as usize, |i| -> Result<Complex64> {
        let m = (2 * i + 1) as i128;
        let md = m * d as i128;
        let a = s_eps_value(k1 as i128, md, s, eps)?;
        let b = s_eps_value(k2 as i128, md, s, eps)?;
        Ok(a * b.conj() * e_frac(-(h as i128) * m, q))
    });
    let mut acc = Complex64::new(0.0, 0.0);
    for t in terms {
        acc += t?;
    }
    Ok(ExpSum::numeric(acc))
}

/// `𝒮^ε_d(h, k₁, k₂; 2^s)` for every `h mod 2^s`, as one forward transform over `m`.
pub fn script_s2_all_h(k1: i64, k2: i64, d: i64, s: u32, eps: i8) -> Result<Vec<Complex64>> {
    check_script_args(k1, k2, d, s, eps)?;
    let q = 1usize << s;
    let mut buf = vec![Complex64::new(0.0, 0.0); q];
    let coeffs = exec::map_range(q / 2, |i| -> Result<Complex64> {
        let md = (2 * i + 1) as i128 * d as i128;
        Ok(s_eps_value(k1 as i128, md, s, eps)? * s_eps_value(k2 as i128, md, s, eps)?.conj())
    });
    for (i, c) in coeffs.into_iter().enumerate() {
        buf[2 * i + 1] = c?;
    }
    rustfft::FftPlanner::new().plan_fft_forward(q).process(&mut buf);
    Ok(buf)
}

/// `S^ε(m, n; 2^s)` with the square root found by search, for cross-checking.
fn s_eps_search(m: i128, n: i128, s: u32, eps: i8) -> Complex64 {
    if (m - n).rem_euclid(8) != 0 {
        return Complex64::new(0.0, 0.0);
    }
    let level = s.max(3);
    let modk = 1i128 << level;
    let u = (m * n).rem_euclid(modk);
    let root = (0..modk / 2)
        .find(|x| x % 4 == 1 && (x * x).rem_euclid(modk) == u)
        .expect("units 1 mod 8 are squares");
    let r = eps as i128 * root;
    let tau = if s.is_multiple_of(2) {
        (0..4).map(|t| e_frac(r * t * t, 4)).sum::<Complex64>() / (2.0 * 2f64.sqrt())
    } else {
        (0..8).map(|t| e_frac(r * t * t, 8)).sum::<Complex64>() / 4.0
    };
    tau * e_frac(2 * r, 1 << s) * 2f64.powf((s + 1) as f64 / 2.0)
}

/// Literal evaluation of `𝒮^ε_d` from the Gauss-sum form of `τ` and a searched root.
pub fn script_s2_direct(h: i64, k1: i64, k2: i64, d: i64, s: u32, eps: i8) -> Result<ExpSum> {
    check_script_args(k1, k2, d, s, eps)?;
    if s > 16 {
        return Err(Error::OutOfRange("direct evaluation limited to s <= 16".into()));
    }
    let q = 1i128 << s;
    let mut acc = Complex64::new(0.0, 0.0);
    for m in (1..q).step_by(2) {
        let md = m * d as i128;
        acc += s_eps_search(k1 as i128, md, s, eps)
            * s_eps_search(k2 as i128, md, s, eps).conj()
            * e_frac(-(h as i128) * m, q as u64);
    }
    Ok(ExpSum::numeric(acc))
}

/// `2^{3s/2} (k₁ - k₂, h, 2^s)^{1/2}`.
pub fn script_s2_envelope(h: i64, k1: i64, k2: i64, s: u32) -> f64 {
    let g = gcd(gcd((k1 - k2).unsigned_abs(), h.unsigned_abs()), 1 << s);
    2f64.powf(1.5 * s as f64) * (g as f64).sqrt()
}

/// Whether `(k₁ - k₂, 2^s)` divides `8h`.
pub fn script_s2_support(h: i64, k1: i64, k2: i64, s: u32) -> bool {
    let g = gcd((k1 - k2).unsigned_abs(), 1 << s);
    (8 * h as i128).rem_euclid(g as i128) == 0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundLemma {
    R1,
    S11,
    S1,
    BS2,
    CS2,
}

impl std::str::FromStr for BoundLemma {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "R1" => BoundLemma::R1,
            "S11" => BoundLemma::S11,
            "S1" => BoundLemma::S1,
            "BS2" => BoundLemma::BS2,
            "CS2" => BoundLemma::CS2,
            _ => return Err(Error::Unknown { kind: "lemma", name: s.into() }),
        })
    }
}

/// Grid for [`check_bounds`]. For `CS2`, `levels` lists the exponents `s`;
/// otherwise it lists primes.
#[derive(Debug, Clone, Serialize)]
pub struct BoundGrid {
    pub levels: Vec<u64>,
    pub samples: usize,
    pub seed: u64,
}

/// Maximum ratio at one grid level.
#[derive(Debug, Clone, Serialize)]
pub struct LevelMax {
    pub level: u64,
    pub max_ratio: f64,
    pub samples: usize,
    pub argmax: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub lemma: BoundLemma,
    pub envelope: String,
    pub max_ratio: f64,
    pub argmax_input: String,
    pub sample_count: usize,
    /// Least-squares slope of `log max_ratio` against `log(level size)`.
    pub exponent_fit: f64,
    pub per_level: Vec<LevelMax>,
    /// Inputs whose ratio exceeds `outlier_factor` times the level median.
    pub outliers: Vec<String>,
}

const OUTLIER_FACTOR: f64 = 8.0;

fn level_max(level: u64, rows: Vec<(f64, String)>) -> (LevelMax, Vec<String>) {
    let mut ratios: Vec<f64> = rows.iter().map(|r| r.0).collect();
    ratios.sort_by(f64::total_cmp);
    let median = ratios.get(ratios.len() / 2).copied().unwrap_or(0.0);
    let outliers = rows
        .iter()
        .filter(|(r, _)| median > 0.0 && *r > OUTLIER_FACTOR * median)
        .map(|(r, s)| format!("{s} ratio={r:.6}"))
        .collect();
    let best = rows
        .iter()
        .fold(None::<&(f64, String)>, |acc, row| match acc {
            Some(a) if a.0 >= row.0 => Some(a),
            _ => Some(row),
        })
        .cloned()
        .unwrap_or((0.0, String::new()));
    (LevelMax { level, max_ratio: best.0, samples: rows.len(), argmax: best.1 }, outliers)
}

/// Representatives `(0, 1, c, d)`, `c <= d`, of 4-tuples modulo translation,
/// scaling and permutation, excluding `𝒱^Δ`.
pub fn b_class_reps(p: u64) -> Vec<[i64; 4]> {
    let mut out = Vec::new();
    for c in 0..p as i64 {
        for d in c..p as i64 {
            let b = [0, 1, c, d];
            if !variety::vdelta_member(&b, p) {
                out.push(b);
            }
        }
    }
    out
}

fn random_b_not_delta<R: Rng>(rng: &mut R, p: u64) -> [i64; 4] {
    loop {
        let b = [0i64, 1, 2, 3].map(|_| rng.gen_range(0..p as i64));
        if !variety::vdelta_member(&b, p) {
            return b;
        }
    }
}

fn r1_level(p: u64, grid: &BoundGrid) -> Result<Vec<(f64, String)>> {
    let table = KlTable::new(&Modulus::new(p)?)?;
    let reps = b_class_reps(p);
    let mut rng = rng::stream(grid.seed, "bounds-R1", p);
    let ls: Vec<Vec<[i64; 2]>> = reps
        .iter()
        .map(|_| {
            (0..grid.samples)
                .map(|_| loop {
                    let l = [rng.gen_range(0..p as i64), rng.gen_range(0..p as i64)];
                    if l[0] != l[1] {
                        break l;
                    }
                })
                .collect()
        })
        .collect();
    let sp = (p as f64).sqrt();
    let rows = exec::map_range(reps.len(), |i| {
        ls[i]
            .iter()
            .map(|&l| (r_sum_with(&table, &reps[i], l).abs() / sp, format!("p={p} b={:?} l={:?}", reps[i], l)))
            .collect::<Vec<_>>()
    });
    Ok(rows.into_iter().flatten().collect())
}

fn s_level(p: u64, grid: &BoundGrid, exponent: f64, label: &str) -> Result<Vec<(f64, String)>> {
    let m = Modulus::new(p)?;
    let mut rng = rng::stream(grid.seed, label, p);
    let inputs: Vec<([i64; 4], [i64; 2])> = (0..grid.samples)
        .map(|_| {
            let b = random_b_not_delta(&mut rng, p);
            (b, [rng.gen_range(0..p as i64), rng.gen_range(0..p as i64)])
        })
        .collect();
    let env = (p as f64).powf(exponent);
    inputs
        .iter()
        .map(|(b, h)| {
            let v = s_sum(b, *h, 1, &m)?.value.norm();
            Ok((v / env, format!("p={p} b={b:?} h={h:?}")))
        })
        .collect()
}

fn bs2_level(p: u64, grid: &BoundGrid) -> Result<Vec<(f64, String)>> {
    let m = Modulus::new(p * p)?;
    let mut rng = rng::stream(grid.seed, "bounds-BS2", p);
    let mut inputs: Vec<([i64; 4], [i64; 2])> = Vec::new();
    for k in 0..grid.samples {
        let b = random_b_not_delta(&mut rng, p);
        // Every fourth sample lands in the h ≡ 0 mod p regime.
        let h = if k % 4 == 3 {
            [p as i64 * rng.gen_range(0..p as i64), p as i64 * rng.gen_range(0..p as i64)]
        } else {
            [rng.gen_range(0..(p * p) as i64), rng.gen_range(0..(p * p) as i64)]
        };
        inputs.push((b, h));
    }
    inputs
        .iter()
        .map(|(b, h)| {
            let regime = variety::regime(b, &[h[0].rem_euclid(p as i64), h[1].rem_euclid(p as i64)], p);
            let env = match regime {
                Regime::Generic => (p as f64).powi(3),
                Regime::HZero | Regime::BadPair => (p as f64).powi(4),
            };
            let v = s_sum(b, *h, 1, &m)?.value.norm();
            Ok((v / env, format!("p={p} b={b:?} h={h:?} regime={regime:?}")))
        })
        .collect()
}

fn cs2_level(s: u32, grid: &BoundGrid) -> Result<Vec<(f64, String)>> {
    let q = 1i64 << s;
    let mut rng = rng::stream(grid.seed, "bounds-CS2", s as u64);
    let mut rows = Vec::new();
    for k in 0..grid.samples {
        let k1 = 2 * rng.gen_range(0..q / 2) + 1;
        // Half of the samples force k₁ ≡ k₂ to a random 2-adic depth.
        let k2 = if k % 2 == 0 {
            let r = rng.gen_range(3..=s);
            (k1 + (1i64 << r) * rng.gen_range(0..q)).rem_euclid(q)
        } else {
            2 * rng.gen_range(0..q / 2) + 1
        };
        let d = 2 * rng.gen_range(0..q / 2) + 1;
        let eps = if rng.gen_bool(0.5) { 1 } else { -1 };
        // Every h at once; the sum is supported on few classes of h.
        let all = script_s2_all_h(k1, k2, d, s, eps)?;
        let (ratio, h) = all
            .iter()
            .enumerate()
            .map(|(h, v)| (v.norm() / script_s2_envelope(h as i64, k1, k2, s), h))
            .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
        rows.push((ratio, format!("s={s} h={h} k1={k1} k2={k2} d={d} eps={eps}")));
    }
    Ok(rows)
}

/// Measures `|sum| / envelope` over a grid and reports the per-level maxima.
pub fn check_bounds(lemma: BoundLemma, grid: &BoundGrid) -> Result<BoundReport> {
    let mut per_level = Vec::new();
    let mut outliers = Vec::new();
    let mut sample_count = 0;
    for &level in &grid.levels {
        if lemma != BoundLemma::CS2 && (!is_prime(level) || level < 3) {
            return Err(Error::Precondition(format!("{level} is not an odd prime")));
        }
        let rows = match lemma {
            BoundLemma::R1 => r1_level(level, grid)?,
            BoundLemma::S11 => s_level(level, grid, 2.5, "bounds-S11")?,
            BoundLemma::S1 => s_level(level, grid, 1.5, "bounds-S1")?,
            BoundLemma::BS2 => bs2_level(level, grid)?,
            BoundLemma::CS2 => {
                if !(2..=20).contains(&level) {
                    return Err(Error::OutOfRange(format!("s = {level}")));
                }
                cs2_level(level as u32, grid)?
            }
        };
        sample_count += rows.len();
        let (lm, out) = level_max(level, rows);
        per_level.push(lm);
        outliers.extend(out);
    }
    let size = |level: u64| if lemma == BoundLemma::CS2 { 2f64.powi(level as i32) } else { level as f64 };
    let pts: Vec<(f64, f64)> = per_level.iter().map(|l| (size(l.level), l.max_ratio)).collect();
    let best = per_level
        .iter()
        .fold(None::<&LevelMax>, |acc, l| match acc {
            Some(a) if a.max_ratio >= l.max_ratio => Some(a),
            _ => Some(l),
        })
        .cloned();
    let envelope = match lemma {
        BoundLemma::R1 => "p^(1/2)",
        BoundLemma::S11 => "p^(5/2)",
        BoundLemma::S1 => "p^(3/2)",
        BoundLemma::BS2 => "p^3 generic, p^4 if h = 0 mod p or explicit bad pair",
        BoundLemma::CS2 => "2^(3s/2) (k1-k2, h, 2^s)^(1/2)",
    };
    Ok(BoundReport {
        lemma,
        envelope: envelope.into(),
        max_ratio: best.as_ref().map_or(0.0, |b| b.max_ratio),
        argmax_input: best.map_or(String::new(), |b| b.argmax),
        sample_count,
        exponent_fit: loglog_slope(&pts).unwrap_or(0.0),
        per_level,
        outliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn r_sum_examples() {
        let one = Modulus::new(1).unwrap();
        assert!(close(r_sum(&[3, 1, 4, 1], [5, 9], &one).unwrap().value, Complex64::new(1.0, 0.0), 1e-15));
        for (b, l, q) in [([0, 1, 2, 3], [1, 2], 5u64), ([1, 1, 2, 2], [1, 1], 7), ([0, 2, 5, 9], [2, 3], 12)] {
            let fast = r_sum(&b, l, &Modulus::new(q).unwrap()).unwrap().value;
            let direct = r_sum_direct(&b, l, q).unwrap().value;
            assert!(close(fast, direct, 1e-9), "b={b:?} l={l:?} q={q}");
        }
    }

    #[test]
    fn r_sum_scaling_identity() {
        // ℜ(b, l) = ℜ(l₁ b, (1, l₂/l₁)) for a unit l₁.
        let p = 13u64;
        let m = Modulus::new(p).unwrap();
        let (b, l) = ([0i64, 1, 3, 7], [5i64, 11]);
        let inv = inv_mod(5, p).unwrap() as i64;
        let lhs = r_sum(&b, l, &m).unwrap().value;
        let rhs = r_sum(&b.map(|x| x * 5), [1, 11 * inv], &m).unwrap().value;
        assert!(close(lhs, rhs, 1e-9));
    }

    #[test]
    fn split_r_examples() {
        let (a, b) = split_r(&[0, 1, 2, 3], [1, 1], 1, 7).unwrap();
        assert!(close(a.value, Complex64::new(1.0, 0.0), 1e-15));
        assert!(close(b.value, r_sum(&[0, 1, 2, 3], [1, 1], &Modulus::new(7).unwrap()).unwrap().value, 1e-12));
        for (bb, l, q1, q2) in [([0, 1, 2, 3], [1, 1], 3u64, 5u64), ([0, 2, 5, 9], [2, 3], 4, 9)] {
            let (x, y) = split_r(&bb, l, q1, q2).unwrap();
            let whole = r_sum(&bb, l, &Modulus::new(q1 * q2).unwrap()).unwrap().value;
            assert!(close(x.value * y.value, whole, 1e-9));
        }
        assert!(matches!(split_r(&[0, 1, 2, 3], [1, 1], 4, 6), Err(Error::NotCoprime(4, 6))));
    }

    #[test]
    fn s_sum_examples() {
        let one = Modulus::new(1).unwrap();
        assert!(close(s_sum(&[0, 1, 2, 3], [4, 5], 1, &one).unwrap().value, Complex64::new(1.0, 0.0), 1e-15));
        for (b, h, d, q) in [
            ([0, 1, 2, 3], [0, 0], 1u64, 5u64),
            ([0, 1, 2, 4], [1, 2], 1, 7),
            ([0, 1, 2, 7], [2, 0], 3, 9),
            ([0, 1, 3, 5], [1, 3], 2, 12),
            ([1, 2, 4, 8], [3, 1], 1, 16),
        ] {
            let m = Modulus::new(q).unwrap();
            let fast = s_sum(&b, h, d, &m).unwrap().value;
            let direct = s_sum_direct(&b, h, d, &m).unwrap().value;
            assert!(close(fast, direct, 1e-9), "b={b:?} h={h:?} d={d} q={q}: {fast} vs {direct}");
        }
        assert!(matches!(s_sum(&[0; 4], [0, 0], 4, &Modulus::new(6).unwrap()), Err(Error::NotDivisor { .. })));
    }

    #[test]
    fn split_s_examples() {
        let b = [0, 1, 2, 3];
        let (one, whole) = split_s(&b, [1, 1], 1, 1, 7).unwrap();
        assert!(close(one.value, Complex64::new(1.0, 0.0), 1e-15));
        assert!(close(whole.value, s_sum(&b, [1, 1], 1, &Modulus::new(7).unwrap()).unwrap().value, 1e-12));
        for (bb, h, d, q1, q2) in [([0, 1, 2, 3], [1, 1], 1u64, 3u64, 5u64), ([0, 1, 2, 7], [2, 0], 3, 9, 5)] {
            let (x, y) = split_s(&bb, h, d, q1, q2).unwrap();
            let whole = s_sum(&bb, h, d, &Modulus::new(q1 * q2).unwrap()).unwrap().value;
            assert!(close(x.value * y.value, whole, 1e-9 * whole.norm().max(1.0)), "{q1}·{q2}");
        }
    }

    #[test]
    fn script_s2_examples() {
        let v = script_s2(0, 1, 1, 1, 6, 1).unwrap().value;
        let direct: f64 = (1..64i128)
            .step_by(2)
            .map(|m| s_eps_value(1, m, 6, 1).unwrap().norm_sqr())
            .sum();
        assert!(close(v, Complex64::new(direct, 0.0), 1e-9));
        let a = script_s2(1, 1, 9, 1, 7, 1).unwrap().value;
        let b = script_s2_direct(1, 1, 9, 1, 7, 1).unwrap().value;
        assert!(close(a, b, 1e-9));
        // (1 - 9, 2^7) = 8 divides 8h for every h, so the support condition is vacuous here.
        assert!(script_s2_support(1, 1, 9, 7));
        assert!(!script_s2_support(1, 1, 33, 7));
        assert!(script_s2(1, 1, 33, 1, 7, 1).unwrap().value.norm() < 1e-9);
        assert!(script_s2(1, 2, 1, 1, 7, 1).is_err());
    }

    #[test]
    fn script_s2_matches_search_oracle() {
        for s in 2..=8u32 {
            let q = 1i64 << s;
            for (k1, k2, h, d) in [(1, 1, 0, 1), (3, 11, 1, 5), (5, 5 + q / 2, 3, 7), (7, 15, 2, 1)] {
                for eps in [1i8, -1] {
                    let a = script_s2(h, k1, k2 % q, d, s, eps).unwrap().value;
                    let b = script_s2_direct(h, k1, k2 % q, d, s, eps).unwrap().value;
                    assert!(close(a, b, 1e-8), "s={s} k=({k1},{k2}) h={h} d={d} eps={eps}");
                }
            }
        }
    }

    #[test]
    fn script_s2_all_h_matches_single() {
        for s in [3u32, 6, 9] {
            let q = 1i64 << s;
            for (k1, k2, d, eps) in [(1, 9, 1, 1i8), (3, 3, 5, -1), (5, 13, 7, 1)] {
                let all = script_s2_all_h(k1, k2 % q, d, s, eps).unwrap();
                for h in 0..q {
                    let one = script_s2(h, k1, k2 % q, d, s, eps).unwrap().value;
                    assert!(close(all[h as usize], one, 1e-8), "s={s} h={h}");
                }
            }
        }
    }

    #[test]
    fn script_s2_vanishes_off_support() {
        for s in 2..=9u32 {
            let q = 1i64 << s;
            for k1 in (1..q.min(32)).step_by(2) {
                for k2 in (1..q).step_by(2).filter(|k| k % 8 == k1 % 8) {
                    for h in 0..q.min(16) {
                        if script_s2_support(h, k1, k2, s) {
                            continue;
                        }
                        let v = script_s2(h, k1, k2, 1, s, 1).unwrap().value.norm();
                        assert!(v < 1e-9, "s={s} k1={k1} k2={k2} h={h}: {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn r_sum_real_for_equal_l() {
        let m = Modulus::new(11).unwrap();
        let v = r_sum_direct(&[0, 1, 3, 4], [2, 2], 11).unwrap().value;
        assert!(v.im.abs() < 1e-9);
        assert!(close(r_sum(&[0, 1, 3, 4], [2, 2], &m).unwrap().value, v, 1e-9));
    }

    #[test]
    fn bounds_report_shapes() {
        let grid = BoundGrid { levels: vec![5, 7, 11], samples: 4, seed: 1 };
        for lemma in [BoundLemma::R1, BoundLemma::S11, BoundLemma::S1, BoundLemma::BS2] {
            let r = check_bounds(lemma, &grid).unwrap();
            assert_eq!(r.per_level.len(), 3);
            assert!(r.max_ratio >= 0.0 && r.max_ratio.is_finite());
            let again = check_bounds(lemma, &grid).unwrap();
            assert_eq!(format!("{r:?}"), format!("{again:?}"));
        }
        let cs = check_bounds(BoundLemma::CS2, &BoundGrid { levels: vec![4, 5, 6], samples: 8, seed: 3 }).unwrap();
        assert!(cs.max_ratio.is_finite());
        assert!("bogus".parse::<BoundLemma>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn split_r_random(b in proptest::array::uniform4(-50i64..50), l in proptest::array::uniform2(-50i64..50),
                          q1 in 1u64..40, q2 in 1u64..40) {
            prop_assume!(gcd(q1, q2) == 1);
            let (x, y) = split_r(&b, l, q1, q2).unwrap();
            let whole = r_sum(&b, l, &Modulus::new(q1 * q2).unwrap()).unwrap().value;
            prop_assert!(close(x.value * y.value, whole, 1e-9));
        }

        #[test]
        fn split_s_random(b in proptest::array::uniform4(-20i64..20), h in proptest::array::uniform2(-20i64..20),
                          q1 in 1u64..12, q2 in 1u64..12, dsel in 0usize..6) {
            prop_assume!(gcd(q1, q2) == 1);
            let ds = divisors(q1 * q2).unwrap();
            let d = ds[dsel % ds.len()];
            let (x, y) = split_s(&b, h, d, q1, q2).unwrap();
            let whole = s_sum(&b, h, d, &Modulus::new(q1 * q2).unwrap()).unwrap().value;
            prop_assert!(close(x.value * y.value, whole, 1e-9 * whole.norm().max(1.0)));
        }
    }
}
