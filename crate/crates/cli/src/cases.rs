//! Single replayable verification cases.
//!
//! A case id is `kind key=value ...`; list values are comma separated.
//! `ksumlab replay '<id>'` re-evaluates one case and prints its outcome, so
//! every failure in a suite report can be reproduced in isolation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use ksumlab_core::bilinear::{self, Family, Shape};
use ksumlab_core::kloosterman::{kl2_direct, kl2_fast, kloosterman_sum, s2_direct_exact, s2_formula};
use ksumlab_core::modcore::{gcd, two_adic_sqrt, two_adic_sqrt_shift_check};
use ksumlab_core::moments::{
    self, b_pm, bpm_trivial_envelope, check_hecke_relations, eta_budget, euler_pq, phi_star, shifted_d, voronoi_check,
    BpmInput, DirichletGroup, EtaRegime, HeckeForm, Length, Sign, SmoothWeight,
};
use ksumlab_core::prodsums::{self, check_bounds, BoundGrid, BoundLemma};
use ksumlab_core::variety::{self, count_k1, count_k_oracle, Form};
use ksumlab_core::kloosterman::KlTable;
use ksumlab_core::Modulus;
use num_complex::Complex64;
use serde::Serialize;

use crate::tolerances as tol;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub case: String,
    pub pass: bool,
    pub expected: String,
    pub observed: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Case {
    /// `kl2_fast` against literal summation.
    Kl2 { q: u64, a: u64 },
    /// `S(a, b; 2^s)` against zero or the closed form.
    Klo2 { s: u32, a: i64, b: i64, exact: bool },
    /// `two_adic_sqrt(u, k)` against a search over `x ≡ 1 mod 4`.
    Sqrt2 { k: u32, u: u64 },
    /// The first-order shift congruence of 2-adic square roots.
    Shift { k: u32, lambda: u32, u: i64, u2: i64, t: i64, t2: i64 },
    /// `ℜ(b, l; q₁q₂)` against the product of its split factors.
    SplitR { b: [i64; 4], l: [i64; 2], q1: u64, q2: u64 },
    /// `𝔖(b, h, d; q₁q₂)` against the product of its split factors.
    SplitS { b: [i64; 4], h: [i64; 2], d: u64, q1: u64, q2: u64 },
    /// Per-level maxima of a bound ratio have a flat log-log profile.
    BoundSlope { lemma: BoundLemma, levels: Vec<u64>, samples: usize, seed: u64 },
    /// Oracle and reduced-system counts of `𝒦(b, h; p)` agree.
    ThmK { p: u64, b: [i64; 4], h: [i64; 2] },
    /// Printed or corrected coefficient identity has zero residual.
    Identity { id: String, form: Form, index: usize },
    /// `Σ λ(n)V(n/N)e(cn/q)` against its Voronoi dual.
    Voronoi { q: u64, c: i64, n: u64, weight: SmoothWeight },
    /// `φ*(q)` against the enumerated primitive characters.
    PhiStar { q: u64 },
    /// Hecke relations on the built-in `Δ` table.
    Hecke { n_max: usize },
    /// `𝒟(ℓ₁, ℓ₂, h, N, M) = 𝒟(ℓ₁/δ, ℓ₂/δ, h/δ, N/δ, M/δ)` bit for bit.
    DDelta { l1: u64, l2: u64, h: i64, n: u64, m: u64 },
    /// `|B^±| ≤ c · N^θ (MN)^{1/2} / q`.
    Bpm { q: u64, m: u64, n: u64, sign: Sign, weight: SmoothWeight, c: f64 },
    /// `P(1), Q(1) > 0` and `P'(1)/P(1)` against a central difference.
    Euler { q: u64 },
    /// Exponent audit at `M = q^u`, `N = q^v`.
    Eta { u: f64, v: f64, theta: f64 },
    /// Scan trial maxima stay below the trivial bound `max |Kl₂|`.
    ScanTrivial { family: Family, q: u64, m_exp: f64, n_exp: f64, trials: usize, seed: u64 },
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn sign_tag(s: Sign) -> &'static str {
    match s {
        Sign::Plus => "plus",
        Sign::Minus => "minus",
    }
}

fn weight_tag(w: SmoothWeight) -> &'static str {
    match w {
        SmoothWeight::Standard => "standard",
        SmoothWeight::Wide => "wide",
        SmoothWeight::Zero => "zero",
    }
}

fn form_tag(f: Form) -> &'static str {
    match f {
        Form::Printed => "printed",
        Form::Corrected => "corrected",
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Case::Kl2 { q, a } => write!(f, "kl2 q={q} a={a}"),
            Case::Klo2 { s, a, b, exact } => write!(f, "klo2 s={s} a={a} b={b} exact={exact}"),
            Case::Sqrt2 { k, u } => write!(f, "sqrt2 k={k} u={u}"),
            Case::Shift { k, lambda, u, u2, t, t2 } => {
                write!(f, "shift k={k} lambda={lambda} u={u} u2={u2} t={t} t2={t2}")
            }
            Case::SplitR { b, l, q1, q2 } => write!(f, "split-r b={} l={} q1={q1} q2={q2}", join(b), join(l)),
            Case::SplitS { b, h, d, q1, q2 } => {
                write!(f, "split-s b={} h={} d={d} q1={q1} q2={q2}", join(b), join(h))
            }
            Case::BoundSlope { lemma, levels, samples, seed } => {
                write!(f, "bound-slope lemma={lemma:?} levels={} samples={samples} seed={seed}", join(levels))
            }
            Case::ThmK { p, b, h } => write!(f, "thmk p={p} b={} h={}", join(b), join(h)),
            Case::Identity { id, form, index } => write!(f, "identity id={id} form={} index={index}", form_tag(*form)),
            Case::Voronoi { q, c, n, weight } => write!(f, "voronoi q={q} c={c} n={n} weight={}", weight_tag(*weight)),
            Case::PhiStar { q } => write!(f, "phistar q={q}"),
            Case::Hecke { n_max } => write!(f, "hecke n_max={n_max}"),
            Case::DDelta { l1, l2, h, n, m } => write!(f, "ddelta l1={l1} l2={l2} h={h} n={n} m={m}"),
            Case::Bpm { q, m, n, sign, weight, c } => write!(
                f,
                "bpm q={q} m={m} n={n} sign={} weight={} c={}",
                sign_tag(*sign),
                weight_tag(*weight),
                crate::report::fmt_float(*c)
            ),
            Case::Euler { q } => write!(f, "euler q={q}"),
            Case::Eta { u, v, theta } => write!(f, "eta u={u} v={v} theta={theta}"),
            Case::ScanTrivial { family, q, m_exp, n_exp, trials, seed } => {
                write!(f, "scan-trivial family={family} q={q} m_exp={m_exp} n_exp={n_exp} trials={trials} seed={seed}")
            }
        }
    }
}

struct Kv(BTreeMap<String, String>);

impl Kv {
    fn raw(&self, key: &str) -> Result<&str> {
        self.0.get(key).map(|s| s.as_str()).ok_or_else(|| anyhow!("missing field '{key}'"))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key)?;
        v.parse().map_err(|_| anyhow!("bad value '{v}' for '{key}'"))
    }

    fn list<T: FromStr, const N: usize>(&self, key: &str) -> Result<[T; N]> {
        let v: Vec<T> = self.vec(key)?;
        let len = v.len();
        v.try_into().map_err(|_| anyhow!("'{key}' needs {N} entries, found {len}"))
    }

    fn vec<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.raw(key)?
            .split(',')
            .map(|x| x.trim().parse().map_err(|_| anyhow!("bad entry '{x}' in '{key}'")))
            .collect()
    }
}

impl FromStr for Case {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split_whitespace();
        let kind = parts.next().ok_or_else(|| anyhow!("empty case id"))?;
        let kv = Kv(parts
            .map(|p| p.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())).ok_or_else(|| anyhow!("bad field '{p}'")))
            .collect::<Result<_>>()?);
        Ok(match kind {
            "kl2" => Case::Kl2 { q: kv.get("q")?, a: kv.get("a")? },
            "klo2" => Case::Klo2 { s: kv.get("s")?, a: kv.get("a")?, b: kv.get("b")?, exact: kv.get("exact")? },
            "sqrt2" => Case::Sqrt2 { k: kv.get("k")?, u: kv.get("u")? },
            "shift" => Case::Shift {
                k: kv.get("k")?,
                lambda: kv.get("lambda")?,
                u: kv.get("u")?,
                u2: kv.get("u2")?,
                t: kv.get("t")?,
                t2: kv.get("t2")?,
            },
            "split-r" => Case::SplitR { b: kv.list("b")?, l: kv.list("l")?, q1: kv.get("q1")?, q2: kv.get("q2")? },
            "split-s" => Case::SplitS {
                b: kv.list("b")?,
                h: kv.list("h")?,
                d: kv.get("d")?,
                q1: kv.get("q1")?,
                q2: kv.get("q2")?,
            },
            "bound-slope" => Case::BoundSlope {
                lemma: kv.raw("lemma")?.parse()?,
                levels: kv.vec("levels")?,
                samples: kv.get("samples")?,
                seed: kv.get("seed")?,
            },
            "thmk" => Case::ThmK { p: kv.get("p")?, b: kv.list("b")?, h: kv.list("h")? },
            "identity" => Case::Identity {
                id: kv.get("id")?,
                form: match kv.raw("form")? {
                    "printed" => Form::Printed,
                    "corrected" => Form::Corrected,
                    other => bail!("unknown identity form '{other}'"),
                },
                index: kv.get("index")?,
            },
            "voronoi" => Case::Voronoi {
                q: kv.get("q")?,
                c: kv.get("c")?,
                n: kv.get("n")?,
                weight: kv.raw("weight")?.parse()?,
            },
            "phistar" => Case::PhiStar { q: kv.get("q")? },
            "hecke" => Case::Hecke { n_max: kv.get("n_max")? },
            "ddelta" => Case::DDelta {
                l1: kv.get("l1")?,
                l2: kv.get("l2")?,
                h: kv.get("h")?,
                n: kv.get("n")?,
                m: kv.get("m")?,
            },
            "bpm" => Case::Bpm {
                q: kv.get("q")?,
                m: kv.get("m")?,
                n: kv.get("n")?,
                sign: kv.raw("sign")?.parse()?,
                weight: kv.raw("weight")?.parse()?,
                c: kv.get("c")?,
            },
            "euler" => Case::Euler { q: kv.get("q")? },
            "eta" => Case::Eta { u: kv.get("u")?, v: kv.get("v")?, theta: kv.get("theta")? },
            "scan-trivial" => Case::ScanTrivial {
                family: kv.raw("family")?.parse()?,
                q: kv.get("q")?,
                m_exp: kv.get("m_exp")?,
                n_exp: kv.get("n_exp")?,
                trials: kv.get("trials")?,
                seed: kv.get("seed")?,
            },
            other => bail!("unknown case kind '{other}'"),
        })
    }
}

fn outcome(case: &Case, pass: bool, expected: impl Into<String>, observed: impl Into<String>) -> Outcome {
    Outcome { case: case.to_string(), pass, expected: expected.into(), observed: observed.into() }
}

/// Eigenvalue range for a `𝒟` evaluation with integer lengths.
pub fn ddelta_range(l1: u64, l2: u64, n: u64, m: u64) -> usize {
    (2 * m / l2.max(1) + 2).max(2 * n / l1.max(1) + 2) as usize
}

/// Largest `|Kl₂(a; q)|` over `a`.
pub fn kl_sup(q: u64) -> Result<f64> {
    let t = KlTable::new(&Modulus::new(q)?)?;
    Ok(t.row().iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

impl Case {
    pub fn evaluate(&self) -> Result<Outcome> {
        match self {
            Case::Kl2 { q, a } => {
                let fast = kl2_fast(*a as i128, &Modulus::new(*q)?).value;
                let direct = kl2_direct(*a as i128, *q)?.value;
                let err = (fast - direct).norm();
                Ok(outcome(
                    self,
                    err < tol::KL_ORACLE,
                    format!("|kl2_fast - kl2_direct| < {:e}", tol::KL_ORACLE),
                    format!("fast={:.12} direct={:.12} error={err:.3e}", fast.re, direct.re),
                ))
            }
            Case::Klo2 { s, a, b, exact } => {
                let q = 1u64 << s;
                let vanish = (a - b).rem_euclid(8) != 0;
                if *exact {
                    let direct = s2_direct_exact(*a as i128, *b as i128, *s)?;
                    if vanish {
                        return Ok(outcome(self, direct.is_zero(), "S(a,b;2^s) = 0 exactly", format!("{} nonzero terms", direct.terms.len())));
                    }
                    let formula = s2_formula(*a as i128, *b as i128, *s, true)?.exact.expect("exact mode");
                    let pass = formula == direct;
                    Ok(outcome(
                        self,
                        pass,
                        "closed form equals S(a,b;2^s) in Z[zeta]",
                        format!("formula={:.12} direct={:.12}", formula.eval(), direct.eval()),
                    ))
                } else {
                    let direct = kloosterman_sum(*a as i128, *b as i128, q)?;
                    let want = if vanish { Complex64::new(0.0, 0.0) } else { s2_formula(*a as i128, *b as i128, *s, false)?.value };
                    let err = (direct - want).norm();
                    Ok(outcome(
                        self,
                        err < tol::KLO2_NUMERIC,
                        if vanish { "|S(a,b;2^s)| < 1e-9".to_string() } else { format!("|S - closed form| < {:e}", tol::KLO2_NUMERIC) },
                        format!("direct={direct:.9} closed_form={want:.9} error={err:.3e}"),
                    ))
                }
            }
            Case::Sqrt2 { k, u } => {
                let r = two_adic_sqrt(*u as i128, *k)?;
                let m = 1u128 << k;
                let roots: Vec<u128> = (0..m / 2).filter(|x| x % 4 == 1 && x * x % m == *u as u128 % m).collect();
                let pass = roots == vec![r];
                Ok(outcome(
                    self,
                    pass,
                    "unique x ≡ 1 mod 4 below 2^{k-1} with x^2 ≡ u mod 2^k",
                    format!("two_adic_sqrt={r} search={roots:?}"),
                ))
            }
            Case::Shift { k, lambda, u, u2, t, t2 } => {
                let ok = two_adic_sqrt_shift_check(*u, *u2, *t, *t2, *k, *lambda)?;
                Ok(outcome(self, ok, "congruence holds mod 2^{2k+lambda-3}", format!("holds={ok}")))
            }
            Case::SplitR { b, l, q1, q2 } => {
                let (x, y) = prodsums::split_r(b, *l, *q1, *q2)?;
                let direct = prodsums::r_sum_direct(b, *l, q1 * q2)?.value;
                let prod = x.value * y.value;
                let err = (prod - direct).norm();
                Ok(outcome(
                    self,
                    err < tol::MULTIPLICATIVITY,
                    format!("|product - direct| < {:e}", tol::MULTIPLICATIVITY),
                    format!("product={prod:.9} direct={direct:.9} error={err:.3e}"),
                ))
            }
            Case::SplitS { b, h, d, q1, q2 } => {
                let (x, y) = prodsums::split_s(b, *h, *d, *q1, *q2)?;
                let direct = split_s_direct(b, *h, *d, q1 * q2)?;
                let prod = x.value * y.value;
                let err = (prod - direct).norm();
                Ok(outcome(
                    self,
                    err < tol::MULTIPLICATIVITY,
                    format!("|product - direct| < {:e}", tol::MULTIPLICATIVITY),
                    format!("product={prod:.9} direct={direct:.9} error={err:.3e}"),
                ))
            }
            Case::BoundSlope { lemma, levels, samples, seed } => {
                let r = check_bounds(*lemma, &BoundGrid { levels: levels.clone(), samples: *samples, seed: *seed })?;
                Ok(outcome(
                    self,
                    r.exponent_fit <= tol::BOUND_SLOPE,
                    format!("log-log slope of per-level max ratio <= {}", tol::BOUND_SLOPE),
                    format!("slope={:.6} max_ratio={:.6} at {}", r.exponent_fit, r.max_ratio, r.argmax_input),
                ))
            }
            Case::ThmK { p, b, h } => {
                let o = count_k_oracle(b, h, *p, false)?;
                let k = count_k1(b, h, *p)?;
                Ok(outcome(
                    self,
                    o == k,
                    "oracle and reduced-system counts agree (factor 1)",
                    format!("oracle=({}, {}) k1=({}, {}) regime={:?}", o.k_full, o.k1, k.k_full, k.k1, o.regime),
                ))
            }
            Case::Identity { id, form, index } => {
                let rs: Vec<_> = variety::verify_identities(id)?.into_iter().filter(|r| r.form == *form).collect();
                let r = rs.get(*index).ok_or_else(|| anyhow!("identity {id} has {} {} checks", rs.len(), form_tag(*form)))?;
                Ok(outcome(self, r.pass, format!("{}: residual = 0", r.check), format!("{} residual terms: {}", r.residual_terms, r.residual)))
            }
            Case::Voronoi { q, c, n, weight } => {
                let need = moments::voronoi_dual_length(*weight, 12, *q, *n).max(2 * n);
                let f = HeckeForm::delta(need as usize);
                let v = voronoi_check(&f, *c, *q, *n, *weight)?;
                Ok(outcome(
                    self,
                    v.residual < tol::VORONOI,
                    format!("|lhs - rhs| < {:e}", tol::VORONOI),
                    format!("lhs={:.10} rhs={:.10} residual={:.3e} dual_terms={}", v.lhs, v.rhs, v.residual, v.dual_terms),
                ))
            }
            Case::PhiStar { q } => {
                let g = DirichletGroup::new(*q)?;
                let (a, b) = (phi_star(*q), g.primitive_count());
                Ok(outcome(self, a == b, "phi_star(q) = number of primitive characters", format!("phi_star={a} enumerated={b}")))
            }
            Case::Hecke { n_max } => {
                let c = check_hecke_relations(&HeckeForm::delta(*n_max));
                let pass = c.exact_failures == 0 && c.deligne_violations.is_empty();
                Ok(outcome(
                    self,
                    pass,
                    "integer Hecke relations exact; |lambda(p)| <= 2",
                    format!(
                        "relations={} exact_failures={} max_residual={:.3e} deligne_violations={:?}",
                        c.relations_checked, c.exact_failures, c.max_residual, c.deligne_violations
                    ),
                ))
            }
            Case::DDelta { l1, l2, h, n, m } => {
                let f = HeckeForm::delta(ddelta_range(1, 1, *n, *m));
                let g = gcd(*l1, *l2);
                if *h % g as i64 != 0 {
                    bail!("delta = {g} does not divide h = {h}");
                }
                let w = (SmoothWeight::Standard, SmoothWeight::Standard);
                let (nl, ml) = (Length::from_integer(*n), Length::from_integer(*m));
                let a = shifted_d(*l1, *l2, *h, nl, ml, &f, &f, w)?;
                let b = shifted_d(l1 / g, l2 / g, h / g as i64, nl / g, ml / g, &f, &f, w)?;
                Ok(outcome(self, a.to_bits() == b.to_bits(), "identical f64 values", format!("lhs={a:e} rhs={b:e} delta={g}")))
            }
            Case::Bpm { q, m, n, sign, weight, c } => {
                let f = HeckeForm::delta(2 * (*m).max(*n) as usize);
                let inp = BpmInput { m: *m, n: *n, q: *q, sign: *sign, w1: *weight, w2: *weight };
                let v = b_pm(&inp, &f, &f)?;
                let env = bpm_trivial_envelope(*m, *n, *q, tol::THETA);
                Ok(outcome(
                    self,
                    v.abs() <= c * env,
                    format!("|B| <= {} * N^theta (MN)^(1/2) / q", crate::report::fmt_float(*c)),
                    format!("B={v:e} envelope={env:e} ratio={:.6}", v.abs() / env),
                ))
            }
            Case::Euler { q } => {
                let primes: Vec<u64> = ksumlab_core::modcore::factorize(*q)?.into_iter().map(|x| x.0).collect();
                let top = primes.iter().map(|p| p * p).max().unwrap_or(1);
                let f = HeckeForm::delta(top as usize);
                let e = euler_pq(*q, &f, &f)?;
                let num = euler_log_derivative_fd(&f, &primes)?;
                let err = (e.p_log_derivative - num).abs();
                let pass = e.p1 > 0.0 && e.q1 > 0.0 && err < 1e-6;
                Ok(outcome(
                    self,
                    pass,
                    "P(1) > 0, Q(1) > 0, |P'/P - central difference| < 1e-6",
                    format!("P={:.9} Q={:.9} dlogP={:.9} fd={num:.9}", e.p1, e.q1, e.p_log_derivative),
                ))
            }
            Case::Eta { u, v, theta } => {
                let b = eta_budget(*u, *v, *theta);
                let pass = match b.regime {
                    EtaRegime::TrivialBound | EtaRegime::Balanced => b.satisfied == Some(true),
                    EtaRegime::Bilinear => b.satisfied == Some(true) && b.flags.is_empty(),
                    EtaRegime::PolyaVinogradov | EtaRegime::OutOfRange => true,
                };
                Ok(outcome(
                    self,
                    pass,
                    "exponent <= -eta in the trivial, balanced and bilinear regimes",
                    format!("regime={:?} exponent={:?} flags={:?}", b.regime, b.exponent, b.flags),
                ))
            }
            Case::ScanTrivial { family, q, m_exp, n_exp, trials, seed } => {
                let shape = Shape { m_exp: *m_exp, n_exp: *n_exp };
                let r = bilinear::scan(*family, &[*q], shape, *trials, *seed)?;
                let row = &r.rows[0];
                let sup = kl_sup(*q)?;
                Ok(outcome(
                    self,
                    row.trial_max_ratio <= sup * (1.0 + 1e-12),
                    "trial max ratio <= max_a |Kl2(a;q)|",
                    format!("ratio={:.9} sup={sup:.9}", row.trial_max_ratio),
                ))
            }
        }
    }
}

/// Unsplit `𝔖` used by the multiplicativity check: the literal triple loop for
/// small moduli, the residue-class evaluation otherwise.
pub const SPLIT_S_LITERAL_MAX: u64 = 60;

fn split_s_direct(b: &[i64; 4], h: [i64; 2], d: u64, q: u64) -> Result<Complex64> {
    let m = Modulus::new(q)?;
    Ok(if q <= SPLIT_S_LITERAL_MAX { prodsums::s_sum_direct(b, h, d, &m)? } else { prodsums::s_sum(b, h, d, &m)? }.value)
}

/// Central difference of `log P(s)` at `s = 1`.
fn euler_log_derivative_fd(f: &HeckeForm, primes: &[u64]) -> Result<f64> {
    let logp = |s: f64| -> Result<f64> {
        let mut acc = 0.0;
        for &p in primes {
            let x = (p as f64).powf(-s);
            let a = f.lambda(p * p)?;
            acc += ((1.0 - a * x + a * x * x - x * x * x) / (1.0 - x * x)).ln();
        }
        Ok(acc)
    };
    let h = 1e-5;
    Ok((logp(1.0 + h)? - logp(1.0 - h)?) / (2.0 * h))
}

/// Parses and evaluates a case id.
pub fn replay(id: &str) -> Result<Outcome> {
    let case: Case = id.parse().with_context(|| format!("parsing case '{id}'"))?;
    case.evaluate()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        let cases = [
            Case::Kl2 { q: 12, a: 5 },
            Case::Klo2 { s: 7, a: 1, b: 9, exact: true },
            Case::Sqrt2 { k: 9, u: 17 },
            Case::Shift { k: 5, lambda: 2, u: 9, u2: 17, t: 3, t2: 7 },
            Case::SplitR { b: [0, 1, 2, 3], l: [1, -2], q1: 3, q2: 5 },
            Case::SplitS { b: [0, 1, 2, 3], h: [1, 2], d: 3, q1: 3, q2: 5 },
            Case::BoundSlope { lemma: BoundLemma::R1, levels: vec![5, 7], samples: 2, seed: 1 },
            Case::ThmK { p: 7, b: [0, 1, 2, 4], h: [1, 3] },
            Case::Identity { id: "c1".into(), form: Form::Printed, index: 0 },
            Case::Voronoi { q: 5, c: 1, n: 20, weight: SmoothWeight::Standard },
            Case::PhiStar { q: 12 },
            Case::Hecke { n_max: 100 },
            Case::DDelta { l1: 2, l2: 4, h: 6, n: 50, m: 40 },
            Case::Bpm { q: 101, m: 10, n: 10, sign: Sign::Minus, weight: SmoothWeight::Wide, c: 0.25 },
            Case::Euler { q: 6 },
            Case::Eta { u: 0.45, v: 1.5, theta: 0.109375 },
            Case::ScanTrivial { family: Family::Prime, q: 101, m_exp: 0.5, n_exp: 0.5, trials: 2, seed: 3 },
        ];
        for c in cases {
            let back: Case = c.to_string().parse().unwrap();
            assert_eq!(back, c, "{c}");
        }
        assert!("nope q=1".parse::<Case>().is_err());
        assert!("kl2 q=1".parse::<Case>().is_err());
    }

    #[test]
    fn replay_small_cases() {
        for id in ["kl2 q=12 a=5", "sqrt2 k=9 u=17", "phistar q=12", "klo2 s=6 a=1 b=9 exact=true", "klo2 s=6 a=1 b=3 exact=false"] {
            assert!(replay(id).unwrap().pass, "{id}");
        }
        assert!(!replay("klo2 s=7 a=1 b=9 exact=true").unwrap().pass);
    }
}
