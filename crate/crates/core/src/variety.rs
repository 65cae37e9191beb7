//! The eleven-variable variety `𝒱₁₁`, its point count `𝒦(b, h; p)`, the
//! reduced count `𝒦₁` over triples `(u, x₁₁, x₂₁)`, and exact verification of
//! the coefficient identities behind the bounded-solution lemmas.
//!
//! A point is `v = (u, x₁, x₂, x₁₁, …, x₂₄)` with
//! `x_i x_ij = (u + b_j) x̄_ij`, `Σ_j x_ij + h_i = 0`, `Σ_{i,j} x̄_ij = 0`,
//! `x₁ ≠ x₂` and every `x_i`, `x_ij`, `u + b_j` nonzero.
//!
//! The symbolic side works with [`PolyZ`], a sparse integer polynomial in at
//! most six variables. Sign products put `X, Y, Z, W` (the square roots of
//! `x, y, z, w`) in slots 0..4 and the parameter `t` in slot 5; coefficient
//! polynomials put `u` in slot 0, `b₁..b₄` in slots 1 to 4 and `t` in slot 5.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::exec;
use crate::modcore::{inv_mod, is_prime, reduce};
use crate::{Error, Result};

pub const NVARS: usize = 6;
pub type Exps = [u8; NVARS];

/// Slot of the parameter `t`.
pub const T: usize = 5;

/// Sparse polynomial with exact integer coefficients; zero terms are never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PolyZ {
    terms: BTreeMap<Exps, BigInt>,
}

impl PolyZ {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: impl Into<BigInt>) -> Self {
        Self::monomial([0; NVARS], c)
    }

    pub fn var(i: usize) -> Self {
        let mut e = [0; NVARS];
        e[i] = 1;
        Self::monomial(e, 1)
    }

    pub fn monomial(exps: Exps, c: impl Into<BigInt>) -> Self {
        let c = c.into();
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(exps, c);
        }
        PolyZ { terms }
    }

    fn from_map(map: HashMap<Exps, BigInt>) -> Self {
        PolyZ { terms: map.into_iter().filter(|(_, c)| !c.is_zero()).collect() }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exps, &BigInt)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &PolyZ) -> PolyZ {
        let mut terms = self.terms.clone();
        for (e, c) in &other.terms {
            let entry = terms.entry(*e).or_insert_with(BigInt::zero);
            *entry += c;
            if entry.is_zero() {
                terms.remove(e);
            }
        }
        PolyZ { terms }
    }

    pub fn neg(&self) -> PolyZ {
        PolyZ { terms: self.terms.iter().map(|(e, c)| (*e, -c)).collect() }
    }

    pub fn sub(&self, other: &PolyZ) -> PolyZ {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &PolyZ) -> PolyZ {
        let mut acc: HashMap<Exps, BigInt> = HashMap::with_capacity(self.len() * other.len());
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let mut e = *ea;
                for k in 0..NVARS {
                    e[k] = e[k].checked_add(eb[k]).expect("exponent overflow");
                }
                *acc.entry(e).or_insert_with(BigInt::zero) += ca * cb;
            }
        }
        Self::from_map(acc)
    }

    pub fn scale(&self, k: &BigInt) -> PolyZ {
        if k.is_zero() {
            return PolyZ::zero();
        }
        PolyZ { terms: self.terms.iter().map(|(e, c)| (*e, c * k)).collect() }
    }

    pub fn pow(&self, n: u32) -> PolyZ {
        let mut result = PolyZ::constant(1);
        let mut base = self.clone();
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                result = result.mul(&base);
            }
            n >>= 1;
            if n > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    /// `P(…, -v, …)`.
    pub fn negate_var(&self, v: usize) -> PolyZ {
        PolyZ {
            terms: self
                .terms
                .iter()
                .map(|(e, c)| (*e, if e[v] % 2 == 1 { -c } else { c.clone() }))
                .collect(),
        }
    }

    /// Replaces `v²` by `v`; fails on an odd exponent.
    pub fn halve_var(&self, v: usize) -> Result<PolyZ> {
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            if e[v] % 2 == 1 {
                return Err(Error::Internal(format!("odd exponent {} in slot {v}", e[v])));
            }
            let mut e2 = *e;
            e2[v] /= 2;
            terms.insert(e2, c.clone());
        }
        Ok(PolyZ { terms })
    }

    pub fn degree_in(&self, v: usize) -> u32 {
        self.terms.keys().map(|e| e[v] as u32).max().unwrap_or(0)
    }

    /// Coefficient of `v^k`, as a polynomial free of `v`.
    pub fn coeff_of(&self, v: usize, k: u32) -> PolyZ {
        PolyZ {
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| e[v] as u32 == k)
                .map(|(e, c)| {
                    let mut e2 = *e;
                    e2[v] = 0;
                    (e2, c.clone())
                })
                .collect(),
        }
    }

    /// `P` with slot `v` replaced by `r`.
    pub fn substitute(&self, v: usize, r: &PolyZ) -> PolyZ {
        let deg = self.degree_in(v);
        let mut powers = vec![PolyZ::constant(1)];
        for k in 1..=deg as usize {
            powers.push(powers[k - 1].mul(r));
        }
        let mut acc = PolyZ::zero();
        for k in 0..=deg {
            let c = self.coeff_of(v, k);
            if !c.is_zero() {
                acc = acc.add(&c.mul(&powers[k as usize]));
            }
        }
        acc
    }

    /// `den^K · P(…, num/den, …)` with `K = deg_v P`, returned with `K`.
    pub fn substitute_ratio(&self, v: usize, num: &PolyZ, den: &PolyZ) -> (PolyZ, u32) {
        let deg = self.degree_in(v);
        let mut acc = PolyZ::zero();
        for k in 0..=deg {
            let c = self.coeff_of(v, k);
            if !c.is_zero() {
                acc = acc.add(&c.mul(&num.pow(k)).mul(&den.pow(deg - k)));
            }
        }
        (acc, deg)
    }

    pub fn eval_mod(&self, vals: &[u64; NVARS], p: u64) -> u64 {
        let pb = BigInt::from(p);
        let mut acc = BigInt::zero();
        for (e, c) in &self.terms {
            let mut term = c % &pb;
            for k in 0..NVARS {
                if e[k] > 0 {
                    term = term * BigInt::from(vals[k]).modpow(&BigInt::from(e[k]), &pb) % &pb;
                }
            }
            acc = (acc + term) % &pb;
        }
        let r = ((acc % &pb) + &pb) % &pb;
        r.try_into().expect("residue fits u64")
    }

    /// Human-readable form using the given slot names.
    pub fn render(&self, names: &[&str; NVARS]) -> String {
        if self.is_zero() {
            return "0".into();
        }
        let mut out = String::new();
        for (i, (e, c)) in self.terms.iter().rev().enumerate() {
            let sign = if c.is_negative() { "-" } else if i > 0 { "+" } else { "" };
            let mag = c.abs();
            let mono: Vec<String> = (0..NVARS)
                .filter(|&k| e[k] > 0)
                .map(|k| if e[k] == 1 { names[k].to_string() } else { format!("{}^{}", names[k], e[k]) })
                .collect();
            if i > 0 {
                out.push(' ');
            }
            out.push_str(sign);
            if mono.is_empty() || !mag.is_one() {
                let _ = write!(out, "{mag}");
                if !mono.is_empty() {
                    out.push('*');
                }
            }
            out.push_str(&mono.join("*"));
        }
        out
    }
}

pub const FORM_NAMES: [&str; NVARS] = ["x", "y", "z", "w", "_", "t"];
pub const COEFF_NAMES: [&str; NVARS] = ["u", "b1", "b2", "b3", "b4", "t"];

/// Which sign combinations enter a sign product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SignMode {
    /// Sign of the first argument fixed: 8 factors.
    Eight,
    /// All 16 sign combinations.
    Sixteen,
}

/// `Π Q(±x^{1/2}, ±y^{1/2}, ±z^{1/2}, ±w^{1/2})` for `Q` given in the square-root
/// variables in slots 0..4.
///
/// Each flip squares the running product against its reflection, so the
/// result is even in every flipped slot; every exponent is checked before
/// halving.
pub fn sign_product(q: &PolyZ, mode: SignMode) -> Result<PolyZ> {
    let flips: &[usize] = match mode {
        SignMode::Eight => &[1, 2, 3],
        SignMode::Sixteen => &[0, 1, 2, 3],
    };
    let mut g = q.clone();
    for &v in flips {
        g = g.mul(&g.negate_var(v));
    }
    for v in 0..4 {
        g = g.halve_var(v)?;
    }
    Ok(g)
}

/// Sign product of a ratio `num / den`, numerator and denominator separately.
pub fn sign_product_rational(num: &PolyZ, den: &PolyZ, mode: SignMode) -> Result<(PolyZ, PolyZ)> {
    Ok((sign_product(num, mode)?, sign_product(den, mode)?))
}

const fn binom_table() -> [[u64; 65]; 65] {
    let mut t = [[0u64; 65]; 65];
    let mut n = 0;
    while n <= 64 {
        t[n][0] = 1;
        let mut k = 1;
        while k <= n {
            t[n][k] = t[n - 1][k - 1] + if k < n { t[n - 1][k] } else { 0 };
            k += 1;
        }
        n += 1;
    }
    t
}

static BINOM: [[u64; 65]; 65] = binom_table();

/// Coefficient of `u^k` in `F(u + b₁, u + b₂, u + b₃, u + b₄)`, as a polynomial in
/// `b` (slots 1..5) and `t` (slot 5).
pub fn u_coefficient(f: &PolyZ, k: u32) -> PolyZ {
    let mut acc: HashMap<Exps, BigInt> = HashMap::new();
    for (m, c) in f.terms() {
        let deg: u32 = m[..4].iter().map(|&x| x as u32).sum();
        if deg < k {
            continue;
        }
        let e = deg - k;
        let mm = [m[0] as u32, m[1] as u32, m[2] as u32, m[3] as u32];
        for e0 in 0..=mm[0].min(e) {
            for e1 in 0..=mm[1].min(e - e0) {
                for e2 in 0..=mm[2].min(e - e0 - e1) {
                    let e3 = e - e0 - e1 - e2;
                    if e3 > mm[3] {
                        continue;
                    }
                    let es = [e0, e1, e2, e3];
                    let mult: BigInt = (0..4).map(|j| BigInt::from(BINOM[mm[j] as usize][es[j] as usize])).product();
                    let key = [0, e0 as u8, e1 as u8, e2 as u8, e3 as u8, m[T]];
                    *acc.entry(key).or_insert_with(BigInt::zero) += c * mult;
                }
            }
        }
    }
    PolyZ::from_map(acc)
}

/// `(xyzw)^n F(1/x, 1/y, 1/z, 1/w)`; fails if some exponent exceeds `n`.
pub fn invert_arguments(f: &PolyZ, n: u8) -> Result<PolyZ> {
    let mut terms = BTreeMap::new();
    for (e, c) in f.terms() {
        let mut e2 = *e;
        for k in 0..4 {
            e2[k] = n.checked_sub(e[k]).ok_or_else(|| Error::Internal("exponent above inversion degree".into()))?;
        }
        terms.insert(e2, c.clone());
    }
    Ok(PolyZ { terms })
}

fn b(j: usize) -> PolyZ {
    PolyZ::var(j)
}

fn lin(coeffs: [i64; 4]) -> PolyZ {
    (0..4).fold(PolyZ::zero(), |acc, j| acc.add(&b(j + 1).scale(&BigInt::from(coeffs[j]))))
}

fn cst(c: i64) -> PolyZ {
    PolyZ::constant(c)
}

fn big(s: &str) -> BigInt {
    s.parse().expect("literal")
}

/// `64xyzw - ((x + y - z - w)² - 4(xy + zw))²` in slots 0..4.
pub fn displayed_quartic() -> PolyZ {
    let (x, y, z, w) = (PolyZ::var(0), PolyZ::var(1), PolyZ::var(2), PolyZ::var(3));
    let s = x.add(&y).sub(&z).sub(&w);
    let inner = s.mul(&s).sub(&x.mul(&y).add(&z.mul(&w)).scale(&BigInt::from(4)));
    x.mul(&y).mul(&z).mul(&w).scale(&BigInt::from(64)).sub(&inner.mul(&inner))
}

/// `XYZW · X_i / X_j` as an exponent vector.
fn ratio_mono(i: usize, j: usize) -> Exps {
    let mut e = [1, 1, 1, 1, 0, 0];
    e[i] += 1;
    e[j] -= 1;
    e
}

fn ratio_sum(pairs: &[(usize, usize)]) -> PolyZ {
    pairs.iter().fold(PolyZ::zero(), |acc, &(i, j)| {
        acc.add(&PolyZ::monomial(ratio_mono(i, j), 1)).add(&PolyZ::monomial(ratio_mono(j, i), 1))
    })
}

/// Which of `Q₁, Q₂ ∈ {x ± y ± z ± w}` differ: in two signs (`z, w`) or one (`w`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SignCase {
    Two,
    One,
}

/// Numerators over `XYZW` of the two parts of `h̄₁Q₁Q₁(x⁻¹) + h̄₂Q₂Q₂(x⁻¹) = (h̄₁+h̄₂)A + (h̄₁-h̄₂)B`,
/// in the square-root variables.
pub fn case_parts(case: SignCase) -> (PolyZ, PolyZ) {
    let four = PolyZ::monomial([1, 1, 1, 1, 0, 0], 4);
    match case {
        SignCase::Two => (four.add(&ratio_sum(&[(0, 1), (2, 3)])), ratio_sum(&[(0, 2), (0, 3), (1, 2), (1, 3)])),
        SignCase::One => (
            four.add(&ratio_sum(&[(0, 1), (0, 2), (1, 2)])),
            ratio_sum(&[(0, 3), (1, 3), (2, 3)]),
        ),
    }
}

/// Numerator of `Q` up to the unit `h̄₁ - h̄₂`: `tA + B`.
pub fn case_numerator_t(case: SignCase) -> PolyZ {
    let (a, bpart) = case_parts(case);
    a.mul(&PolyZ::var(T)).add(&bpart)
}

/// Identity groups accepted by [`verify_identities`].
pub const IDENTITY_IDS: [&str; 10] = ["quartic", "c1", "c0", "c9", "c8", "c24", "c22", "c8deg8", "c32", "c28"];

#[derive(Debug, Clone, Serialize)]
pub struct IdentityResult {
    pub id: String,
    /// `printed` checks the statement as displayed; `corrected` checks the
    /// amended statement where the displayed one fails.
    pub form: Form,
    pub check: String,
    pub pass: bool,
    pub residual_terms: usize,
    /// Rendered residual, truncated.
    pub residual: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    Printed,
    Corrected,
}

fn result(id: &str, form: Form, check: &str, residual: &PolyZ, names: &[&str; NVARS]) -> IdentityResult {
    let mut text = residual.render(names);
    if text.len() > 400 {
        text.truncate(400);
        text.push_str(" …");
    }
    IdentityResult {
        id: id.into(),
        form,
        check: check.into(),
        pass: residual.is_zero(),
        residual_terms: residual.len(),
        residual: text,
    }
}

/// Sum of the coefficients `c_k` for `k` in `range`, each squared term-wise into
/// a single residual (zero iff every coefficient vanishes).
fn vanishing(f: &PolyZ, range: std::ops::RangeInclusive<u32>) -> PolyZ {
    range.fold(PolyZ::zero(), |acc, k| {
        let c = u_coefficient(f, k);
        // Tag each coefficient with a distinct power of u so they cannot cancel.
        let tagged = PolyZ {
            terms: c
                .terms
                .into_iter()
                .map(|(mut e, v)| {
                    e[0] = k as u8;
                    (e, v)
                })
                .collect(),
        };
        acc.add(&tagged)
    })
}

/// Same as [`vanishing`] after substituting `t = num/den`.
fn vanishing_at(f: &PolyZ, range: std::ops::RangeInclusive<u32>, num: &PolyZ, den: &PolyZ) -> PolyZ {
    range.fold(PolyZ::zero(), |acc, k| {
        let (c, _) = u_coefficient(f, k).substitute_ratio(T, num, den);
        let tagged = PolyZ {
            terms: c
                .terms
                .into_iter()
                .map(|(mut e, v)| {
                    e[0] = k as u8;
                    (e, v)
                })
                .collect(),
        };
        acc.add(&tagged)
    })
}

/// Which part of `Q` survives: `A` alone (`h̄₁ = h̄₂`), `B` alone (`h̄₁ = -h̄₂`),
/// or `tA + B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    A,
    B,
    T,
}

struct SymbolicContext {
    quartic: PolyZ,
    products: [std::sync::OnceLock<PolyZ>; 6],
}

impl SymbolicContext {
    fn new() -> Self {
        SymbolicContext { quartic: displayed_quartic(), products: Default::default() }
    }

    /// 16-pattern sign product for the given case and part, built once.
    fn product(&self, case: SignCase, part: Part) -> Result<&PolyZ> {
        let idx = (case as usize) * 3 + part as usize;
        if let Some(f) = self.products[idx].get() {
            return Ok(f);
        }
        let (a, bpart) = case_parts(case);
        let q = match part {
            Part::A => a,
            Part::B => bpart,
            Part::T => case_numerator_t(case),
        };
        let f = sign_product(&q, SignMode::Sixteen)?;
        Ok(self.products[idx].get_or_init(|| f))
    }
}

fn sigma_factors() -> (PolyZ, PolyZ, PolyZ) {
    (lin([1, 1, -1, -1]), lin([1, -1, 1, -1]), lin([1, -1, -1, 1]))
}

fn reduce_b4(p: &PolyZ) -> PolyZ {
    // b₄ = b₁ + b₂ - b₃.
    p.substitute(4, &lin([1, 1, -1, 0]))
}

fn identity_group(ctx: &SymbolicContext, id: &str) -> Result<Vec<IdentityResult>> {
    use Form::{Corrected, Printed};
    let (sg, t1, t2) = sigma_factors();
    let d12 = lin([1, -1, 0, 0]);
    let d34 = lin([0, 0, 1, -1]);
    let s = d12.pow(2).add(&d34.pow(2));
    let dd = d12.mul(&d34);
    let tv = PolyZ::var(T);
    let n = &COEFF_NAMES;
    let mut out = Vec::new();
    match id {
        "quartic" => {
            let f = sign_product(&lin_form([1, 1, 1, 1]), SignMode::Eight)?;
            out.push(result(id, Printed, "8-pattern product of x+y+z+w = 64xyzw - ((x+y-z-w)^2 - 4(xy+zw))^2", &f.sub(&ctx.quartic), &FORM_NAMES));
            out.push(result(id, Corrected, "8-pattern product of x+y+z+w = -(64xyzw - ((x+y-z-w)^2 - 4(xy+zw))^2)", &f.add(&ctx.quartic), &FORM_NAMES));
        }
        "c1" => {
            let f = &ctx.quartic;
            out.push(result(id, Printed, "F(u+b) is linear: c4..c2 vanish", &vanishing(f, 2..=4), n));
            let expect = sg.mul(&t1).mul(&t2).scale(&BigInt::from(8));
            out.push(result(id, Printed, "c1 = 8(b1+b2-b3-b4)(b1-b2+b3-b4)(b1-b2-b3+b4)", &u_coefficient(f, 1).sub(&expect), n));
        }
        "c0" => {
            let c0 = reduce_b4(&u_coefficient(&ctx.quartic, 0));
            let expect = lin([1, 0, -1, 0]).pow(2).mul(&lin([0, 1, -1, 0]).pow(2)).scale(&BigInt::from(-16));
            out.push(result(id, Printed, "c0 = -16(b1-b3)^2(b2-b3)^2 on b1+b2=b3+b4", &c0.sub(&expect), n));
        }
        "c9" => {
            let g = invert_arguments(&ctx.quartic, 4)?;
            out.push(result(id, Printed, "inverted form has degree 9: c12..c10 vanish", &vanishing(&g, 10..=12), n));
            let expect = sg.mul(&t1).mul(&t2).scale(&BigInt::from(-8));
            out.push(result(id, Printed, "c9 = -8(b1+b2-b3-b4)(b1-b2+b3-b4)(b1-b2-b3+b4)", &u_coefficient(&g, 9).sub(&expect), n));
        }
        "c8" => {
            let g = invert_arguments(&ctx.quartic, 4)?;
            let c8 = reduce_b4(&u_coefficient(&g, 8));
            let expect = lin([1, 0, -1, 0]).pow(2).mul(&lin([0, 1, -1, 0]).pow(2)).scale(&BigInt::from(48));
            out.push(result(id, Printed, "c8 = 48(b1-b3)^2(b2-b3)^2 on b1+b2=b3+b4", &c8.sub(&expect), n));
        }
        "c24" => {
            let expect = s.pow(4).scale(&BigInt::from(1048576));
            let fb = ctx.product(SignCase::Two, Part::B)?;
            out.push(result(id, Printed, "two signs, h1bar+h2bar=0: c24 = 1048576((b1-b2)^2+(b3-b4)^2)^4", &u_coefficient(fb, 24).sub(&expect), n));
            let fa = ctx.product(SignCase::Two, Part::A)?;
            out.push(result(id, Corrected, "two signs, h1bar-h2bar=0: c32..c25 vanish", &vanishing(fa, 25..=32), n));
            out.push(result(id, Corrected, "two signs, h1bar-h2bar=0: c24 = 1048576((b1-b2)^2+(b3-b4)^2)^4", &u_coefficient(fa, 24).sub(&expect), n));
            let ft = ctx.product(SignCase::Two, Part::T)?;
            out.push(result(id, Printed, "two signs, general t: c32..c25 vanish", &vanishing(ft, 25..=32), n));
            let last = s.pow(2).mul(&tv.pow(2)).sub(&dd.pow(2).scale(&BigInt::from(4)));
            let expect = tv.pow(8).mul(&tv.pow(2).sub(&cst(1)).pow(2)).mul(&last.pow(2)).scale(&BigInt::from(1048576));
            out.push(result(id, Printed, "two signs, general t: c24 = 1048576 t^8 (t^2-1)^2 (S^2 t^2 - 4D^2)^2", &u_coefficient(ft, 24).sub(&expect), n));
        }
        "c22" => {
            let ft = ctx.product(SignCase::Two, Part::T)?;
            let core = d12.pow(12).mul(&d34.pow(12)).mul(&sg.pow(2)).mul(&t1.pow(6)).mul(&t2.pow(6)).scale(&BigInt::from(4294967296u64));
            for sign in [1i64, -1] {
                let label = if sign > 0 { "+" } else { "-" };
                let num = dd.scale(&BigInt::from(2 * sign));
                out.push(result(id, Printed, &format!("t = {label}2D/S: c23 vanishes"), &vanishing_at(ft, 23..=23, &num, &s), n));
                // S^k c22(2D/S) against the closed form times S^k.
                let (c22, k) = u_coefficient(ft, 22).substitute_ratio(T, &num, &s);
                out.push(result(id, Printed, &format!("t = {label}2D/S: c22 = 2^32 (b1-b2)^12 (b3-b4)^12 σ^2 τ1^6 τ2^6 / S"), &c22.sub(&core.mul(&s.pow(k - 1))), n));
                out.push(result(id, Corrected, &format!("t = {label}2D/S: c22 = 2^32 (b1-b2)^12 (b3-b4)^12 σ^2 τ1^6 τ2^6 / S^14"), &c22.sub(&core.mul(&s.pow(k - 14))), n));
            }
        }
        "c8deg8" => {
            let expect = d12.pow(8).mul(&sg.pow(8)).mul(&d34.pow(8));
            let fa = ctx.product(SignCase::Two, Part::A)?;
            out.push(result(id, Printed, "two signs, h1bar-h2bar=0: c32..c9 vanish", &vanishing(fa, 9..=32), n));
            out.push(result(id, Printed, "two signs, h1bar-h2bar=0: c8 = (b1-b2)^8 (b1+b2-b3-b4)^8 (b3-b4)^8", &u_coefficient(fa, 8).sub(&expect), n));
            let fb = ctx.product(SignCase::Two, Part::B)?;
            out.push(result(id, Corrected, "two signs, h1bar+h2bar=0: c32..c9 vanish", &vanishing(fb, 9..=32), n));
            out.push(result(id, Corrected, "two signs, h1bar+h2bar=0: c8 = (b1-b2)^8 (b1+b2-b3-b4)^8 (b3-b4)^8", &u_coefficient(fb, 8).sub(&expect), n));
        }
        "c32" => {
            let ft = ctx.product(SignCase::One, Part::T)?;
            let expect = tv.pow(2).sub(&cst(1)).pow(6).mul(&tv.pow(2).scale(&BigInt::from(25)).sub(&cst(9)).pow(2)).scale(&BigInt::from(65536));
            out.push(result(id, Printed, "one sign, general t: c32 = 65536 (t^2-1)^6 (25t^2-9)^2", &u_coefficient(ft, 32).sub(&expect), n));
            let fa = ctx.product(SignCase::One, Part::A)?;
            let fb = ctx.product(SignCase::One, Part::B)?;
            out.push(result(id, Printed, "one sign, h1bar+h2bar=0: c32 = 40960000", &u_coefficient(fb, 32).sub(&cst(40960000)), n));
            out.push(result(id, Printed, "one sign, h1bar-h2bar=0: c32 = 5308416", &u_coefficient(fa, 32).sub(&cst(5308416)), n));
            out.push(result(id, Corrected, "one sign, h1bar-h2bar=0: c32 = 40960000", &u_coefficient(fa, 32).sub(&cst(40960000)), n));
            out.push(result(id, Corrected, "one sign, h1bar+h2bar=0: c32 = 5308416", &u_coefficient(fb, 32).sub(&cst(5308416)), n));
        }
        "c28" => {
            let ft = ctx.product(SignCase::One, Part::T)?;
            let quad = quadric_poly();
            let (cn, cd) = (big("618475290624"), big("6103515625"));
            for sign in [3i64, -3] {
                let (num, den) = (cst(sign), cst(5));
                let label = if sign > 0 { "+3/5" } else { "-3/5" };
                out.push(result(id, Printed, &format!("one sign, t = {label}: c32..c29 vanish"), &vanishing_at(ft, 29..=32, &num, &den), n));
                let (c28, k) = u_coefficient(ft, 28).substitute_ratio(T, &num, &den);
                // 5^k c28 = 5^k (cn/cd) quad²; cd must divide 5^k cn exactly.
                let lhs_scale = BigInt::from(5).pow(k) * &cn;
                if !(&lhs_scale % &cd).is_zero() {
                    return Err(Error::Internal("denominator does not clear".into()));
                }
                let expect = quad.pow(2).scale(&(lhs_scale / &cd));
                out.push(result(id, Printed, &format!("one sign, t = {label}: c28 = (618475290624/6103515625) quadric^2"), &c28.sub(&expect), n));
            }
        }
        other => return Err(Error::Unknown { kind: "identity", name: other.into() }),
    }
    Ok(out)
}

/// `Σ c_j X_j` in the form slots.
fn lin_form(c: [i64; 4]) -> PolyZ {
    (0..4).fold(PolyZ::zero(), |acc, j| acc.add(&PolyZ::var(j).scale(&BigInt::from(c[j]))))
}

/// `b₁² - 6b₁b₂ + b₂² - 6b₁b₃ - 6b₂b₃ + b₃² + 10b₁b₄ + 10b₂b₄ + 10b₃b₄ - 15b₄²`.
pub fn quadric_poly() -> PolyZ {
    let q = |i: usize, j: usize, c: i64| b(i).mul(&b(j)).scale(&BigInt::from(c));
    [
        q(1, 1, 1),
        q(1, 2, -6),
        q(2, 2, 1),
        q(1, 3, -6),
        q(2, 3, -6),
        q(3, 3, 1),
        q(1, 4, 10),
        q(2, 4, 10),
        q(3, 4, 10),
        q(4, 4, -15),
    ]
    .iter()
    .fold(PolyZ::zero(), |acc, t| acc.add(t))
}

/// Runs the identity checks for one group id or `"all"`.
pub fn verify_identities(which: &str) -> Result<Vec<IdentityResult>> {
    let ids: Vec<&str> = if which == "all" {
        IDENTITY_IDS.to_vec()
    } else if IDENTITY_IDS.contains(&which) {
        vec![which]
    } else {
        return Err(Error::Unknown { kind: "identity", name: which.into() });
    };
    let ctx = SymbolicContext::new();
    let groups = exec::map_slice(&ids, |id| identity_group(&ctx, id));
    let mut out = Vec::new();
    for g in groups {
        out.extend(g?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Counting over F_p.

/// True iff every value of `b mod p` occurs an even number of times.
pub fn vdelta_member(b: &[i64; 4], p: u64) -> bool {
    let r = b.map(|x| reduce(x as i128, p));
    r.iter().all(|x| r.iter().filter(|y| *y == x).count() % 2 == 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    HZero,
    BadPair,
    Generic,
}

/// Arithmetic helpers modulo a fixed prime.
struct Fp {
    p: u64,
}

impl Fp {
    fn r(&self, x: i128) -> u64 {
        reduce(x, self.p)
    }
    fn mul(&self, a: u64, b: u64) -> u64 {
        (a as u128 * b as u128 % self.p as u128) as u64
    }
    fn add(&self, a: u64, b: u64) -> u64 {
        (a + b) % self.p
    }
    fn sub(&self, a: u64, b: u64) -> u64 {
        (a + self.p - b) % self.p
    }
    fn neg(&self, a: u64) -> u64 {
        (self.p - a) % self.p
    }
    fn inv(&self, a: u64) -> u64 {
        inv_mod(a, self.p).expect("nonzero residue modulo a prime")
    }
}

/// One of the explicit bad components: a `b`-polynomial and a linear condition on `(h̄₁, h̄₂)`.
#[derive(Debug, Clone, Serialize)]
pub struct BadComponent {
    pub name: String,
    pub b_vanishes: bool,
    pub h_condition: bool,
}

/// Every component of the assembled bad locus, evaluated at `(b, h)` mod `p`.
/// The `h` conditions are `false` unless `h₁h₂ ≢ 0`.
pub fn bad_components(b: &[i64; 4], h: &[i64; 2], p: u64) -> Vec<BadComponent> {
    let f = Fp { p };
    let bb = b.map(|x| f.r(x as i128));
    let hs = h.map(|x| f.r(x as i128));
    let hbar = if hs[0] != 0 && hs[1] != 0 { Some((f.inv(hs[0]), f.inv(hs[1]))) } else { None };
    let (plus, minus) = hbar.map_or((0, 0), |(a, c)| (f.add(a, c), f.sub(a, c)));
    let mut out = Vec::new();
    for (i, j, k, l) in [(0, 1, 2, 3), (0, 2, 1, 3), (0, 3, 1, 2)] {
        let d1 = f.sub(bb[i], bb[j]);
        let d2 = f.sub(bb[k], bb[l]);
        let sg = f.sub(f.add(bb[i], bb[j]), f.add(bb[k], bb[l]));
        let s = f.add(f.mul(d1, d1), f.mul(d2, d2));
        let dd = f.mul(d1, d2);
        let tag = format!("{{{},{}}}{{{},{}}}", i + 1, j + 1, k + 1, l + 1);
        out.push(BadComponent {
            name: format!("two-sign {tag}: S = 0, h1bar = h2bar"),
            b_vanishes: s == 0,
            h_condition: hbar.is_some() && minus == 0,
        });
        out.push(BadComponent {
            name: format!("two-sign {tag}: d1·σ·d2 = 0, h1bar = -h2bar"),
            b_vanishes: f.mul(f.mul(d1, sg), d2) == 0,
            h_condition: hbar.is_some() && plus == 0,
        });
        // t = (h̄₁+h̄₂)/(h̄₁-h̄₂) = ±2D/S, so (h̄₁+h̄₂)S = ±2D(h̄₁-h̄₂) with t ∉ {0, ∞}.
        let lhs = f.mul(plus, s);
        let rhs = f.mul(f.mul(2, dd), minus);
        out.push(BadComponent {
            name: format!("two-sign {tag}: σ(d1+d2)(d1-d2) = 0, t = ±2D/S"),
            b_vanishes: f.mul(f.mul(sg, f.add(d1, d2)), f.sub(d1, d2)) == 0,
            h_condition: hbar.is_some() && plus != 0 && minus != 0 && s != 0 && (lhs == rhs || lhs == f.neg(rhs)),
        });
    }
    for w in 0..4 {
        let o: Vec<u64> = (0..4).filter(|&x| x != w).map(|x| bb[x]).collect();
        let q = quadric_mod(&f, [o[0], o[1], o[2], bb[w]]);
        let (l5, r3) = (f.mul(5, plus), f.mul(3, minus));
        out.push(BadComponent {
            name: format!("one-sign w={}: quadric = 0, 5(h1bar+h2bar) = ±3(h1bar-h2bar)", w + 1),
            b_vanishes: q == 0,
            h_condition: hbar.is_some() && (l5 == r3 || l5 == f.neg(r3)),
        });
    }
    out
}

fn quadric_mod(f: &Fp, v: [u64; 4]) -> u64 {
    let c: [(usize, usize, i64); 10] = [
        (0, 0, 1),
        (0, 1, -6),
        (1, 1, 1),
        (0, 2, -6),
        (1, 2, -6),
        (2, 2, 1),
        (0, 3, 10),
        (1, 3, 10),
        (2, 3, 10),
        (3, 3, -15),
    ];
    c.iter().fold(0, |acc, &(i, j, k)| f.add(acc, f.mul(f.r(k as i128), f.mul(v[i], v[j]))))
}

/// Whether `b` lies on any `b`-polynomial of the assembled `𝒱₄^{bad}`.
pub fn in_v4bad(b: &[i64; 4], p: u64) -> bool {
    bad_components(b, &[0, 0], p).iter().any(|c| c.b_vanishes)
}

/// `(b ∈ 𝒱₄^{bad}, h ∈ 𝒱₂^{bad}(b))`, the second meaning that some component
/// through `b` also has its `h`-condition satisfied.
pub fn explicit_bad_member(b: &[i64; 4], h: &[i64; 2], p: u64) -> (bool, bool) {
    let comps = bad_components(b, h, p);
    (comps.iter().any(|c| c.b_vanishes), comps.iter().any(|c| c.b_vanishes && c.h_condition))
}

pub fn regime(b: &[i64; 4], h: &[i64; 2], p: u64) -> Regime {
    if h.iter().all(|x| x.rem_euclid(p as i64) == 0) {
        Regime::HZero
    } else if explicit_bad_member(b, h, p).1 {
        Regime::BadPair
    } else {
        Regime::Generic
    }
}

/// A point of `𝒱₁₁`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct V11Point {
    pub u: u64,
    pub x: [u64; 2],
    pub xij: [[u64; 4]; 2],
}

impl V11Point {
    /// Checks every defining equation and side condition.
    pub fn is_valid(&self, b: &[i64; 4], h: &[i64; 2], p: u64) -> bool {
        let f = Fp { p };
        if self.x[0] == self.x[1] || self.x.contains(&0) {
            return false;
        }
        let mut inv_sum = 0;
        for i in 0..2 {
            let mut sum = f.r(h[i] as i128);
            for j in 0..4 {
                let (xij, ub) = (self.xij[i][j], f.r(self.u as i128 + b[j] as i128));
                if xij == 0 || ub == 0 || f.mul(self.x[i], f.mul(xij, xij)) != ub {
                    return false;
                }
                sum = f.add(sum, xij);
                inv_sum = f.add(inv_sum, f.inv(xij));
            }
            if sum != 0 {
                return false;
            }
        }
        inv_sum == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CountResult {
    /// Points of `𝒱₁₁` with the side conditions.
    pub k_full: u64,
    /// Distinct triples `(u, x₁₁, x₂₁)`.
    pub k1: u64,
    pub regime: Regime,
}

/// Square-root branch used for `F_p^{×2} → F_p^×`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Smaller,
    Larger,
}

/// `root[v]` is the chosen square root of `v`, or 0 for non-squares and 0.
fn sqrt_table(p: u64, branch: Branch) -> Vec<u64> {
    let mut t = vec![0u64; p as usize];
    for x in 1..p {
        let v = (x * x % p) as usize;
        let keep = match branch {
            Branch::Smaller => t[v] == 0 || x < t[v],
            Branch::Larger => x > t[v],
        };
        if keep {
            t[v] = x;
        }
    }
    t
}

fn check_prime(p: u64) -> Result<()> {
    if p < 3 || !is_prime(p) {
        return Err(Error::Precondition(format!("{p} is not an odd prime")));
    }
    Ok(())
}

/// Largest `p` accepted by [`count_k_oracle`] without the override.
pub const ORACLE_MAX_P: u64 = 200;
/// Largest `p` accepted by [`count_k1`].
pub const K1_MAX_P: u64 = 100_000;

/// Per-row data at fixed `(u, x_i)`: for each sign pattern with `Σ_j x_ij = -h_i`,
/// the pair `(x_i1, Σ_j x̄_ij)`.
fn row_solutions(f: &Fp, roots: &[u64; 4], hi: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    for mask in 0..16u32 {
        let xs: [u64; 4] = std::array::from_fn(|j| if mask >> j & 1 == 1 { f.neg(roots[j]) } else { roots[j] });
        let s = xs.iter().fold(hi, |a, &x| f.add(a, x));
        if s == 0 {
            let inv = xs.iter().fold(0, |a, &x| f.add(a, f.inv(x)));
            out.push((xs[0], inv));
        }
    }
    out
}

fn oracle_with_branch(b: &[i64; 4], h: &[i64; 2], p: u64, branch: Branch) -> (u64, u64) {
    let f = Fp { p };
    let root = sqrt_table(p, branch);
    let hs = h.map(|x| f.r(x as i128));
    let per_u = exec::map_range(p as usize, |u| {
        let ub: [u64; 4] = std::array::from_fn(|j| f.r(u as i128 + b[j] as i128));
        if ub.contains(&0) {
            return (0u64, 0u64);
        }
        // rows[i][x] lists (x_i1, Σ_j x̄_ij) over admissible sign patterns.
        let rows: [Vec<Vec<(u64, u64)>>; 2] = std::array::from_fn(|i| {
            (0..p)
                .map(|x| {
                    if x == 0 {
                        return Vec::new();
                    }
                    let xinv = f.inv(x);
                    let mut roots = [0u64; 4];
                    for j in 0..4 {
                        let v = f.mul(ub[j], xinv);
                        roots[j] = root[v as usize];
                        if roots[j] == 0 {
                            return Vec::new();
                        }
                    }
                    row_solutions(&f, &roots, hs[i])
                })
                .collect()
        });
        let mut full = 0u64;
        let mut triples = HashSet::new();
        for x1 in 1..p as usize {
            if rows[0][x1].is_empty() {
                continue;
            }
            for x2 in 1..p as usize {
                if x1 == x2 {
                    continue;
                }
                for &(a1, inv1) in &rows[0][x1] {
                    for &(a2, inv2) in &rows[1][x2] {
                        if f.add(inv1, inv2) == 0 {
                            full += 1;
                            triples.insert((a1, a2));
                        }
                    }
                }
            }
        }
        (full, triples.len() as u64)
    });
    per_u.into_iter().fold((0, 0), |(a, c), (x, y)| (a + x, c + y))
}

/// Exact `𝒦(b, h; p)` by enumerating `(u, x₁, x₂)` and the sign patterns of the `x_ij`.
/// `k1` here counts the distinct triples `(u, x₁₁, x₂₁)` among the points found.
pub fn count_k_oracle(b: &[i64; 4], h: &[i64; 2], p: u64, allow_large: bool) -> Result<CountResult> {
    check_prime(p)?;
    if p > ORACLE_MAX_P && !allow_large {
        return Err(Error::OutOfRange(format!("oracle count limited to p <= {ORACLE_MAX_P}")));
    }
    let (k_full, k1) = oracle_with_branch(b, h, p, Branch::Smaller);
    Ok(CountResult { k_full, k1, regime: regime(b, h, p) })
}

/// `(ε, f^ε(u), g^ε(u))` for one sign pattern on `(y, z, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FgEntry {
    pub eps: [i8; 3],
    pub f: u64,
    pub g: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum FgValues {
    Values(Vec<FgEntry>),
    NoSquareRoots,
}

fn fg_with(f: &Fp, u: u64, b: &[i64; 4], root: &[u64]) -> Result<FgValues> {
    let ub: [u64; 4] = std::array::from_fn(|j| f.r(u as i128 + b[j] as i128));
    if let Some(j) = ub.iter().position(|&x| x == 0) {
        return Err(Error::PoleAtU { index: j + 1, p: f.p });
    }
    let inv1 = f.inv(ub[0]);
    let mut s = [0u64; 3];
    for j in 0..3 {
        s[j] = root[f.mul(ub[j + 1], inv1) as usize];
        if s[j] == 0 {
            return Ok(FgValues::NoSquareRoots);
        }
    }
    let sinv = s.map(|x| f.inv(x));
    let out = (0..8u32)
        .map(|mask| {
            let eps: [i8; 3] = std::array::from_fn(|j| if mask >> j & 1 == 1 { -1 } else { 1 });
            let pick = |v: u64, e: i8| if e < 0 { f.neg(v) } else { v };
            let fv = (0..3).fold(1, |a, j| f.add(a, pick(s[j], eps[j])));
            let gv = (0..3).fold(1, |a, j| f.add(a, pick(sinv[j], eps[j])));
            FgEntry { eps, f: fv, g: gv }
        })
        .collect();
    Ok(FgValues::Values(out))
}

/// `f^ε(u) = 1 + Σ ε_j s_j` and `g^ε(u) = 1 + Σ ε_j / s_j` with `s_j = ((u+b_j)/(u+b₁))^{1/2}`.
pub fn fg_values(u: i64, b: &[i64; 4], p: u64) -> Result<FgValues> {
    check_prime(p)?;
    let f = Fp { p };
    fg_with(&f, f.r(u as i128), b, &sqrt_table(p, Branch::Smaller))
}

/// Solution set of one instance of the reduced system at fixed `u`.
enum Slot {
    Fixed(u64),
    Free,
    Empty,
}

fn slot(f: &Fp, fv: u64, hv: u64) -> Slot {
    match (fv == 0, hv == 0) {
        (false, false) => Slot::Fixed(f.mul(f.neg(hv), f.inv(fv))),
        (false, true) => Slot::Empty,
        (true, true) => Slot::Free,
        (true, false) => Slot::Empty,
    }
}

/// Families of solutions `(x₁₁, x₂₁)` at one `u`, kept symbolic so that
/// degenerate instances cost `O(p)`.
#[derive(Default)]
struct Families {
    points: Vec<(u64, u64)>,
    /// `x₂₁ = κ x₁₁`.
    lines: Vec<u64>,
    /// `x₁₁ = a`, `x₂₁` free.
    verticals: Vec<u64>,
    /// `x₂₁ = a`, `x₁₁` free.
    horizontals: Vec<u64>,
    plane: bool,
}

/// Counts solutions of one instance and records them; returns the number of points.
fn solve_instance(f: &Fp, fam: &mut Families, s1: Slot, s2: Slot, g1: u64, g2: u64) -> u64 {
    let p = f.p;
    let sq_differ = |a: u64, c: u64| f.mul(a, a) != f.mul(c, c);
    // Multiplied through by x₁₁x₂₁: g₁x₂₁ + g₂x₁₁ = 0.
    match (s1, s2) {
        (Slot::Fixed(a1), Slot::Fixed(a2)) => {
            if f.add(f.mul(g1, a2), f.mul(g2, a1)) == 0 && sq_differ(a1, a2) {
                fam.points.push((a1, a2));
                1
            } else {
                0
            }
        }
        (Slot::Fixed(a1), Slot::Free) => {
            if g1 != 0 {
                let a2 = f.mul(f.neg(f.mul(g2, a1)), f.inv(g1));
                if a2 != 0 && sq_differ(a1, a2) {
                    fam.points.push((a1, a2));
                    return 1;
                }
                0
            } else if g2 == 0 {
                fam.verticals.push(a1);
                p - 3
            } else {
                0
            }
        }
        (Slot::Free, Slot::Fixed(a2)) => {
            if g2 != 0 {
                let a1 = f.mul(f.neg(f.mul(g1, a2)), f.inv(g2));
                if a1 != 0 && sq_differ(a1, a2) {
                    fam.points.push((a1, a2));
                    return 1;
                }
                0
            } else if g1 == 0 {
                fam.horizontals.push(a2);
                p - 3
            } else {
                0
            }
        }
        (Slot::Free, Slot::Free) => match (g1 == 0, g2 == 0) {
            (false, false) => {
                let kappa = f.mul(f.neg(g2), f.inv(g1));
                if f.mul(kappa, kappa) != 1 {
                    fam.lines.push(kappa);
                    p - 1
                } else {
                    0
                }
            }
            (true, true) => {
                fam.plane = true;
                (p - 1) * (p - 3)
            }
            _ => 0,
        },
        _ => 0,
    }
}

fn distinct(f: &Fp, fam: Families) -> u64 {
    let p = f.p;
    if fam.plane {
        return (p - 1) * (p - 3);
    }
    let mut set: HashSet<(u64, u64)> = fam.points.into_iter().collect();
    let sq_differ = |a: u64, c: u64| f.mul(a, a) != f.mul(c, c);
    for kappa in fam.lines {
        for x in 1..p {
            set.insert((x, f.mul(kappa, x)));
        }
    }
    for a in fam.verticals {
        for x in 1..p {
            if sq_differ(a, x) {
                set.insert((a, x));
            }
        }
    }
    for a in fam.horizontals {
        for x in 1..p {
            if sq_differ(x, a) {
                set.insert((x, a));
            }
        }
    }
    set.len() as u64
}

fn k1_with_branch(b: &[i64; 4], h: &[i64; 2], p: u64, branch: Branch) -> (u64, u64) {
    let f = Fp { p };
    let root = sqrt_table(p, branch);
    let hs = h.map(|x| f.r(x as i128));
    let per_u = exec::map_range(p as usize, |u| {
        let vals = match fg_with(&f, u as u64, b, &root) {
            Ok(FgValues::Values(v)) => v,
            _ => return (0u64, 0u64),
        };
        let mut fam = Families::default();
        let mut full = 0;
        for e1 in &vals {
            for e2 in &vals {
                full += solve_instance(&f, &mut fam, slot(&f, e1.f, hs[0]), slot(&f, e2.f, hs[1]), e1.g, e2.g);
            }
        }
        (full, distinct(&f, fam))
    });
    per_u.into_iter().fold((0, 0), |(a, c), (x, y)| (a + x, c + y))
}

/// `𝒦₁(b, h; p)` from the reduced linear system in `(x₁₁, x₂₁)` at each `u`.
/// `k_full` weights each triple by its number of sign-pattern instances, which
/// is exactly the number of `𝒱₁₁` points above it.
pub fn count_k1(b: &[i64; 4], h: &[i64; 2], p: u64) -> Result<CountResult> {
    check_prime(p)?;
    if p > K1_MAX_P {
        return Err(Error::OutOfRange(format!("k1 count limited to p <= {K1_MAX_P}")));
    }
    let (k_full, k1) = k1_with_branch(b, h, p, Branch::Smaller);
    Ok(CountResult { k_full, k1, regime: regime(b, h, p) })
}

/// For `b` with `b₁ + b₂ ≡ b₃ + b₄` and `b̄₁ + b̄₂ ≡ b̄₃ + b̄₄`, whether `(b_i²) ∈ 𝒱^Δ`.
pub fn b_squared_lemma_check(b: &[i64; 4], p: u64) -> Result<bool> {
    check_prime(p)?;
    let f = Fp { p };
    let r = b.map(|x| f.r(x as i128));
    if r.contains(&0) {
        return Err(Error::NotInvertible { value: 0, modulus: p });
    }
    let inv = r.map(|x| f.inv(x));
    if f.add(r[0], r[1]) != f.add(r[2], r[3]) || f.add(inv[0], inv[1]) != f.add(inv[2], inv[3]) {
        return Err(Error::Precondition("b does not satisfy both congruences".into()));
    }
    let sq = r.map(|x| f.mul(x, x) as i64);
    Ok(vdelta_member(&sq, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vdelta_examples() {
        assert!(vdelta_member(&[1, 1, 2, 2], 7));
        assert!(!vdelta_member(&[1, 2, 3, 4], 7));
        assert!(vdelta_member(&[1, 8, 3, 10], 7));
        assert!(vdelta_member(&[5, 5, 5, 5], 7));
        assert!(!vdelta_member(&[5, 5, 5, 1], 7));
    }

    #[test]
    fn polyz_arithmetic() {
        let x = PolyZ::var(0);
        let y = PolyZ::var(1);
        let s = x.add(&y);
        let sq = s.mul(&s);
        let expect = x.mul(&x).add(&x.mul(&y).scale(&BigInt::from(2))).add(&y.mul(&y));
        assert_eq!(sq, expect);
        assert!(s.sub(&s).is_zero());
        assert_eq!(s.pow(3).len(), 4);
        assert_eq!(sq.substitute(1, &x), x.mul(&x).scale(&BigInt::from(4)));
        assert_eq!(sq.render(&FORM_NAMES), "x^2 +2*x*y +y^2");
    }

    #[test]
    fn sign_product_examples() {
        let f = sign_product(&lin_form([1, 1, 1, 1]), SignMode::Eight).unwrap();
        assert_eq!(f, displayed_quartic().neg());
        let x = sign_product(&PolyZ::var(0), SignMode::Eight).unwrap();
        assert_eq!(x, PolyZ::monomial([4, 0, 0, 0, 0, 0], 1));
        // (X + Y)(X - Y) over the y-flip, squared by the unused z and w flips.
        let xy = sign_product(&lin_form([1, 1, 0, 0]), SignMode::Eight).unwrap();
        let direct = PolyZ::var(0).sub(&PolyZ::var(1)).pow(4);
        assert_eq!(xy, direct);
    }

    #[test]
    fn sign_product_rejects_odd_exponents() {
        // 1 + X is not homogeneous, so the 8-pattern product leaves odd powers of x.
        let q = PolyZ::constant(1).add(&PolyZ::var(0));
        assert!(matches!(sign_product(&q, SignMode::Eight), Err(Error::Internal(_))));
        assert!(sign_product(&q, SignMode::Sixteen).is_ok());
    }

    #[test]
    fn u_coefficient_matches_substitution() {
        let f = displayed_quartic();
        // Rename x..w to slots 1..5, then send each b_j to u + b_j.
        let mut sub = (0..4).rev().fold(f.clone(), |acc, j| acc.substitute(j, &PolyZ::var(j + 1)));
        for j in 1..5 {
            sub = sub.substitute(j, &PolyZ::var(0).add(&PolyZ::var(j)));
        }
        for k in 0..=4 {
            assert_eq!(u_coefficient(&f, k), sub.coeff_of(0, k), "k={k}");
        }
    }

    #[test]
    fn quadric_matches_mod_evaluation() {
        let q = quadric_poly();
        let f = Fp { p: 101 };
        for v in [[1u64, 2, 3, 4], [7, 0, 5, 9], [100, 50, 3, 1]] {
            let vals = [0, v[0], v[1], v[2], v[3], 0];
            assert_eq!(q.eval_mod(&vals, 101), quadric_mod(&f, v));
        }
    }

    #[test]
    fn fg_examples() {
        match fg_values(5, &[0, 0, 0, 0], 13).unwrap() {
            FgValues::Values(v) => {
                assert_eq!(v.len(), 8);
                for e in v {
                    let expect = reduce(1 + e.eps.iter().map(|&x| x as i128).sum::<i128>(), 13);
                    assert_eq!((e.f, e.g), (expect, expect));
                }
            }
            FgValues::NoSquareRoots => panic!("ratios are 1"),
        }
        assert!(fg_values(1, &[0, 1, 3, 7], 13).is_ok());
        assert_eq!(fg_values(-1, &[0, 1, 3, 7], 13), Err(Error::PoleAtU { index: 2, p: 13 }));
    }

    #[test]
    fn oracle_and_k1_agree_small() {
        for p in [5u64, 7, 11, 13] {
            for b in [[0, 1, 3, 7], [0, 1, 2, 4], [1, 1, 2, 2]] {
                for h in [[0, 0], [1, 2], [0, 3], [2, 2], [1, p as i64 - 1]] {
                    let o = count_k_oracle(&b, &h, p, false).unwrap();
                    let k = count_k1(&b, &h, p).unwrap();
                    assert_eq!((o.k_full, o.k1), (k.k_full, k.k1), "p={p} b={b:?} h={h:?}");
                }
            }
        }
    }

    #[test]
    fn counts_independent_of_branch() {
        for (b, h, p) in [([0, 1, 3, 7], [1, 2], 13u64), ([0, 1, 3, 7], [0, 0], 13), ([0, 2, 5, 6], [3, 4], 17)] {
            assert_eq!(oracle_with_branch(&b, &h, p, Branch::Smaller), oracle_with_branch(&b, &h, p, Branch::Larger));
            assert_eq!(k1_with_branch(&b, &h, p, Branch::Smaller), k1_with_branch(&b, &h, p, Branch::Larger));
        }
    }

    #[test]
    fn oracle_guard() {
        assert!(matches!(count_k_oracle(&[0, 1, 3, 7], &[1, 2], 211, false), Err(Error::OutOfRange(_))));
        assert!(count_k1(&[0, 1, 3, 7], &[1, 2], 211).is_ok());
        assert!(count_k1(&[0, 1, 3, 7], &[1, 2], 15).is_err());
    }

    #[test]
    fn v11_points_from_oracle_are_valid() {
        // Rebuild points from the reduced system and check every equation.
        let (b, h, p) = ([0i64, 1, 3, 7], [0i64, 0], 13u64);
        let f = Fp { p };
        let root = sqrt_table(p, Branch::Smaller);
        let mut found = 0;
        for u in 0..p {
            let Ok(FgValues::Values(vals)) = fg_with(&f, u, &b, &root) else { continue };
            let ub: [u64; 4] = std::array::from_fn(|j| f.r(u as i128 + b[j] as i128));
            let s: [u64; 4] = std::array::from_fn(|j| root[f.mul(ub[j], f.inv(ub[0])) as usize].max(if j == 0 { 1 } else { 0 }));
            for e1 in &vals {
                for e2 in &vals {
                    for x11 in 1..p {
                        for x21 in 1..p {
                            let ok = f.add(f.mul(x11, e1.f), f.r(h[0] as i128)) == 0
                                && f.add(f.mul(x21, e2.f), f.r(h[1] as i128)) == 0
                                && f.add(f.mul(e1.g, f.inv(x11)), f.mul(e2.g, f.inv(x21))) == 0
                                && f.mul(x11, x11) != f.mul(x21, x21);
                            if !ok {
                                continue;
                            }
                            let row = |x1: u64, eps: [i8; 3]| -> [u64; 4] {
                                std::array::from_fn(|j| {
                                    let v = f.mul(x1, s[j]);
                                    if j > 0 && eps[j - 1] < 0 { f.neg(v) } else { v }
                                })
                            };
                            let xi = |x1: u64| f.mul(ub[0], f.inv(f.mul(x1, x1)));
                            let pt = V11Point { u, x: [xi(x11), xi(x21)], xij: [row(x11, e1.eps), row(x21, e2.eps)] };
                            assert!(pt.is_valid(&b, &h, p), "{pt:?}");
                            found += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(found as u64, count_k_oracle(&b, &h, p, false).unwrap().k_full);
    }

    #[test]
    fn b_squared_examples() {
        assert!(b_squared_lemma_check(&[1, 2, 2, 1], 7).unwrap());
        assert!(b_squared_lemma_check(&[3, 5, 5, 3], 11).unwrap());
        assert!(b_squared_lemma_check(&[1, 2, 3, 4], 7).is_err());
        assert!(b_squared_lemma_check(&[0, 2, 2, 0], 7).is_err());
    }

    #[test]
    fn b_squared_exhaustive() {
        for p in [5u64, 7, 11, 13, 17, 19, 23, 29, 31] {
            let f = Fp { p };
            for b1 in 1..p {
                for b2 in 1..p {
                    for b3 in 1..p {
                        let b4 = f.sub(f.add(b1, b2), b3);
                        if b4 == 0 {
                            continue;
                        }
                        if f.add(f.inv(b1), f.inv(b2)) != f.add(f.inv(b3), f.inv(b4)) {
                            continue;
                        }
                        let b = [b1 as i64, b2 as i64, b3 as i64, b4 as i64];
                        assert!(b_squared_lemma_check(&b, p).unwrap(), "p={p} b={b:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn explicit_bad_examples() {
        let p = 101;
        // b₁ + b₂ = b₃ + b₄ and t = 2D/S.
        let b = [0i64, 10, 3, 7];
        let f = Fp { p };
        let (d1, d2) = (f.sub(0, 10), f.sub(3, 7));
        let s = f.add(f.mul(d1, d1), f.mul(d2, d2));
        let t = f.mul(f.mul(2, f.mul(d1, d2)), f.inv(s));
        // (h̄₁ + h̄₂) = t (h̄₁ - h̄₂) with h̄₂ = 1.
        let hb1 = f.mul(f.add(t, 1), f.inv(f.sub(t, 1)));
        let h = [f.inv(hb1) as i64, 1];
        assert_eq!(explicit_bad_member(&b, &h, p), (true, true));
        assert_eq!(regime(&b, &h, p), Regime::BadPair);
        assert_eq!(regime(&b, &[0, 0], p), Regime::HZero);
        let (v4, v2) = explicit_bad_member(&[0, 1, 5, 17], &[3, 8], p);
        assert!(!v2);
        assert!(!v4 || !v2);
    }

    #[test]
    fn identities_hold() {
        let all = verify_identities("all").unwrap();
        for r in &all {
            if r.form == Form::Corrected || !is_known_misprint(&r.check) {
                assert!(r.pass, "{} / {}: {} terms: {}", r.id, r.check, r.residual_terms, r.residual);
            } else {
                assert!(!r.pass, "{} / {} unexpectedly holds", r.id, r.check);
            }
        }
        assert!(verify_identities("c99").is_err());
    }

    /// Printed statements that fail exactly as displayed.
    fn is_known_misprint(check: &str) -> bool {
        check.starts_with("8-pattern product of x+y+z+w = 64xyzw")
            || check.starts_with("two signs, h1bar+h2bar=0: c24")
            || check.ends_with("τ1^6 τ2^6 / S")
            || check.starts_with("two signs, h1bar-h2bar=0: c")
            || check == "one sign, h1bar+h2bar=0: c32 = 40960000"
            || check == "one sign, h1bar-h2bar=0: c32 = 5308416"
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn sign_product_even_exponents(coeffs in proptest::collection::vec(-5i64..=5, 15)) {
            // Random Q of degree <= 2 in four variables.
            let mut q = PolyZ::constant(coeffs[0]);
            for j in 0..4 {
                q = q.add(&PolyZ::var(j).scale(&BigInt::from(coeffs[1 + j])));
            }
            let mut k = 5;
            for i in 0..4 {
                for j in i..4 {
                    if k < coeffs.len() {
                        q = q.add(&PolyZ::var(i).mul(&PolyZ::var(j)).scale(&BigInt::from(coeffs[k])));
                    }
                    k += 1;
                }
            }
            prop_assert!(sign_product(&q, SignMode::Sixteen).is_ok());
        }
    }
}
