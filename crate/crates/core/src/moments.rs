//! Moment-side objects for twisted second moments of level-1 forms.
//!
//! * Dirichlet character groups and the primitive count `φ*(q)`.
//! * Hecke eigenvalues in the normalization `λ(1) = 1`, with `Δ` built in
//!   from `q Π (1 - q^m)^24`.
//! * The finite Euler products `P(s)`, `Q(s)` at `s = 1`.
//! * The off-diagonal sums `B^±(M, N)` and the shifted convolution sums
//!   `𝒟`, `𝒮`, `S_{N,M,d,q}`, each evaluated as a finite sum.
//! * A numeric check of Voronoi summation for holomorphic forms.
//! * The exponent bookkeeping that reduces the moment to the bilinear bound.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use num_rational::Ratio;
use serde::Serialize;

use crate::exec;
use crate::kloosterman::e_frac;
use crate::modcore::{divisors, euler_phi, factorize, gcd, inv_mod, mobius, mul_mod, pow_mod, reduce};
use crate::{Error, Result};

/// `φ*(q) = Σ_{d | q} μ(d) φ(q/d)`; zero exactly when `q ≡ 2 mod 4`.
pub fn phi_star(q: u64) -> u64 {
    if q == 0 {
        return 0;
    }
    let ds = divisors(q).expect("positive");
    let s: i64 = ds
        .iter()
        .map(|&d| mobius(d).expect("positive") * euler_phi(q / d).expect("positive") as i64)
        .sum();
    s as u64
}

/// A cyclic factor of `(Z/p^k)^*` with its discrete-log table.
#[derive(Debug, Clone)]
struct CyclicFactor {
    order: u64,
    /// `log[x]` for units `x mod p^k`; `u64::MAX` elsewhere.
    log: Vec<u64>,
}

#[derive(Debug, Clone)]
struct Component {
    p: u64,
    k: u32,
    pk: u64,
    factors: Vec<CyclicFactor>,
}

fn primitive_root(p: u64) -> u64 {
    if p == 2 {
        return 1;
    }
    let rs: Vec<u64> = factorize(p - 1).expect("positive").into_iter().map(|x| x.0).collect();
    (2..p)
        .find(|&g| rs.iter().all(|&r| pow_mod(g, (p - 1) / r, p) != 1))
        .expect("a primitive root exists")
}

impl Component {
    fn new(p: u64, k: u32) -> Self {
        let pk = p.pow(k);
        let mut factors = Vec::new();
        if p == 2 {
            if k >= 2 {
                // x = ±5^b; the sign factor has order 2, the 5-part order 2^{k-2}.
                let ob = if k >= 3 { 1u64 << (k - 2) } else { 1 };
                let mut la = vec![u64::MAX; pk as usize];
                let mut lb = vec![u64::MAX; pk as usize];
                let mut x = 1u64;
                for b in 0..ob {
                    for (a, y) in [(0u64, x), (1, (pk - x) % pk)] {
                        la[y as usize] = a;
                        lb[y as usize] = b;
                    }
                    x = x * 5 % pk;
                }
                factors.push(CyclicFactor { order: 2, log: la });
                if k >= 3 {
                    factors.push(CyclicFactor { order: ob, log: lb });
                }
            }
        } else {
            let mut g = primitive_root(p);
            if k >= 2 && pow_mod(g, p - 1, p * p) == 1 {
                g += p;
            }
            let order = (p - 1) * p.pow(k - 1);
            let mut log = vec![u64::MAX; pk as usize];
            let mut x = 1u64;
            for i in 0..order {
                log[x as usize] = i;
                x = mul_mod(x, g, pk);
            }
            factors.push(CyclicFactor { order, log });
        }
        Component { p, k, pk, factors }
    }

    /// Conductor of the component character with the given exponents.
    fn conductor(&self, exps: &[u64]) -> u64 {
        let (p, k) = (self.p, self.k);
        if p != 2 {
            let j = exps[0];
            if j == 0 {
                return 1;
            }
            let mut v = 0;
            let mut t = j;
            while t.is_multiple_of(p) && v < k - 1 {
                t /= p;
                v += 1;
            }
            return p.pow(k - v);
        }
        match k {
            0 | 1 => 1,
            2 => {
                if exps[0] == 0 {
                    1
                } else {
                    4
                }
            }
            _ => {
                let b = exps[1];
                if b == 0 {
                    return if exps[0] == 0 { 1 } else { 4 };
                }
                2u64.pow(k - b.trailing_zeros())
            }
        }
    }
}

/// The full group of Dirichlet characters modulo `q`.
///
/// Characters are indexed in mixed radix over the cyclic factors of the
/// prime-power components; index 0 is the principal character.
#[derive(Debug, Clone)]
pub struct DirichletGroup {
    q: u64,
    components: Vec<Component>,
    /// Exponent of the group; every value is `e(j / exponent)`.
    exponent: u64,
    size: u64,
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

impl DirichletGroup {
    pub fn new(q: u64) -> Result<Self> {
        let components: Vec<Component> = factorize(q)?.into_iter().map(|(p, k)| Component::new(p, k)).collect();
        let orders = components.iter().flat_map(|c| c.factors.iter().map(|f| f.order));
        let exponent = orders.clone().fold(1, lcm);
        let size = orders.product();
        Ok(DirichletGroup { q, components, exponent, size })
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    /// `φ(q)`.
    pub fn len(&self) -> u64 {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    fn exps(&self, index: u64) -> Vec<Vec<u64>> {
        let mut i = index;
        self.components
            .iter()
            .map(|c| {
                c.factors
                    .iter()
                    .map(|f| {
                        let j = i % f.order;
                        i /= f.order;
                        j
                    })
                    .collect()
            })
            .collect()
    }

    /// `χ(n) = e(j / exponent)`; `None` when `(n, q) > 1`.
    pub fn value_exponent(&self, index: u64, n: i64) -> Option<u64> {
        let exps = self.exps(index);
        let mut total = 0u64;
        for (c, ex) in self.components.iter().zip(&exps) {
            let x = reduce(n as i128, c.pk) as usize;
            for (f, &j) in c.factors.iter().zip(ex) {
                let l = f.log[x];
                if l == u64::MAX {
                    return None;
                }
                let step = self.exponent / f.order;
                total = (total + mul_mod(mul_mod(j, l, self.exponent), step, self.exponent)) % self.exponent;
            }
            if c.factors.is_empty() && c.pk > 1 && x.is_multiple_of(c.p as usize) {
                return None;
            }
        }
        Some(total)
    }

    pub fn value(&self, index: u64, n: i64) -> Complex64 {
        match self.value_exponent(index, n) {
            Some(j) => e_frac(j as i128, self.exponent),
            None => Complex64::new(0.0, 0.0),
        }
    }

    pub fn conductor(&self, index: u64) -> u64 {
        self.components.iter().zip(self.exps(index)).map(|(c, e)| c.conductor(&e)).product()
    }

    pub fn is_primitive(&self, index: u64) -> bool {
        self.conductor(index) == self.q
    }

    /// `χ(-1) ∈ {1, -1}`.
    pub fn parity(&self, index: u64) -> i8 {
        match self.value_exponent(index, -1) {
            Some(0) => 1,
            _ => -1,
        }
    }

    pub fn primitive_count(&self) -> u64 {
        (0..self.size).filter(|&i| self.is_primitive(i)).count() as u64
    }
}

pub fn enumerate_characters(q: u64) -> Result<DirichletGroup> {
    DirichletGroup::new(q)
}

/// `τ(n)` for `0 ≤ n ≤ n_max` (`τ(0) = 0`) from `Δ = q (Σ_k (-1)^k (2k+1) q^{k(k+1)/2})^8`.
pub fn tau_table(n_max: usize) -> Vec<i128> {
    let mut tau = vec![0i128; n_max + 1];
    if n_max == 0 {
        return tau;
    }
    let len = n_max;
    let jac: Vec<(usize, i128)> = (0..)
        .map(|k: usize| (k * (k + 1) / 2, if k.is_multiple_of(2) { 1 } else { -1 } * (2 * k as i128 + 1)))
        .take_while(|&(e, _)| e < len)
        .collect();
    let mut s = vec![0i128; len];
    for &(e, c) in &jac {
        s[e] = c;
    }
    for _ in 1..8 {
        let mut t = vec![0i128; len];
        for &(e, c) in &jac {
            for i in 0..len - e {
                t[i + e] += c * s[i];
            }
        }
        s = t;
    }
    tau[1..].copy_from_slice(&s);
    tau
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FormKind {
    Holomorphic,
    Maass,
}

/// A level-1 Hecke eigenform given by its normalized eigenvalues.
#[derive(Debug, Clone)]
pub struct HeckeForm {
    pub name: String,
    pub kind: FormKind,
    /// Weight for holomorphic forms; 0 for Maass forms.
    pub weight: u32,
    lambda: Arc<Vec<f64>>,
    /// Exact unnormalized coefficients when built in.
    coeffs: Option<Arc<Vec<i128>>>,
}

impl HeckeForm {
    /// `Δ` with eigenvalues `λ(n) = τ(n) / n^{11/2}` for `n ≤ n_max`.
    pub fn delta(n_max: usize) -> Self {
        let tau = tau_table(n_max);
        let lambda = tau
            .iter()
            .enumerate()
            .map(|(n, &t)| if n == 0 { 0.0 } else { t as f64 / (n as f64).powf(5.5) })
            .collect();
        HeckeForm {
            name: "delta".into(),
            kind: FormKind::Holomorphic,
            weight: 12,
            lambda: Arc::new(lambda),
            coeffs: Some(Arc::new(tau)),
        }
    }

    /// The weight-16 eigenform `E₄Δ`, with coefficients from the product of
    /// `1 + 240 Σ σ₃(n) q^n` and `Δ`. Quadratic in `n_max`; at most [`E4_DELTA_MAX`].
    pub fn e4_delta(n_max: usize) -> Result<Self> {
        if n_max > E4_DELTA_MAX {
            return Err(Error::OutOfRange(format!("E4 Delta built up to n <= {E4_DELTA_MAX}")));
        }
        let tau = tau_table(n_max);
        let mut e4 = vec![0i128; n_max + 1];
        e4[0] = 1;
        for d in 1..=n_max {
            let d3 = 240 * (d as i128).pow(3);
            for m in (d..=n_max).step_by(d) {
                e4[m] += d3;
            }
        }
        let mut a = vec![0i128; n_max + 1];
        for n in 1..=n_max {
            let mut s = 0i128;
            for k in 0..n {
                let t = e4[k].checked_mul(tau[n - k]).ok_or_else(|| Error::OutOfRange("coefficient overflow".into()))?;
                s = s.checked_add(t).ok_or_else(|| Error::OutOfRange("coefficient overflow".into()))?;
            }
            a[n] = s;
        }
        let lambda = a
            .iter()
            .enumerate()
            .map(|(n, &t)| if n == 0 { 0.0 } else { t as f64 / (n as f64).powf(7.5) })
            .collect();
        Ok(HeckeForm {
            name: "e4_delta".into(),
            kind: FormKind::Holomorphic,
            weight: 16,
            lambda: Arc::new(lambda),
            coeffs: Some(Arc::new(a)),
        })
    }

    /// Parses `# form kind=holomorphic weight=K level=1 normalization=hecke`
    /// followed by `n<TAB>lambda` lines with `n = 1, 2, ...` ascending.
    pub fn from_table(name: &str, text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty eigenvalue table".into()))?;
        let fields = header
            .strip_prefix("# form")
            .ok_or_else(|| Error::Parse(format!("bad header '{header}'")))?;
        let mut kind = None;
        let mut weight = 0u32;
        for f in fields.split_whitespace() {
            let (k, v) = f.split_once('=').ok_or_else(|| Error::Parse(format!("bad header field '{f}'")))?;
            match (k, v) {
                ("kind", "holomorphic") => kind = Some(FormKind::Holomorphic),
                ("kind", "maass") => kind = Some(FormKind::Maass),
                ("weight", w) => weight = w.parse().map_err(|_| Error::Parse(format!("weight '{w}'")))?,
                ("level", "1") | ("normalization", "hecke") => {}
                _ => return Err(Error::Parse(format!("unsupported header field '{f}'"))),
            }
        }
        let kind = kind.ok_or_else(|| Error::Parse("header lacks kind".into()))?;
        let mut lambda = vec![0.0];
        for line in lines {
            let (n, v) = line
                .split_once('\t')
                .ok_or_else(|| Error::Parse(format!("line '{line}' is not n<TAB>lambda")))?;
            let n: usize = n.trim().parse().map_err(|_| Error::Parse(format!("index '{n}'")))?;
            if n != lambda.len() {
                return Err(Error::Parse(format!("expected index {}, found {n}", lambda.len())));
            }
            lambda.push(v.trim().parse().map_err(|_| Error::Parse(format!("value '{v}'")))?);
        }
        Ok(HeckeForm { name: name.to_string(), kind, weight, lambda: Arc::new(lambda), coeffs: None })
    }

    pub fn to_table(&self) -> String {
        let kind = match self.kind {
            FormKind::Holomorphic => "holomorphic",
            FormKind::Maass => "maass",
        };
        let mut s = format!("# form kind={kind} weight={} level=1 normalization=hecke\n", self.weight);
        for (n, v) in self.lambda.iter().enumerate().skip(1) {
            s.push_str(&format!("{n}\t{v:e}\n"));
        }
        s
    }

    /// Largest `n` with a stored eigenvalue.
    pub fn n_max(&self) -> u64 {
        self.lambda.len().saturating_sub(1) as u64
    }

    pub fn lambda(&self, n: u64) -> Result<f64> {
        if n == 0 || n > self.n_max() {
            return Err(Error::OutOfRange(format!("eigenvalue index {n} outside 1..={}", self.n_max())));
        }
        Ok(self.lambda[n as usize])
    }

    pub fn coeffs(&self) -> Option<&[i128]> {
        self.coeffs.as_deref().map(|v| v.as_slice())
    }

    fn require(&self, n: u64) -> Result<()> {
        if n > self.n_max() {
            return Err(Error::OutOfRange(format!("form {} needs eigenvalues up to {n}, has {}", self.name, self.n_max())));
        }
        Ok(())
    }
}

/// Largest `n_max` accepted by [`HeckeForm::e4_delta`].
pub const E4_DELTA_MAX: usize = 6000;

pub fn hecke_lambda(form: &HeckeForm, n: u64) -> Result<f64> {
    form.lambda(n)
}

/// Outcome of the Hecke-relation audit of a stored eigenvalue range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeckeCheck {
    pub form: String,
    pub n_max: u64,
    pub relations_checked: usize,
    /// Integer relations `a(p)a(p^j) = a(p^{j+1}) + p^{k-1}a(p^{j-1})` and
    /// `a(mn) = a(m)a(n)` for coprime prime powers, when exact coefficients exist.
    pub exact_failures: usize,
    /// Largest residual of the normalized relations.
    pub max_residual: f64,
    /// Primes with `|λ(p)| > 2`.
    pub deligne_violations: Vec<u64>,
}

pub fn check_hecke_relations(form: &HeckeForm) -> HeckeCheck {
    let n_max = form.n_max();
    let lam = |n: u64| form.lambda[n as usize];
    let mut checked = 0;
    let mut exact_failures = 0;
    let mut max_residual: f64 = 0.0;
    let mut deligne = Vec::new();
    let pk1 = |p: u64| (p as i128).checked_pow(form.weight.saturating_sub(1));
    for p in 2..=n_max {
        if !crate::modcore::is_prime(p) {
            continue;
        }
        if lam(p).abs() > 2.0 + 1e-12 {
            deligne.push(p);
        }
        let mut prev = 1u64;
        let mut cur = p;
        while let Some(next) = cur.checked_mul(p).filter(|&x| x <= n_max) {
            checked += 1;
            let res = lam(p) * lam(cur) - lam(next) - lam(prev);
            max_residual = max_residual.max(res.abs());
            if let (Some(a), Some(w)) = (form.coeffs(), pk1(p)) {
                let lhs = a[p as usize].checked_mul(a[cur as usize]);
                let rhs = w.checked_mul(a[prev as usize]).and_then(|x| x.checked_add(a[next as usize]));
                if lhs.is_none() || lhs != rhs {
                    exact_failures += 1;
                }
            }
            prev = cur;
            cur = next;
        }
    }
    // Multiplicativity on coprime pairs m·n ≤ n_max with m a prime power.
    for m in 2..=n_max.min(1000) {
        let f = factorize(m).expect("positive");
        if f.len() != 1 {
            continue;
        }
        for n in 2..=n_max / m {
            if gcd(m, n) != 1 {
                continue;
            }
            checked += 1;
            max_residual = max_residual.max((lam(m) * lam(n) - lam(m * n)).abs());
            if let Some(a) = form.coeffs() {
                if a[m as usize].checked_mul(a[n as usize]) != Some(a[(m * n) as usize]) {
                    exact_failures += 1;
                }
            }
        }
    }
    HeckeCheck {
        form: form.name.clone(),
        n_max,
        relations_checked: checked,
        exact_failures,
        max_residual,
        deligne_violations: deligne,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EulerPQ {
    pub p1: f64,
    pub q1: f64,
    /// `P'(1) / P(1)`.
    pub p_log_derivative: f64,
    pub primes: Vec<u64>,
}

/// The finite Euler products at `s = 1` over the primes dividing `q`.
pub fn euler_pq(q: u64, f1: &HeckeForm, f2: &HeckeForm) -> Result<EulerPQ> {
    let primes: Vec<u64> = factorize(q)?.into_iter().map(|x| x.0).collect();
    let (mut p1, mut q1, mut dlog) = (1.0, 1.0, 0.0);
    for &p in &primes {
        let (l1, l2) = (f1.lambda(p)?, f2.lambda(p)?);
        let (l1s, l2s) = (f1.lambda(p * p)?, f2.lambda(p * p)?);
        let x = 1.0 / p as f64;
        let ln = (p as f64).ln();
        let a = 1.0 - l1s * x + l1s * x * x - x * x * x;
        let norm = 1.0 - x * x;
        p1 *= a / norm;
        let prod = l1 * l2;
        q1 *= (1.0 - prod * x + (l1s + l2s) * x * x - prod * x.powi(3) + x.powi(4)) / norm;
        // d/ds with x = p^{-s}, dx/ds = -x ln p.
        let da = (-l1s + 2.0 * l1s * x - 3.0 * x * x) * (-x * ln);
        dlog += da / a - 2.0 * x * x * ln / norm;
    }
    Ok(EulerPQ { p1, q1, p_log_derivative: dlog, primes })
}

/// Closed-form bumps supported on `[1, 2]` with values in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothWeight {
    /// `exp(4 - 1/((x-1)(2-x)))`, peak 1 at `x = 3/2`.
    Standard,
    /// `exp(1 - 1/(1-t²))` with `t = 2x - 3`.
    Wide,
    /// The zero function.
    Zero,
}

impl SmoothWeight {
    pub fn eval(self, x: f64) -> f64 {
        if x <= 1.0 || x >= 2.0 {
            return 0.0;
        }
        let t = 2.0 * x - 3.0;
        let s = 1.0 - t * t;
        match self {
            SmoothWeight::Standard => (4.0 - 4.0 / s).exp(),
            SmoothWeight::Wide => (1.0 - 1.0 / s).exp(),
            SmoothWeight::Zero => 0.0,
        }
    }
}

impl FromStr for SmoothWeight {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(SmoothWeight::Standard),
            "wide" => Ok(SmoothWeight::Wide),
            "zero" => Ok(SmoothWeight::Zero),
            _ => Err(Error::Unknown { kind: "weight", name: s.to_string() }),
        }
    }
}

/// `W(a / b)` for exact integers, so equal ratios give identical values.
fn weight_ratio(w: SmoothWeight, a: u64, b: u64) -> f64 {
    w.eval(a as f64 / b as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn as_i64(self) -> i64 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

impl FromStr for Sign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+" | "plus" => Ok(Sign::Plus),
            "-" | "minus" => Ok(Sign::Minus),
            _ => Err(Error::Unknown { kind: "sign", name: s.to_string() }),
        }
    }
}

/// Inputs of `B^±(M, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BpmInput {
    pub m: u64,
    pub n: u64,
    pub q: u64,
    pub sign: Sign,
    pub w1: SmoothWeight,
    pub w2: SmoothWeight,
}

fn bpm_pre(inp: &BpmInput, f1: &HeckeForm, f2: &HeckeForm) -> Result<u64> {
    if inp.m == 0 || inp.n == 0 {
        return Err(Error::Precondition("M, N >= 1".into()));
    }
    f1.require(2 * inp.m)?;
    f2.require(2 * inp.n)?;
    let ps = phi_star(inp.q);
    if ps == 0 {
        return Err(Error::Precondition(format!("q = {} has no primitive characters", inp.q)));
    }
    Ok(ps)
}

/// `(index, λ(index) W(index / L))` over the support with `(index, q) = 1`.
fn weighted_eigen(form: &HeckeForm, w: SmoothWeight, len: u64, q: u64) -> Vec<(u64, f64)> {
    (len..=2 * len)
        .filter(|&i| gcd(i, q) == 1)
        .map(|i| (i, form.lambda[i as usize] * weight_ratio(w, i, len)))
        .filter(|x| x.1 != 0.0)
        .collect()
}

/// `B^±(M, N) = φ*(q)^{-1} Σ_{d | q} μ(q/d) φ(d) (MN)^{-1/2} Σ_{m ≡ ±n (d), (mn, q) = 1, m ≠ n} λ₁(m) λ₂(n) W₁(m/M) W₂(n/N)`.
pub fn b_pm(inp: &BpmInput, f1: &HeckeForm, f2: &HeckeForm) -> Result<f64> {
    let ps = bpm_pre(inp, f1, f2)?;
    let ms = weighted_eigen(f1, inp.w1, inp.m, inp.q);
    let ns = weighted_eigen(f2, inp.w2, inp.n, inp.q);
    let s = inp.sign.as_i64() as i128;
    let mut total = 0.0;
    for d in divisors(inp.q)? {
        let mu = mobius(inp.q / d)?;
        if mu == 0 {
            continue;
        }
        let inner: f64 = exec::sum_range(ms.len(), |i| {
            let (m, a) = ms[i];
            ns.iter()
                .filter(|&&(n, _)| n != m && reduce(m as i128 - s * n as i128, d) == 0)
                .map(|&(_, b)| a * b)
                .sum::<f64>()
        });
        total += mu as f64 * euler_phi(d)? as f64 * inner;
    }
    Ok(total / (ps as f64 * ((inp.m * inp.n) as f64).sqrt()))
}

/// `B^±` from the primitive characters: `χ(m) conj(χ(±n))` summed over primitive `χ`.
pub fn b_pm_characters(inp: &BpmInput, f1: &HeckeForm, f2: &HeckeForm) -> Result<f64> {
    let ps = bpm_pre(inp, f1, f2)?;
    let g = DirichletGroup::new(inp.q)?;
    let ms = weighted_eigen(f1, inp.w1, inp.m, inp.q);
    let ns = weighted_eigen(f2, inp.w2, inp.n, inp.q);
    let s = inp.sign.as_i64();
    let prim: Vec<u64> = (0..g.len()).filter(|&i| g.is_primitive(i)).collect();
    let total: f64 = exec::sum_range(prim.len(), |c| {
        let i = prim[c];
        let mut acc = Complex64::new(0.0, 0.0);
        for &(m, a) in &ms {
            for &(n, b) in &ns {
                if m != n {
                    acc += a * b * g.value(i, m as i64) * g.value(i, s * n as i64).conj();
                }
            }
        }
        acc.re
    });
    Ok(total / (ps as f64 * ((inp.m * inp.n) as f64).sqrt()))
}

/// `N^θ (MN)^{1/2} / q`.
pub fn bpm_trivial_envelope(m: u64, n: u64, q: u64, theta: f64) -> f64 {
    (n as f64).powf(theta) * ((m * n) as f64).sqrt() / q as f64
}

/// `(N/M)^{1/4} q^{-1/4} + (N/M)^{1/2} q^{-1/2} + q^{-1/2+2θ}`.
pub fn bpm_balanced_envelope(m: u64, n: u64, q: u64, theta: f64) -> f64 {
    let r = n as f64 / m as f64;
    let q = q as f64;
    r.powf(0.25) * q.powf(-0.25) + r.sqrt() * q.powf(-0.5) + q.powf(-0.5 + 2.0 * theta)
}

/// A positive rational length such as `N` or `M/δ`.
pub type Length = Ratio<u64>;

fn length_pre(x: &Length) -> Result<()> {
    if *x.numer() == 0 {
        return Err(Error::Precondition("lengths must be positive".into()));
    }
    Ok(())
}

/// `Σ_{ℓ₁n - ℓ₂m = h} λ₁(m) λ₂(n) W₁(ℓ₂m/M) W₂(ℓ₁n/N)` over `m, n ≥ 1`.
#[allow(clippy::too_many_arguments)]
pub fn shifted_d(
    l1: u64,
    l2: u64,
    h: i64,
    n_len: Length,
    m_len: Length,
    f1: &HeckeForm,
    f2: &HeckeForm,
    w: (SmoothWeight, SmoothWeight),
) -> Result<f64> {
    if l1 == 0 || l2 == 0 {
        return Err(Error::Precondition("l1, l2 >= 1".into()));
    }
    length_pre(&n_len)?;
    length_pre(&m_len)?;
    // ℓ₂m/M ∈ (1, 2) ⟺ m ∈ (M/ℓ₂, 2M/ℓ₂).
    let (mn, md) = (*m_len.numer(), *m_len.denom());
    let (nn, nd) = (*n_len.numer(), *n_len.denom());
    let m_lo = mn / (md * l2);
    let m_hi = (2 * mn).div_ceil(md * l2);
    let mut total = 0.0;
    for m in m_lo.max(1)..=m_hi {
        let w1 = weight_ratio(w.0, l2 * m * md, mn);
        if w1 == 0.0 {
            continue;
        }
        let num = h as i128 + (l2 * m) as i128;
        if num <= 0 || num % l1 as i128 != 0 {
            continue;
        }
        let n = (num / l1 as i128) as u64;
        let w2 = weight_ratio(w.1, l1 * n * nd, nn);
        if w2 == 0.0 {
            continue;
        }
        f1.require(m)?;
        f2.require(n)?;
        total += f1.lambda[m as usize] * f2.lambda[n as usize] * w1 * w2;
    }
    Ok(total)
}

/// `𝒮(ℓ₁, ℓ₂, d, N, M) = Σ_{r ≠ 0} 𝒟(ℓ₁, ℓ₂, rd, N, M)`.
#[allow(clippy::too_many_arguments)]
pub fn shifted_s(
    l1: u64,
    l2: u64,
    d: u64,
    n_len: Length,
    m_len: Length,
    f1: &HeckeForm,
    f2: &HeckeForm,
    w: (SmoothWeight, SmoothWeight),
) -> Result<f64> {
    if d == 0 || l1 == 0 || l2 == 0 {
        return Err(Error::Precondition("l1, l2, d >= 1".into()));
    }
    length_pre(&n_len)?;
    length_pre(&m_len)?;
    let (mn, md) = (*m_len.numer(), *m_len.denom());
    let (nn, nd) = (*n_len.numer(), *n_len.denom());
    let ms: Vec<(u64, f64)> = (mn / (md * l2)..=(2 * mn).div_ceil(md * l2))
        .map(|m| (m, weight_ratio(w.0, l2 * m * md, mn)))
        .filter(|x| x.0 > 0 && x.1 != 0.0)
        .collect();
    let ns: Vec<(u64, f64)> = (nn / (nd * l1)..=(2 * nn).div_ceil(nd * l1))
        .map(|n| (n, weight_ratio(w.1, l1 * n * nd, nn)))
        .filter(|x| x.0 > 0 && x.1 != 0.0)
        .collect();
    if let (Some(m), Some(n)) = (ms.last(), ns.last()) {
        f1.require(m.0)?;
        f2.require(n.0)?;
    }
    let mut total = 0.0;
    for &(m, a) in &ms {
        for &(n, b) in &ns {
            let h = (l1 * n) as i128 - (l2 * m) as i128;
            if h != 0 && h % d as i128 == 0 {
                total += f1.lambda[m as usize] * f2.lambda[n as usize] * a * b;
            }
        }
    }
    Ok(total)
}

/// `S_{N,M,d,q} = d (MN)^{-1/2} Σ_{m ≡ n (d), (mn, q) = 1, m ≠ n} λ₁(m) λ₂(n) W₁(m/M) W₂(n/N)`.
pub fn s_nmdq(n_len: u64, m_len: u64, d: u64, q: u64, f1: &HeckeForm, f2: &HeckeForm, w: (SmoothWeight, SmoothWeight)) -> Result<f64> {
    if n_len == 0 || m_len == 0 || d == 0 || q == 0 {
        return Err(Error::Precondition("N, M, d, q >= 1".into()));
    }
    f1.require(2 * m_len)?;
    f2.require(2 * n_len)?;
    let ms = weighted_eigen(f1, w.0, m_len, q);
    let ns = weighted_eigen(f2, w.1, n_len, q);
    let mut total = 0.0;
    for &(m, a) in &ms {
        for &(n, b) in &ns {
            if m != n && m.abs_diff(n) % d == 0 {
                total += a * b;
            }
        }
    }
    Ok(d as f64 * total / ((m_len * n_len) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ShiftedKind {
    /// `𝒟(ℓ₁, ℓ₂, h, N, M)`.
    D,
    /// `𝒮(ℓ₁, ℓ₂, d, N, M)`.
    S,
    /// `S_{N,M,d,q}`.
    Snmdq,
}

impl FromStr for ShiftedKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "D" | "d" => Ok(ShiftedKind::D),
            "S" | "s" => Ok(ShiftedKind::S),
            "SNMdq" | "snmdq" => Ok(ShiftedKind::Snmdq),
            _ => Err(Error::Unknown { kind: "shifted sum", name: s.to_string() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftedInput {
    pub kind: ShiftedKind,
    pub l1: u64,
    pub l2: u64,
    /// `h` for `𝒟`, `d` otherwise.
    pub h_or_d: i64,
    pub n: Length,
    pub m: Length,
    /// Modulus for `S_{N,M,d,q}`.
    pub q: Option<u64>,
    /// Exponent toward Ramanujan–Petersson used in the envelopes.
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftedResult {
    pub value: f64,
    pub envelope_name: String,
    pub envelope: f64,
    pub ratio: f64,
    /// Envelope hypotheses that fail for these inputs.
    pub flags: Vec<String>,
}

fn as_f64(x: &Length) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// Evaluates the selected shifted sum and compares it with its envelope.
pub fn shifted_sums(inp: &ShiftedInput, f1: &HeckeForm, f2: &HeckeForm, w: (SmoothWeight, SmoothWeight)) -> Result<ShiftedResult> {
    let (nf, mf) = (as_f64(&inp.n), as_f64(&inp.m));
    let th = inp.theta;
    let mut flags = Vec::new();
    let positive_d = || -> Result<u64> {
        u64::try_from(inp.h_or_d).ok().filter(|&d| d > 0).ok_or_else(|| Error::Precondition("d >= 1".into()))
    };
    let (value, name, env) = match inp.kind {
        ShiftedKind::D => {
            let v = shifted_d(inp.l1, inp.l2, inp.h_or_d, inp.n, inp.m, f1, f2, w)?;
            let delta = gcd(inp.l1, inp.l2) as f64;
            (v, "((N+M)/delta)^{1/2+theta}", ((nf + mf) / delta).powf(0.5 + th))
        }
        ShiftedKind::S => {
            let d = positive_d()?;
            let v = shifted_s(inp.l1, inp.l2, d, inp.n, inp.m, f1, f2, w)?;
            if nf < 20.0 * mf {
                flags.push("violated: N >= 20M".into());
            }
            let df = d as f64;
            let l = (inp.l1 * inp.l2) as f64;
            let e = nf / df.sqrt()
                + nf.powf(1.25) * mf.powf(0.25) / (df * l.powf(0.25))
                + nf.powf(0.75) * mf.powf(0.25) / df.powf(0.25)
                + nf * mf.sqrt() / df.powf(0.75);
            (v, "N/d^{1/2} + N^{5/4}M^{1/4}/(d(l1 l2)^{1/4}) + N^{3/4}M^{1/4}/d^{1/4} + NM^{1/2}/d^{3/4}", e)
        }
        ShiftedKind::Snmdq => {
            let d = positive_d()?;
            let q = inp.q.ok_or_else(|| Error::Precondition("q is required".into()))?;
            if !inp.n.is_integer() || !inp.m.is_integer() {
                return Err(Error::Precondition("N, M must be integers".into()));
            }
            let v = s_nmdq(inp.n.to_integer(), inp.m.to_integer(), d, q, f1, f2, w)?;
            let qf = q as f64;
            if nf >= 20.0 * mf {
                let e = (nf * qf).sqrt() / mf.sqrt()
                    + nf.powf(0.75) / mf.powf(0.25)
                    + nf.powf(0.25) * qf.powf(0.75) / mf.powf(0.25)
                    + nf.sqrt() * qf.powf(0.25);
                (v, "(Nq)^{1/2}/M^{1/2} + N^{3/4}/M^{1/4} + N^{1/4}q^{3/4}/M^{1/4} + N^{1/2}q^{1/4}", e)
            } else {
                if nf < mf {
                    flags.push("violated: N >= M".into());
                }
                (v, "q^theta N^{1+theta}/M^{1/2}", qf.powf(th) * nf.powf(1.0 + th) / mf.sqrt())
            }
        }
    };
    Ok(ShiftedResult { value, envelope_name: name.to_string(), envelope: env, ratio: value.abs() / env, flags })
}

/// Argument below which `J_ν` is summed as a power series.
fn series_limit(nu: u32) -> f64 {
    nu as f64 + 1.0
}

/// `J_ν(x) = Σ_m (-1)^m (x/2)^{2m+ν} / (m! (m+ν)!)`.
pub fn bessel_j_series(nu: u32, x: f64) -> f64 {
    let h = x / 2.0;
    let mut term = (0..nu).fold(1.0, |t, i| t * h / (i + 1) as f64);
    let mut sum = term;
    for m in 1..200 {
        term *= -h * h / (m as f64 * (m + nu) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// `J_ν(x)` for `x ≥ 0`: power series up to `ν + 1`, `libm::jn` beyond.
pub fn bessel_j(nu: u32, x: f64) -> f64 {
    if x <= series_limit(nu) {
        bessel_j_series(nu, x)
    } else {
        libm::jn(nu as i32, x)
    }
}

/// Interior trapezoid nodes on `[1, 2]`; the weights vanish to all orders at
/// the endpoints, so the rule converges spectrally.
const HANKEL_NODES: usize = 384;

/// `V̊₊(y) = ∫ V(x) 2π i^k J_{k-1}(4π √(xy)) dx` for a holomorphic weight `k`.
pub fn hankel_transform(v: SmoothWeight, k: u32, y: f64) -> f64 {
    let h = 1.0 / HANKEL_NODES as f64;
    let sign = if (k / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
    let s: f64 = (1..HANKEL_NODES)
        .map(|i| {
            let x = 1.0 + i as f64 * h;
            let w = v.eval(x);
            if w == 0.0 {
                0.0
            } else {
                w * bessel_j(k - 1, 4.0 * std::f64::consts::PI * (x * y).sqrt())
            }
        })
        .sum();
    2.0 * std::f64::consts::PI * sign * s * h
}

/// Threshold below which dual terms are dropped.
pub const HANKEL_TRUNCATION: f64 = 1e-10;

/// Smallest `y` on a geometric grid past which `|V̊₊|` stays below the
/// truncation threshold over a window spanning a factor of 2.
pub fn hankel_cutoff(v: SmoothWeight, k: u32) -> f64 {
    let ratio: f64 = 1.02;
    let window = (2f64.ln() / ratio.ln()).ceil() as usize;
    let mut y = 10.0;
    let mut quiet = 0;
    let mut start = y;
    while y < 1e6 {
        if hankel_transform(v, k, y).abs() < HANKEL_TRUNCATION {
            if quiet == 0 {
                start = y;
            }
            quiet += 1;
            if quiet >= window {
                return start;
            }
        } else {
            quiet = 0;
        }
        y *= ratio;
    }
    y
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoronoiCheck {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub residual: f64,
    pub dual_terms: u64,
    pub y_cutoff: f64,
}

/// Largest `n` needed on the dual side of [`voronoi_check`].
pub fn voronoi_dual_length(v: SmoothWeight, k: u32, q: u64, n_len: u64) -> u64 {
    if v == SmoothWeight::Zero {
        return 0;
    }
    (hankel_cutoff(v, k) * (q * q) as f64 / n_len as f64).ceil() as u64
}

/// `Σ λ(n) V(n/N) e(cn/q)` against `(N/q) Σ λ(n) V̊₊(nN/q²) e(-c̄n/q)`.
///
/// The dual phase carries `-c̄`; see `voronoi_dual_phase_sign` in the tests.
pub fn voronoi_check(f: &HeckeForm, c: i64, q: u64, n_len: u64, v: SmoothWeight) -> Result<VoronoiCheck> {
    voronoi_check_signed(f, c, q, n_len, v, -1)
}

fn voronoi_check_signed(f: &HeckeForm, c: i64, q: u64, n_len: u64, v: SmoothWeight, dual_sign: i64) -> Result<VoronoiCheck> {
    if f.kind != FormKind::Holomorphic {
        return Err(Error::Precondition("Voronoi check supports holomorphic forms only".into()));
    }
    if f.weight < 12 || !f.weight.is_multiple_of(2) {
        return Err(Error::Precondition(format!("weight {} unsupported", f.weight)));
    }
    if q == 0 || n_len == 0 {
        return Err(Error::Precondition("q, N >= 1".into()));
    }
    let cr = reduce(c as i128, q);
    if gcd(cr, q) != 1 {
        return Err(Error::NotCoprime(cr, q));
    }
    let cbar = inv_mod(cr, q)?;
    if v == SmoothWeight::Zero {
        let zero = Complex64::new(0.0, 0.0);
        return Ok(VoronoiCheck { lhs: zero, rhs: zero, residual: 0.0, dual_terms: 0, y_cutoff: 0.0 });
    }
    f.require(2 * n_len)?;
    let lhs: Complex64 = (n_len..=2 * n_len)
        .map(|n| f.lambda[n as usize] * weight_ratio(v, n, n_len) * e_frac(cr as i128 * n as i128, q))
        .sum();
    let y_cutoff = hankel_cutoff(v, f.weight);
    let dual = voronoi_dual_length(v, f.weight, q, n_len);
    f.require(dual)?;
    let scale = n_len as f64 / (q * q) as f64;
    let rhs: Complex64 = exec::sum_range(dual as usize, |i| {
        let n = i as u64 + 1;
        let t = hankel_transform(v, f.weight, n as f64 * scale);
        f.lambda[n as usize] * t * e_frac(dual_sign as i128 * cbar as i128 * n as i128, q)
    }) * (n_len as f64 / q as f64);
    Ok(VoronoiCheck { lhs, rhs, residual: (lhs - rhs).norm(), dual_terms: dual, y_cutoff })
}

/// Exponent of the small-power saving targeted by the moment reduction.
pub const ETA: f64 = 1.0 / 216.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaRegime {
    /// `u + v ≤ 2 - 2η - 2θv`.
    TrivialBound,
    /// `v - u ≤ 1 - 4η`.
    Balanced,
    /// `v* ≤ 2/3 - 2η`: Voronoi then the bilinear bound.
    Bilinear,
    /// `v* > 2/3 - 2η`: Pólya–Vinogradov.
    PolyaVinogradov,
    /// Outside `0 ≤ u ≤ v`, `u + v ≤ 2`.
    OutOfRange,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaBudget {
    pub u: f64,
    pub v: f64,
    pub theta: f64,
    pub eta: f64,
    pub v_star: f64,
    pub regime: EtaRegime,
    /// Exponent of `q` in the estimate that settles the regime.
    pub exponent: Option<f64>,
    /// `exponent ≤ -η`, when an exponent is available.
    pub satisfied: Option<bool>,
    /// Constraints of the critical window that fail (only for `Bilinear` and `PolyaVinogradov`).
    pub flags: Vec<String>,
}

/// Audits the exponent case analysis at `M = q^u`, `N = q^v`.
pub fn eta_budget(u: f64, v: f64, theta: f64) -> EtaBudget {
    let eta = ETA;
    let tol = 1e-12;
    let v_star = 2.0 - v;
    let mut out = EtaBudget { u, v, theta, eta, v_star, regime: EtaRegime::OutOfRange, exponent: None, satisfied: None, flags: Vec::new() };
    if u < -tol || v < u - tol || u + v > 2.0 + tol {
        return out;
    }
    let finish = |mut o: EtaBudget, regime, e: f64| {
        o.regime = regime;
        o.exponent = Some(e);
        o.satisfied = Some(e <= -eta + tol);
        o
    };
    if u + v <= 2.0 - 2.0 * eta - 2.0 * theta * v {
        return finish(out, EtaRegime::TrivialBound, theta * v + (u + v) / 2.0 - 1.0);
    }
    if v - u <= 1.0 - 4.0 * eta {
        let r = v - u;
        let e = (r / 4.0 - 0.25).max(r / 2.0 - 0.5).max(-0.5 + 2.0 * theta);
        return finish(out, EtaRegime::Balanced, e);
    }
    let mut check = |ok: bool, what: &str| {
        if !ok {
            out.flags.push(format!("violated: {what}"));
        }
    };
    check(u <= 0.5 + 2.0 * eta + tol, "u <= 1/2 + 2 eta");
    check(u <= v_star + tol, "u <= v*");
    check(v_star <= 0.5 + (3.0 * theta + 6.0 * eta) / (2.0 + 2.0 * theta) + tol, "v* <= 1/2 + (3 theta + 6 eta)/(2 + 2 theta)");
    check(u + v_star <= 1.0 + 4.0 * eta + tol, "u + v* <= 1 + 4 eta");
    if v_star <= 2.0 / 3.0 - 2.0 * eta {
        let s = u + v_star;
        let e = (-1.0 / 3.0 + v_star / 2.0)
            .max(-0.3 + 9.0 * u / 50.0 + s / 5.0)
            .max(-21.0 / 64.0 + 5.0 * s / 16.0);
        return finish(out, EtaRegime::Bilinear, e);
    }
    out.regime = EtaRegime::PolyaVinogradov;
    out
}

/// [`eta_budget`] with `u = log M / log q`, `v = log N / log q`.
pub fn eta_budget_mnq(m: f64, n: f64, q: f64, theta: f64) -> EtaBudget {
    eta_budget(m.ln() / q.ln(), n.ln() / q.ln(), theta)
}

impl fmt::Display for EtaRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EtaRegime::TrivialBound => "trivial bound suffices",
            EtaRegime::Balanced => "balanced bound suffices",
            EtaRegime::Bilinear => "bilinear bound after Voronoi",
            EtaRegime::PolyaVinogradov => "PV method",
            EtaRegime::OutOfRange => "out of range",
        };
        f.write_str(s)
    }
}
