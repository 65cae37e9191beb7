//! Modular arithmetic: factorization, CRT, inverses and square roots.

use crate::{Error, Result};

#[inline]
pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Reduce a signed integer into `[0, m)`.
#[inline]
pub fn reduce(x: i128, m: u64) -> u64 {
    x.rem_euclid(m as i128) as u64
}

/// Deterministic Miller–Rabin, exact for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

// Brent's variant; `n` must be composite and free of small factors.
fn pollard_rho(n: u64) -> u64 {
    let mut c = 1u64;
    loop {
        let f = |x: u64| (mul_mod(x, x, n) + c) % n;
        let (mut x, mut y, mut d) = (2u64, 2u64, 1u64);
        let mut power = 1u64;
        let mut lam = 0u64;
        while d == 1 {
            if power == lam {
                x = y;
                power <<= 1;
                lam = 0;
            }
            y = f(y);
            lam += 1;
            d = gcd(x.abs_diff(y), n);
        }
        if d != n {
            return d;
        }
        c += 1;
    }
}

fn split_large(n: u64, out: &mut Vec<u64>) {
    if n == 1 {
        return;
    }
    if is_prime(n) {
        out.push(n);
        return;
    }
    let d = pollard_rho(n);
    split_large(d, out);
    split_large(n / d, out);
}

const TRIAL_LIMIT: u64 = 1_000_000;

/// Sorted prime factorization `[(p, k), ...]`.
pub fn factorize(q: u64) -> Result<Vec<(u64, u32)>> {
    if q == 0 {
        return Err(Error::ZeroModulus);
    }
    let mut n = q;
    let mut out: Vec<(u64, u32)> = Vec::new();
    let push = |p: u64, n: &mut u64, out: &mut Vec<(u64, u32)>| {
        let mut k = 0;
        while (*n).is_multiple_of(p) {
            *n /= p;
            k += 1;
        }
        if k > 0 {
            out.push((p, k));
        }
    };
    push(2, &mut n, &mut out);
    let mut p = 3;
    while p <= TRIAL_LIMIT && p * p <= n {
        push(p, &mut n, &mut out);
        p += 2;
    }
    if n > 1 {
        let mut rest = Vec::new();
        split_large(n, &mut rest);
        rest.sort_unstable();
        for r in rest {
            match out.last_mut() {
                Some((p, k)) if *p == r => *k += 1,
                _ => out.push((r, 1)),
            }
        }
    }
    Ok(out)
}

/// Positive divisors of `q` in increasing order.
pub fn divisors(q: u64) -> Result<Vec<u64>> {
    let mut ds = vec![1u64];
    for (p, k) in factorize(q)? {
        let len = ds.len();
        let mut pk = 1;
        for _ in 0..k {
            pk *= p;
            for i in 0..len {
                ds.push(ds[i] * pk);
            }
        }
    }
    ds.sort_unstable();
    Ok(ds)
}

pub fn mobius(n: u64) -> Result<i64> {
    let f = factorize(n)?;
    if f.iter().any(|&(_, k)| k > 1) {
        return Ok(0);
    }
    Ok(if f.len() % 2 == 0 { 1 } else { -1 })
}

pub fn euler_phi(n: u64) -> Result<u64> {
    Ok(factorize(n)?
        .iter()
        .fold(1, |acc, &(p, k)| acc * (p - 1) * p.pow(k - 1)))
}

pub fn divisor_count(n: u64) -> Result<u64> {
    Ok(factorize(n)?.iter().map(|&(_, k)| k as u64 + 1).product())
}

/// Inverse of `a` modulo `q`.
pub fn inv_mod(a: u64, q: u64) -> Result<u64> {
    if q == 0 {
        return Err(Error::ZeroModulus);
    }
    let (mut r0, mut r1) = (q as i128, (a % q) as i128);
    let (mut s0, mut s1) = (0i128, 1i128);
    while r1 != 0 {
        let t = r0 / r1;
        (r0, r1) = (r1, r0 - t * r1);
        (s0, s1) = (s1, s0 - t * s1);
    }
    if r0 != 1 {
        if q == 1 {
            return Ok(0);
        }
        return Err(Error::NotInvertible { value: a, modulus: q });
    }
    Ok(reduce(s0, q))
}

/// A positive modulus with its factorization and CRT idempotents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Modulus {
    q: u64,
    factors: Vec<(u64, u32)>,
    crt_basis: Vec<u64>,
}

impl Modulus {
    pub fn new(q: u64) -> Result<Self> {
        let factors = factorize(q)?;
        let crt_basis = factors
            .iter()
            .map(|&(p, k)| {
                let pk = p.pow(k);
                let rest = q / pk;
                // e = rest * (rest^{-1} mod p^k) is 1 mod p^k and 0 mod rest.
                let inv = inv_mod(rest % pk, pk).expect("coprime cofactor");
                mul_mod(rest, inv, q)
            })
            .collect();
        Ok(Modulus { q, factors, crt_basis })
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn factors(&self) -> &[(u64, u32)] {
        &self.factors
    }

    pub fn crt_basis(&self) -> &[u64] {
        &self.crt_basis
    }

    /// The prime powers `p^k` exactly dividing `q`, in order of `p`.
    pub fn prime_powers(&self) -> Vec<u64> {
        self.factors.iter().map(|&(p, k)| p.pow(k)).collect()
    }

    pub fn is_prime(&self) -> bool {
        self.factors.len() == 1 && self.factors[0].1 == 1
    }

    pub fn phi(&self) -> u64 {
        self.factors
            .iter()
            .fold(1, |acc, &(p, k)| acc * (p - 1) * p.pow(k - 1))
    }

    /// Residues of `x` modulo each prime power.
    pub fn split(&self, x: u64) -> Vec<u64> {
        self.prime_powers().iter().map(|&pk| x % pk).collect()
    }

    /// Inverse of [`Modulus::split`].
    pub fn combine(&self, parts: &[u64]) -> Result<u64> {
        if parts.len() != self.factors.len() {
            return Err(Error::Precondition(format!(
                "expected {} components, got {}",
                self.factors.len(),
                parts.len()
            )));
        }
        let q = self.q;
        Ok(parts
            .iter()
            .zip(&self.crt_basis)
            .fold(0u64, |acc, (&r, &e)| ((acc as u128 + mul_mod(r, e, q) as u128) % q as u128) as u64)
            % q)
    }

    pub fn residue(&self, value: i128) -> Residue {
        Residue { value: reduce(value, self.q), q: self.q }
    }
}

/// A residue class `value mod q` with `0 <= value < q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Residue {
    pub value: u64,
    pub q: u64,
}

impl Residue {
    pub fn new(value: i128, q: u64) -> Result<Self> {
        if q == 0 {
            return Err(Error::ZeroModulus);
        }
        Ok(Residue { value: reduce(value, q), q })
    }

    pub fn inv(self) -> Result<Self> {
        Ok(Residue { value: inv_mod(self.value, self.q)?, q: self.q })
    }

    pub fn mul(self, other: Self) -> Self {
        debug_assert_eq!(self.q, other.q);
        Residue { value: mul_mod(self.value, other.value, self.q), q: self.q }
    }

    pub fn add(self, other: Self) -> Self {
        debug_assert_eq!(self.q, other.q);
        Residue { value: ((self.value as u128 + other.value as u128) % self.q as u128) as u64, q: self.q }
    }

    pub fn pow(self, e: u64) -> Self {
        Residue { value: pow_mod(self.value, e, self.q), q: self.q }
    }
}

fn tonelli_shanks(a: u64, p: u64) -> Option<u64> {
    if pow_mod(a, (p - 1) / 2, p) != 1 {
        return None;
    }
    if p % 4 == 3 {
        return Some(pow_mod(a, (p + 1) / 4, p));
    }
    let s = (p - 1).trailing_zeros();
    let q = (p - 1) >> s;
    let z = (2..p).find(|&z| pow_mod(z, (p - 1) / 2, p) == p - 1)?;
    let mut m = s;
    let mut c = pow_mod(z, q, p);
    let mut t = pow_mod(a, q, p);
    let mut r = pow_mod(a, q.div_ceil(2), p);
    while t != 1 {
        let mut i = 0;
        let mut t2 = t;
        while t2 != 1 {
            t2 = mul_mod(t2, t2, p);
            i += 1;
        }
        let b = pow_mod(c, 1 << (m - i - 1), p);
        m = i;
        c = mul_mod(b, b, p);
        t = mul_mod(t, c, p);
        r = mul_mod(r, b, p);
    }
    Some(r)
}

/// Both square roots of `a` modulo `p^k` for an odd prime `p`, smaller first.
///
/// `None` when `a` is a non-residue. `p | a` is rejected.
pub fn sqrt_mod_odd(a: i128, p: u64, k: u32) -> Result<Option<(u64, u64)>> {
    if p.is_multiple_of(2) || !is_prime(p) {
        return Err(Error::Precondition(format!("{p} is not an odd prime")));
    }
    if k == 0 {
        return Err(Error::Precondition("exponent must be positive".into()));
    }
    let pk = p
        .checked_pow(k)
        .filter(|&v| v <= 1 << 62)
        .ok_or_else(|| Error::OutOfRange(format!("{p}^{k}")))?;
    let a = reduce(a, pk);
    if a.is_multiple_of(p) {
        return Err(Error::DegenerateInput(format!("{p} divides {a}")));
    }
    let Some(mut r) = tonelli_shanks(a % p, p) else {
        return Ok(None);
    };
    let mut level = p;
    for _ in 1..k {
        level *= p;
        // r <- r - (r^2 - a) / (2r)
        let f = (mul_mod(r, r, level) + level - a % level) % level;
        let d = inv_mod(mul_mod(2, r, level), level)?;
        r = (r + level - mul_mod(f, d, level)) % level;
    }
    let other = (pk - r) % pk;
    Ok(Some((r.min(other), r.max(other))))
}

const MAX_TWO_ADIC: u32 = 127;

#[inline]
fn mask(k: u32) -> u128 {
    if k >= 128 {
        u128::MAX
    } else {
        (1u128 << k) - 1
    }
}

/// Inverse of an odd `x` modulo `2^k`.
pub fn inv_mod_pow2(x: u128, k: u32) -> u128 {
    debug_assert!(x & 1 == 1);
    let mut y: u128 = 1;
    // Each Newton step doubles the number of correct low bits.
    for _ in 0..7 {
        y = y.wrapping_mul(2u128.wrapping_sub(x.wrapping_mul(y)));
    }
    y & mask(k)
}

/// The 2-adic square root `x ≡ 1 mod 4` of `u ≡ 1 mod 8`, modulo `2^{k-1}`.
///
/// Satisfies `x^2 ≡ u mod 2^k`; built one bit at a time from `x = 1`.
pub fn two_adic_sqrt(u: i128, k: u32) -> Result<u128> {
    if k < 3 {
        return Err(Error::Precondition(format!("k = {k} < 3")));
    }
    if k > MAX_TWO_ADIC {
        return Err(Error::OutOfRange(format!("k = {k} > {MAX_TWO_ADIC}")));
    }
    if u.rem_euclid(8) != 1 {
        return Err(Error::NoSquareRoot(format!("{u} is not 1 mod 8")));
    }
    let u = u as u128; // two's complement agrees with u modulo 2^128
    let mut x: u128 = 1;
    for level in 3..k {
        if (x.wrapping_mul(x) ^ u) & mask(level + 1) != 0 {
            x += 1u128 << (level - 1);
        }
    }
    Ok(x & mask(k - 1))
}

/// Checks the first-order shift congruence for 2-adic square roots:
///
/// `(u+2^k t)_{1/2} - (u'+2^k t')_{1/2}
///   ≡ u_{1/2} - u'_{1/2} + 2^{k-1}(t/u_{1/2} - t'/u'_{1/2})  mod 2^{2k+λ-3}`.
///
/// Requires `u ≡ u' mod 2^{λ+1}` and `t ≡ t' mod 2^λ`.
pub fn two_adic_sqrt_shift_check(u: i64, u2: i64, t: i64, t2: i64, k: u32, lambda: u32) -> Result<bool> {
    if k < 3 {
        return Err(Error::Precondition(format!("k = {k} < 3")));
    }
    if u.rem_euclid(8) != 1 || u2.rem_euclid(8) != 1 {
        return Err(Error::Precondition("u, u' must be 1 mod 8".into()));
    }
    if k > 60 || lambda > 60 {
        return Err(Error::OutOfRange("k and λ must be at most 60".into()));
    }
    if (u as i128 - u2 as i128).rem_euclid(1i128 << (lambda + 1)) != 0 {
        return Err(Error::Precondition("u ≢ u' mod 2^{λ+1}".into()));
    }
    if (t as i128 - t2 as i128).rem_euclid(1i128 << lambda) != 0 {
        return Err(Error::Precondition("t ≢ t' mod 2^λ".into()));
    }
    let m = 2 * k + lambda - 3;
    let root = |v: i128| two_adic_sqrt(v, m + 1);
    let shift = |v: i64, s: i64| v as i128 + ((s as i128) << k);
    let lhs = root(shift(u, t))?.wrapping_sub(root(shift(u2, t2))?);
    let (r, r2) = (root(u as i128)?, root(u2 as i128)?);
    let half = 1u128 << (k - 1);
    let rhs = r
        .wrapping_sub(r2)
        .wrapping_add(inv_mod_pow2(r, m).wrapping_mul(half).wrapping_mul(t as u128))
        .wrapping_sub(inv_mod_pow2(r2, m).wrapping_mul(half).wrapping_mul(t2 as u128));
    Ok((lhs ^ rhs) & mask(m) == 0)
}
