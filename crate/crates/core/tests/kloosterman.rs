//! Kloosterman sums against a literal double loop and their standard invariants.

use std::f64::consts::TAU;

use ksumlab_core::kloosterman::{kl2_direct_row, kl2_fast, kloosterman_sum};
use ksumlab_core::modcore::{gcd, inv_mod, is_prime};
use ksumlab_core::Modulus;
use proptest::prelude::*;

/// `S(a, b; q)` from scratch: one modular inverse per unit, no shared tables.
fn naive(a: i64, b: i64, q: u64) -> (f64, f64) {
    if q == 1 {
        // x = 0 is the single unit mod 1.
        return (1.0, 0.0);
    }
    let (mut re, mut im) = (0.0, 0.0);
    for x in 1..q {
        if gcd(x, q) != 1 {
            continue;
        }
        let xb = (1..q).find(|&y| (x * y) % q == 1).unwrap();
        let t = (a.rem_euclid(q as i64) as u64 * x + b.rem_euclid(q as i64) as u64 * xb) % q;
        let ang = TAU * t as f64 / q as f64;
        re += ang.cos();
        im += ang.sin();
    }
    (re, im)
}

#[test]
fn literal_sum_small_moduli() {
    for q in 1..=60u64 {
        for a in 0..q as i64 {
            let s = kloosterman_sum(a as i128, 3, q).unwrap();
            let (re, im) = naive(a, 3, q);
            assert!((s.re - re).abs() < 1e-9 && (s.im - im).abs() < 1e-9, "q={q} a={a}");
        }
    }
}

#[test]
fn fast_matches_literal_on_prime_powers() {
    for q in [8u64, 16, 27, 32, 49, 64, 81, 121, 125, 128, 243, 256] {
        let m = Modulus::new(q).unwrap();
        for a in 0..q as i64 {
            let (re, im) = naive(a, 1, q);
            let v = kl2_fast(a as i128, &m).value * (q as f64).sqrt();
            assert!((v.re - re).abs() < 1e-8 && (v.im - im).abs() < 1e-8, "q={q} a={a}");
        }
    }
}

proptest! {
    #[test]
    fn sums_are_real(a in -500i64..500, b in -500i64..500, q in 1u64..400) {
        let s = kloosterman_sum(a as i128, b as i128, q).unwrap();
        prop_assert!(s.im.abs() < 1e-8);
    }

    #[test]
    fn symmetric_in_a_and_b(a in -500i64..500, b in -500i64..500, q in 1u64..400) {
        let s = kloosterman_sum(a as i128, b as i128, q).unwrap();
        let t = kloosterman_sum(b as i128, a as i128, q).unwrap();
        prop_assert!((s - t).norm() < 1e-8);
    }

    #[test]
    fn depends_on_product_for_units(a in 1u64..400, b in -500i64..500, q in 2u64..400) {
        prop_assume!(gcd(a, q) == 1);
        let s = kloosterman_sum(a as i128, b as i128, q).unwrap();
        let t = kloosterman_sum(1, a as i128 * b as i128, q).unwrap();
        prop_assert!((s - t).norm() < 1e-8);
    }

    #[test]
    fn weil_bound_at_primes(a in 1i64..5000, n in 3u64..2000) {
        let p = (n..).find(|&p| is_prime(p)).unwrap();
        prop_assume!(!(a as u64).is_multiple_of(p));
        let m = Modulus::new(p).unwrap();
        prop_assert!(kl2_fast(a as i128, &m).value.norm() <= 2.0 + 1e-9);
    }

    #[test]
    fn multiplicative_twist(a in 1i64..1000, q1 in 2u64..40, q2 in 2u64..40) {
        // S(a, 1; q1 q2) = S(a q2̄², 1; q1) S(a q1̄², 1; q2) for coprime moduli.
        prop_assume!(gcd(q1, q2) == 1);
        let i2 = inv_mod(q2 % q1, q1).unwrap() as i128;
        let i1 = inv_mod(q1 % q2, q2).unwrap() as i128;
        let lhs = kloosterman_sum(a as i128, 1, q1 * q2).unwrap();
        let rhs = kloosterman_sum(a as i128 * i2 * i2, 1, q1).unwrap() * kloosterman_sum(a as i128 * i1 * i1, 1, q2).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-7);
    }

    #[test]
    fn row_matches_single_values(q in 1u64..300, a in 0u64..300) {
        let a = a % q;
        let row = kl2_direct_row(q).unwrap();
        let s = kloosterman_sum(a as i128, 1, q).unwrap() / (q as f64).sqrt();
        prop_assert!((row[a as usize] - s).norm() < 1e-9);
    }
}
