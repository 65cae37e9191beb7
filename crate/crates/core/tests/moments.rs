//! Characters, Hecke eigenvalues and Bessel values against independent sources.

use num_complex::Complex64;
use ksumlab_core::modcore::{gcd, is_prime};
use ksumlab_core::moments::{bessel_j, bessel_j_series, enumerate_characters, phi_star, tau_table};

#[test]
fn primitive_count_matches_enumeration() {
    for q in 1..=150u64 {
        let g = enumerate_characters(q).unwrap();
        // Primitive: for each prime p | q, some unit n ≡ 1 mod q/p has χ(n) ≠ 1.
        let primes: Vec<u64> = (2..=q).filter(|&p| q % p == 0 && is_prime(p)).collect();
        let induced = |i: u64, d: u64| {
            (0..q / d)
                .map(|j| 1 + j * d)
                .filter(|&n| gcd(n, q) == 1)
                .all(|n| (g.value(i, n as i64) - Complex64::new(1.0, 0.0)).norm() < 1e-9)
        };
        let direct = (0..g.len()).filter(|&i| primes.iter().all(|&p| !induced(i, q / p))).count() as u64;
        assert_eq!(direct, phi_star(q), "q={q}");
    }
}

#[test]
fn tau_first_values() {
    // Coefficients of q·Π(1 - q^n)^24, as tabulated in OEIS A000594.
    let known = [1i128, -24, 252, -1472, 4830, -6048, -16744, 84480, -113643, -115920];
    let t = tau_table(10);
    assert_eq!(&t[1..=10], &known);
}

#[test]
fn tau_multiplicative() {
    let t = tau_table(2000);
    for m in 1..45usize {
        for n in 1..45usize {
            if gcd(m as u64, n as u64) == 1 {
                assert_eq!(t[m * n], t[m] * t[n], "m={m} n={n}");
            }
        }
    }
}

#[test]
fn bessel_series_against_libm() {
    for nu in [0u32, 1, 5, 11, 23] {
        for i in 1..40 {
            let x = 0.25 * i as f64;
            let want = libm::jn(nu as i32, x);
            assert!((bessel_j_series(nu, x) - want).abs() < 1e-10, "nu={nu} x={x}");
            assert!((bessel_j(nu, x) - want).abs() < 1e-10, "nu={nu} x={x}");
        }
    }
}
