//! Components of the twisted second moment: primitive character counts, Hecke
//! relations, shifted sums, `B^±`, Voronoi summation and the exponent audit.

use anyhow::Result;
use ksumlab_core::modcore::gcd;
use ksumlab_core::moments::{b_pm, bpm_trivial_envelope, eta_budget, phi_star, BpmInput, EtaRegime, HeckeForm, Sign, SmoothWeight};
use ksumlab_core::{exec, rng};
use rand::Rng;

use super::{failure, run_cases, VerifyParams};
use crate::cases::Case;
use crate::report::SuiteReport;
use crate::tolerances as tol;

/// Range of the Hecke audit on the `Δ` table.
pub const HECKE_N_MAX: usize = 20_000;
/// Moduli of the Euler-product check.
pub const EULER_MAX_Q: u64 = 60;
/// `M, N` grid of the `B^±` audit.
pub const BPM_LENGTHS: [u64; 5] = [4, 8, 16, 32, 64];
/// Moduli of the Voronoi grid.
pub const VORONOI_Q: [u64; 10] = [5, 7, 8, 9, 11, 12, 13, 16, 17, 20];
/// Lengths of the Voronoi grid.
pub const VORONOI_N: [u64; 2] = [30, 50];
/// Steps per unit of the exponent-audit grid.
pub const ETA_STEPS: u32 = 40;

pub(super) fn run(p: &VerifyParams, report: &mut SuiteReport) -> Result<()> {
    let phi: Vec<Case> = (1..=p.max_q).map(|q| Case::PhiStar { q }).collect();
    run_cases(report, "phi_star_vs_enumeration", &phi)?;
    run_cases(report, "hecke_relations", &[Case::Hecke { n_max: HECKE_N_MAX }])?;
    run_cases(report, "d_delta_scaling", &ddelta_cases(p.seed, p.samples))?;
    let euler: Vec<Case> = (1..=EULER_MAX_Q).map(|q| Case::Euler { q }).collect();
    run_cases(report, "euler_products", &euler)?;
    bpm(p, report)?;
    let voronoi = voronoi_cases(p.seed);
    run_cases(report, "voronoi", &voronoi)?;
    // The weights are only constrained by their derivative bounds; a second bump checks robustness.
    let wide: Vec<Case> = voronoi
        .iter()
        .map(|c| match *c {
            Case::Voronoi { q, c, n, .. } => Case::Voronoi { q, c, n, weight: SmoothWeight::Wide },
            ref other => other.clone(),
        })
        .collect();
    run_cases(report, "voronoi_wide", &wide)?;
    eta(report)?;
    Ok(())
}

/// `(ℓ₁, ℓ₂, h, N, M)` all divisible by a random `δ`, so both sides have integer lengths.
pub fn ddelta_cases(seed: u64, count: usize) -> Vec<Case> {
    (0..count as u64)
        .map(|i| {
            let mut r = rng::stream(seed, "moments/ddelta", i);
            let d = r.gen_range(1..=6u64);
            let l1 = d * r.gen_range(1..=4u64);
            let l2 = d * r.gen_range(1..=4u64);
            let g = gcd(l1, l2);
            let h = g as i64 * r.gen_range(-20..=20i64);
            let n = g * r.gen_range(5..=40u64);
            let m = g * r.gen_range(5..=40u64);
            Case::DDelta { l1, l2, h, n, m }
        })
        .collect()
}

/// The twenty `(q, N)` pairs, each with a seeded unit `c mod q`.
pub fn voronoi_cases(seed: u64) -> Vec<Case> {
    let mut out = Vec::new();
    for &q in &VORONOI_Q {
        for &n in &VORONOI_N {
            let mut r = rng::stream(seed, "moments/voronoi", q * 1000 + n);
            let c = loop {
                let c = r.gen_range(1..q as i64);
                if gcd(c as u64, q) == 1 {
                    break c;
                }
            };
            out.push(Case::Voronoi { q, c, n, weight: SmoothWeight::Standard });
        }
    }
    out
}

/// `|B^±| / (N^θ (MN)^{1/2} / q)` over admissible `q ≤ max_q`. The constant is
/// measured on `q ≤ max_q / 2` and must hold up to [`tol::BPM_SLACK`] on the rest.
fn bpm(p: &VerifyParams, report: &mut SuiteReport) -> Result<()> {
    let f = HeckeForm::delta(2 * BPM_LENGTHS[BPM_LENGTHS.len() - 1] as usize);
    let mut grid = Vec::new();
    for q in 3..=p.max_q {
        if phi_star(q) == 0 {
            continue;
        }
        for &m in &BPM_LENGTHS {
            // The trivial bound is stated for N ≥ M.
            for &n in BPM_LENGTHS.iter().filter(|&&n| n >= m) {
                for sign in [Sign::Plus, Sign::Minus] {
                    grid.push(BpmInput { m, n, q, sign, w1: SmoothWeight::Standard, w2: SmoothWeight::Standard });
                }
            }
        }
    }
    let ratios = exec::map_slice(&grid, |inp| -> Result<f64> {
        Ok(b_pm(inp, &f, &f)?.abs() / bpm_trivial_envelope(inp.m, inp.n, inp.q, tol::THETA))
    });
    let ratios: Vec<f64> = ratios.into_iter().collect::<Result<_>>()?;
    let split = p.max_q / 2;
    let c_cal = grid.iter().zip(&ratios).filter(|(g, _)| g.q <= split).map(|x| *x.1).fold(0.0, f64::max);
    let c = tol::BPM_SLACK * c_cal;
    let mut failures = Vec::new();
    let mut c_val = 0.0f64;
    for (g, &r) in grid.iter().zip(&ratios) {
        if g.q <= split {
            continue;
        }
        c_val = c_val.max(r);
        if r > c {
            let case = Case::Bpm { q: g.q, m: g.m, n: g.n, sign: g.sign, weight: g.w1, c };
            failures.push(failure(
                "bpm_envelope",
                &case,
                format!("|B| <= {c:.6} * N^theta (MN)^(1/2) / q"),
                format!("ratio={r:.6}"),
            ));
        }
    }
    let checked = grid.iter().filter(|g| g.q > split).count() as u64;
    report.push_check("bpm_envelope", checked, failures);
    report.constant("bpm_constant_calibration", c_cal);
    report.constant("bpm_constant_validation", c_val);

    let wide: Vec<BpmInput> = grid.iter().map(|g| BpmInput { w1: SmoothWeight::Wide, w2: SmoothWeight::Wide, ..*g }).collect();
    let wide = exec::map_slice(&wide, |inp| -> Result<f64> {
        Ok(b_pm(inp, &f, &f)?.abs() / bpm_trivial_envelope(inp.m, inp.n, inp.q, tol::THETA))
    });
    let c_wide = wide.into_iter().collect::<Result<Vec<f64>>>()?.into_iter().fold(0.0, f64::max);
    report.constant("bpm_constant_wide_weight", c_wide);
    Ok(())
}

/// Regime audit over `0 ≤ u ≤ v`, `u + v ≤ 2` for `θ ∈ {0, 7/64}`.
fn eta(report: &mut SuiteReport) -> Result<()> {
    let mut cases = Vec::new();
    for theta in [0.0, tol::THETA] {
        for i in 0..=ETA_STEPS {
            let u = i as f64 / ETA_STEPS as f64;
            for j in 0..=2 * ETA_STEPS {
                let v = u + (2.0 - 2.0 * u) * j as f64 / (2 * ETA_STEPS) as f64;
                cases.push(Case::Eta { u, v, theta });
            }
        }
    }
    run_cases(report, "eta_budget", &cases)?;
    for theta in [0.0, tol::THETA] {
        for regime in [EtaRegime::TrivialBound, EtaRegime::Balanced, EtaRegime::Bilinear, EtaRegime::PolyaVinogradov] {
            let n = cases
                .iter()
                .filter(|c| matches!(c, Case::Eta { u, v, theta: t } if *t == theta && eta_budget(*u, *v, *t).regime == regime))
                .count();
            report.constant(&format!("eta_points_{}_theta_{theta}", regime_key(regime)), n as f64);
        }
    }
    Ok(())
}

fn regime_key(r: EtaRegime) -> &'static str {
    match r {
        EtaRegime::TrivialBound => "trivial",
        EtaRegime::Balanced => "balanced",
        EtaRegime::Bilinear => "bilinear",
        EtaRegime::PolyaVinogradov => "pv",
        EtaRegime::OutOfRange => "out_of_range",
    }
}
