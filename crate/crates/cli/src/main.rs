use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ksumlab::cases::replay;
use ksumlab::report::{to_json, write_or_print, SuiteReport};
use ksumlab::suites::{run_suite, symbolic, Suite, VerifyOptions};
use ksumlab::{scan_csv, tolerances as tol};
use ksumlab_core::bilinear::{family_moduli, scan, Family, Shape};
use ksumlab_core::kloosterman::{kl2_exact, kl2_fast};
use ksumlab_core::moments::{
    b_pm, bpm_balanced_envelope, bpm_trivial_envelope, enumerate_characters, eta_budget, eta_budget_mnq, euler_pq,
    phi_star, shifted_sums, voronoi_check, voronoi_dual_length, BpmInput, HeckeForm, Length, ShiftedInput,
    ShiftedKind, Sign, SmoothWeight,
};
use ksumlab_core::variety::{count_k1, count_k_oracle, explicit_bad_member, regime, verify_identities};
use ksumlab_core::Modulus;
use serde_json::json;

#[derive(Parser)]
#[command(name = "ksumlab", version, about = "Kloosterman-sum verification laboratory")]
struct Cli {
    /// Seed of every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 keeps the default pool.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exact cyclotomic arithmetic where supported.
    #[arg(long, global = true)]
    exact: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Normalized Kloosterman sum `Kl₂(a; q)`.
    Kl {
        #[arg(long, allow_hyphen_values = true)]
        a: i64,
        #[arg(long)]
        q: u64,
    },
    /// Runs a named suite and writes its JSON report.
    Verify {
        #[arg(long)]
        suite: Suite,
        #[arg(long)]
        max_p: Option<u64>,
        #[arg(long)]
        max_q: Option<u64>,
        #[arg(long)]
        max_s: Option<u32>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Point counts of `𝒦(b, h; p)`.
    Variety {
        #[command(subcommand)]
        cmd: VarietyCmd,
    },
    /// Polynomial identities of the sign-product reduction.
    Symbolic {
        /// `all` or one identity id.
        #[arg(long, default_value = "all")]
        identity: String,
    },
    /// Random bilinear forms against the envelopes, as CSV.
    ScanBilinear {
        #[arg(long)]
        family: Family,
        #[arg(long, default_value_t = 100)]
        q_min: u64,
        #[arg(long)]
        q_max: u64,
        #[arg(long, default_value = "M=N=q^0.5")]
        shape: Shape,
        #[arg(long, default_value_t = 4)]
        trials: usize,
        /// Moduli in the sweep, log-spaced.
        #[arg(long, default_value_t = 8)]
        points: usize,
    },
    /// Components of the twisted second moment.
    Moments {
        #[command(subcommand)]
        cmd: MomentsCmd,
    },
    /// Re-evaluates one case id from a report.
    Replay { case: String },
}

#[derive(Subcommand)]
enum VarietyCmd {
    Count {
        #[arg(long)]
        p: u64,
        /// `b1,b2,b3,b4`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        b: Vec<i64>,
        /// `h1,h2`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        h: Vec<i64>,
        /// Also run the brute-force oracle.
        #[arg(long)]
        oracle: bool,
    },
}

#[derive(Args)]
struct FormArg {
    /// `delta`, `e4_delta` or a path to an `n λ(n)` table.
    #[arg(long, default_value = "delta")]
    form: String,
}

impl FormArg {
    fn load(&self, n_max: u64) -> Result<HeckeForm> {
        Ok(match self.form.as_str() {
            "delta" => HeckeForm::delta(n_max as usize),
            "e4_delta" => HeckeForm::e4_delta(n_max as usize)?,
            path => {
                let text = std::fs::read_to_string(path).with_context(|| format!("cannot read form table {path}"))?;
                HeckeForm::from_table(path, &text)?
            }
        })
    }
}

#[derive(Subcommand)]
enum MomentsCmd {
    /// `φ*(q)` and the enumerated primitive character count.
    Phistar {
        #[arg(long)]
        q: u64,
    },
    /// `P(1)`, `Q(1)` and `P'(1)/P(1)`.
    Euler {
        #[arg(long)]
        q: u64,
        #[command(flatten)]
        form: FormArg,
    },
    /// `B^±(M, N)` with its envelopes.
    Bpm {
        #[arg(long)]
        q: u64,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value = "plus")]
        sign: Sign,
        #[arg(long, default_value = "standard")]
        weight: SmoothWeight,
        #[command(flatten)]
        form: FormArg,
    },
    /// Shifted convolution sums with their envelopes.
    Shifted {
        #[arg(long, default_value = "D")]
        kind: ShiftedKind,
        #[arg(long)]
        l1: u64,
        #[arg(long)]
        l2: u64,
        /// `h` for `D`, `d` otherwise.
        #[arg(long, allow_hyphen_values = true)]
        h: i64,
        /// Length `N`, integer or fraction.
        #[arg(long)]
        n: Length,
        #[arg(long)]
        m: Length,
        #[arg(long)]
        q: Option<u64>,
        #[arg(long, default_value_t = tol::THETA)]
        theta: f64,
        #[arg(long, default_value = "standard")]
        weight: SmoothWeight,
        #[command(flatten)]
        form: FormArg,
    },
    /// Voronoi summation against `e(cn/q)`.
    Voronoi {
        #[arg(long)]
        q: u64,
        #[arg(long, allow_hyphen_values = true)]
        c: i64,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value = "standard")]
        weight: SmoothWeight,
        #[command(flatten)]
        form: FormArg,
    },
    /// Exponent audit at `M = q^u`, `N = q^v`, or at explicit `M, N, q`.
    Eta {
        #[arg(long)]
        u: Option<f64>,
        #[arg(long)]
        v: Option<f64>,
        #[arg(long)]
        m: Option<f64>,
        #[arg(long)]
        n: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, default_value_t = tol::THETA)]
        theta: f64,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()?;
    }
    #[cfg(not(feature = "parallel"))]
    if cli.threads > 1 {
        bail!("built without the parallel feature");
    }
    let out = cli.out.as_deref();
    match &cli.cmd {
        Cmd::Kl { a, q } => kl(*a, *q, cli.exact, out),
        Cmd::Verify { suite, max_p, max_q, max_s, samples } => {
            let opts = VerifyOptions {
                max_p: *max_p,
                max_q: *max_q,
                max_s: *max_s,
                samples: *samples,
                seed: cli.seed,
                exact: cli.exact,
            };
            let report = run_suite(*suite, &opts)?;
            finish_report(&report, out)
        }
        Cmd::Variety { cmd: VarietyCmd::Count { p, b, h, oracle } } => variety_count(*p, b, h, *oracle, out),
        Cmd::Symbolic { identity } => {
            let mut report = SuiteReport::new("symbolic", json!({ "identity": identity }));
            symbolic::run_identities(&mut report, identity)?;
            let results = verify_identities(identity)?;
            let v = json!({ "report": report, "results": results });
            write_or_print(out, &to_json(&v)?)?;
            exit_on_failure(report.pass())
        }
        Cmd::ScanBilinear { family, q_min, q_max, shape, trials, points } => {
            let qs = family_moduli(*family, *q_min, *q_max, *points);
            if qs.is_empty() {
                bail!("no {family} moduli in [{q_min}, {q_max}]");
            }
            let r = scan(*family, &qs, *shape, *trials, cli.seed)?;
            for f in &r.findings {
                eprintln!("finding: {f}");
            }
            write_or_print(out, &scan_csv(std::slice::from_ref(&r)))
        }
        Cmd::Moments { cmd } => moments(cmd, out),
        Cmd::Replay { case } => {
            let o = replay(case)?;
            write_or_print(out, &to_json(&o)?)?;
            exit_on_failure(o.pass)
        }
    }
}

fn finish_report(report: &SuiteReport, out: Option<&Path>) -> Result<()> {
    write_or_print(out, &to_json(report)?)?;
    for c in report.checks.iter().filter(|c| !c.pass) {
        eprintln!("FAIL {}: {} of {} cases", c.name, c.failures, c.cases);
    }
    exit_on_failure(report.pass())
}

fn exit_on_failure(pass: bool) -> Result<()> {
    if !pass {
        std::process::exit(1);
    }
    Ok(())
}

fn kl(a: i64, q: u64, exact: bool, out: Option<&Path>) -> Result<()> {
    let v = kl2_fast(a as i128, &Modulus::new(q)?).value;
    let mut obj = json!({ "a": a, "q": q, "re": v.re, "im": v.im });
    if exact {
        let c = kl2_exact(a as i128, q)?;
        obj["exact"] = json!({ "value": c.eval().re, "terms": c.terms.len(), "order": c.order });
    }
    write_or_print(out, &to_json(&obj)?)
}

fn variety_count(p: u64, b: &[i64], h: &[i64], oracle: bool, out: Option<&Path>) -> Result<()> {
    let b: [i64; 4] = b.try_into().map_err(|_| anyhow::anyhow!("--b needs four values"))?;
    let h: [i64; 2] = h.try_into().map_err(|_| anyhow::anyhow!("--h needs two values"))?;
    let k = count_k1(&b, &h, p)?;
    let (in_b, in_bh) = explicit_bad_member(&b, &h, p);
    let mut obj = json!({
        "p": p, "b": b, "h": h,
        "regime": regime(&b, &h, p),
        "in_v4_bad": in_b, "in_v2_bad": in_bh,
        "k_full": k.k_full, "k1": k.k1,
    });
    if oracle {
        let o = count_k_oracle(&b, &h, p, false)?;
        obj["oracle"] = json!({ "k_full": o.k_full, "k1": o.k1, "agrees": o == k });
    }
    write_or_print(out, &to_json(&obj)?)
}

fn moments(cmd: &MomentsCmd, out: Option<&Path>) -> Result<()> {
    let v = match cmd {
        MomentsCmd::Phistar { q } => {
            let g = enumerate_characters(*q)?;
            json!({ "q": q, "phi_star": phi_star(*q), "enumerated": g.primitive_count(), "characters": g.len() })
        }
        MomentsCmd::Euler { q, form } => {
            let top = ksumlab_core::modcore::factorize(*q)?.iter().map(|x| x.0 * x.0).max().unwrap_or(1);
            let f = form.load(top)?;
            serde_json::to_value(euler_pq(*q, &f, &f)?)?
        }
        MomentsCmd::Bpm { q, m, n, sign, weight, form } => {
            let f = form.load(2 * m.max(n))?;
            let inp = BpmInput { m: *m, n: *n, q: *q, sign: *sign, w1: *weight, w2: *weight };
            let b = b_pm(&inp, &f, &f)?;
            let triv = bpm_trivial_envelope(*m, *n, *q, tol::THETA);
            json!({
                "input": inp, "value": b,
                "envelope_trivial": triv, "ratio_trivial": b.abs() / triv,
                "envelope_balanced": bpm_balanced_envelope(*m, *n, *q, tol::THETA),
            })
        }
        MomentsCmd::Shifted { kind, l1, l2, h, n, m, q, theta, weight, form } => {
            let inp = ShiftedInput { kind: *kind, l1: *l1, l2: *l2, h_or_d: *h, n: *n, m: *m, q: *q, theta: *theta };
            let span = 2 * (n.ceil().to_integer() * l1).max(m.ceil().to_integer() * l2) + 2;
            let f = form.load(span.max(2 * q.unwrap_or(1) * n.ceil().to_integer()))?;
            json!({ "input": inp, "result": shifted_sums(&inp, &f, &f, (*weight, *weight))? })
        }
        MomentsCmd::Voronoi { q, c, n, weight, form } => {
            let need = voronoi_dual_length(*weight, 12, *q, *n).max(2 * n);
            let f = form.load(need)?;
            let r = voronoi_check(&f, *c, *q, *n, *weight)?;
            json!({
                "q": q, "c": c, "n": n,
                "lhs": [r.lhs.re, r.lhs.im], "rhs": [r.rhs.re, r.rhs.im],
                "residual": r.residual, "dual_terms": r.dual_terms, "y_cutoff": r.y_cutoff,
                "pass": r.residual < tol::VORONOI,
            })
        }
        MomentsCmd::Eta { u, v, m, n, q, theta } => {
            let b = match (u, v, m, n, q) {
                (Some(u), Some(v), None, None, None) => eta_budget(*u, *v, *theta),
                (None, None, Some(m), Some(n), Some(q)) => eta_budget_mnq(*m, *n, *q, *theta),
                _ => bail!("give either --u --v or --m --n --q"),
            };
            json!({ "budget": b, "regime_text": b.regime.to_string() })
        }
    };
    write_or_print(out, &to_json(&v)?)
}
