//! One PASS/FAIL line per acceptance criterion.
//!
//! Each criterion combines the matching line of the full `verify-all` suite
//! (run through the binary) with an oracle written here from the
//! definitions: naive loops over residues, own modular inverses, own
//! divisor counts. Tolerances are the ones the criteria pin.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::process::Command;
use std::time::Instant;

use expsum::bilinear::{self, BilinearConfig};
use expsum::charsums::{self, CharSumParams};
use expsum::distribution::{self, D3Table};
use expsum::expsums::{kloosterman_explicit_pp, kloosterman_split, HyperTable};
use expsum::modarith::PrimePower;
use expsum::voronoi::{self, SmoothWeight};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn md(a: i64, q: u64) -> u64 {
    a.rem_euclid(q as i64) as u64
}

/// Inverse by the extended Euclidean algorithm; `None` for non-units.
fn inv(a: u64, q: u64) -> Option<u64> {
    let (mut r0, mut r1) = (q as i128, (a % q) as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let k = r0 / r1;
        (r0, r1) = (r1, r0 - k * r1);
        (t0, t1) = (t1, t0 - k * t1);
    }
    (r0 == 1).then(|| t0.rem_euclid(q as i128) as u64)
}

fn e(k: u64, q: u64) -> Complex64 {
    Complex64::from_polar(1.0, TAU * (k % q) as f64 / q as f64)
}

/// `S(a, b; q)` summed literally.
fn kloosterman(a: i64, b: i64, q: u64) -> f64 {
    if q == 1 {
        return 1.0;
    }
    let (a, b) = (md(a, q) as u128, md(b, q) as u128);
    (1..q)
        .filter_map(|x| {
            inv(x, q).map(|xi| e(((a * x as u128 + b * xi as u128) % q as u128) as u64, q).re)
        })
        .sum()
}

/// `q^-1 sum_{x, y units} e((m x + y + (x y)^-1) / q)`.
fn hyper_kl3(m: i64, q: u64) -> Complex64 {
    if q == 1 {
        return Complex64::new(1.0, 0.0);
    }
    let m = md(m, q);
    let mut acc = Complex64::new(0.0, 0.0);
    for x in 1..q {
        let Some(xi) = inv(x, q) else { continue };
        for y in 1..q {
            let Some(yi) = inv(y, q) else { continue };
            acc += e(m * x + y + xi * yi % q, q);
        }
    }
    acc / q as f64
}

fn is_prime(n: u64) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
}

fn divisor_count(n: u64) -> u64 {
    (1..=n).filter(|d| n % d == 0).count() as u64
}

/// Criterion lines of a `verify-all` run, keyed by check name.
fn parse_suite(stdout: &str) -> BTreeMap<String, (bool, String)> {
    stdout
        .lines()
        .filter_map(|l| {
            let (status, rest) = l.split_once(' ')?;
            let (name, detail) = rest.split_once(": ")?;
            let passed = match status {
                "PASS" => true,
                "FAIL" => false,
                _ => return None,
            };
            Some((name.to_string(), (passed, detail.to_string())))
        })
        .collect()
}

struct Report {
    failures: usize,
}

impl Report {
    fn line(
        &mut self,
        name: &str,
        suite: Option<&(bool, String)>,
        oracle: Result<String, String>,
        secs: f64,
    ) {
        let suite_ok = suite.is_some_and(|s| s.0);
        let passed = suite_ok && oracle.is_ok();
        if !passed {
            self.failures += 1;
        }
        let suite_text = suite.map_or("missing from verify-all".to_string(), |s| s.1.clone());
        let oracle_text = match oracle {
            Ok(s) => s,
            Err(s) => format!("ORACLE MISMATCH {s}"),
        };
        println!(
            "{} {name} [{secs:.1}s]: suite: {suite_text}; oracle: {oracle_text}",
            if passed { "PASS" } else { "FAIL" }
        );
    }
}

fn oracle_explicit() -> Result<String, String> {
    let mut cases = 0;
    for p in [3u64, 5, 7, 11, 13] {
        let mut gamma = 2;
        while p.pow(gamma) <= 3_000 {
            let q = p.pow(gamma);
            let pp = PrimePower::new(p, gamma).unwrap();
            let scale = 2.0 * (q as f64).sqrt();
            for beta in (1..q).filter(|b| b % p != 0) {
                let want = kloosterman(1, beta as i64, q);
                let got = kloosterman_explicit_pp(beta as i64, pp).map_err(|e| e.to_string())?;
                let residue = (1..q).any(|l| l * l % q == beta);
                if !residue && (got.re != 0.0 || got.im != 0.0) {
                    return Err(format!("non-residue {beta} mod {q} gave {got}"));
                }
                if (got.re - want).abs() > 1e-9 * scale || got.im != 0.0 {
                    return Err(format!("S(1,{beta};{q}): {} vs {want}", got.re));
                }
                cases += 1;
            }
            gamma += 1;
        }
    }
    Ok(format!(
        "{cases} arguments with p^gamma <= 3000 against literal sums"
    ))
}

fn oracle_sigma00() -> Result<String, String> {
    // sigma_{0,0}(k, l) counts ordered (d1, d2, e) with d1 d2 e = l, (d2, k) = 1
    for k in 1..=80u64 {
        for l in 1..=80u64 {
            let mut count = 0;
            for d1 in (1..=l).filter(|d| l % d == 0) {
                count += (1..=l / d1)
                    .filter(|d2| (l / d1) % d2 == 0 && gcd(*d2, k) == 1)
                    .count() as u64;
            }
            let got = expsum::arith::sigma00(k, l).map_err(|e| e.to_string())?;
            if got != count {
                return Err(format!("sigma00({k},{l}) = {got}, count {count}"));
            }
        }
    }
    Ok("6400 pairs k, l <= 80 against triple counting".into())
}

fn oracle_split() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for q in (2..=400u64).filter(|&q| !is_prime(q)) {
        for _ in 0..3 {
            let (a, b) = (rng.gen_range(0..q as i64), rng.gen_range(0..q as i64));
            let d = (kloosterman_split(a, b, q).re - kloosterman(a, b, q)).abs() / q as f64;
            worst = worst.max(d);
            cases += 1;
        }
    }
    if worst > 1e-9 {
        return Err(format!("split residual {worst:e}"));
    }
    let mut hyper_worst = 0.0f64;
    for q in 1..=40u64 {
        let table = HyperTable::new(q);
        for m in 0..q as i64 {
            hyper_worst = hyper_worst.max((table.get(m) - hyper_kl3(m, q)).norm() / q as f64);
        }
    }
    if hyper_worst > 1e-9 {
        return Err(format!("Kl3 residual {hyper_worst:e}"));
    }
    Ok(format!(
        "{cases} composite samples q <= 400, max |split - literal| / q = {worst:.3e}; Kl3 table vs literal for q <= 40, max / q = {hyper_worst:.3e}"
    ))
}

fn oracle_weil() -> Result<String, String> {
    let (mut s_max, mut k_max) = (0.0f64, 0.0f64);
    for p in (3..=60u64).filter(|&p| is_prime(p)) {
        for a in 0..p as i64 {
            for b in (0..p as i64).filter(|&b| a != 0 || b != 0) {
                s_max = s_max.max(kloosterman(a, b, p).abs() / (2.0 * (p as f64).sqrt()));
            }
        }
        for m in 1..p as i64 {
            k_max = k_max.max(hyper_kl3(m, p).norm());
        }
    }
    if s_max > 1.0 + 1e-12 || k_max > 3.0 {
        return Err(format!("|S|/2sqrt(p) = {s_max}, |Kl3| = {k_max}"));
    }
    Ok(format!(
        "literal sums for p <= 60: max |S|/2sqrt(p) = {s_max:.6}, max |Kl3| = {k_max:.6}"
    ))
}

/// Literal `C_{gamma,u}` from its definition.
fn correlation(pr: &CharSumParams) -> Complex64 {
    let (p, gamma) = (pr.pp.p(), pr.pp.gamma());
    let q = p.pow(gamma);
    let pu = p.pow(pr.u);
    let shift = p.pow(gamma - pr.u) as i64;
    let arg = |v: i64| inv(md(v, q), q).unwrap_or(0) as i64;
    let mut acc = 0.0;
    for a1 in (1..pu).filter(|a| a % p != 0) {
        for a2 in (1..pu).filter(|a| a % p != 0) {
            let lhs = md(pr.lam1, pu) * inv(a1, pu).unwrap() % pu + pu
                - md(pr.lam2, pu) * inv(a2, pu).unwrap() % pu;
            if lhs % pu != md(pr.m, pu) {
                continue;
            }
            let x1 = arg(pr.s1 * shift * a1 as i64 + pr.t1);
            let x2 = arg(pr.s2 * shift * a2 as i64 + pr.t2);
            acc += kloosterman(1, x1, q) * kloosterman(1, x2, q);
        }
    }
    Complex64::new(acc, 0.0)
}

fn oracle_ppower() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cases = 0;
    for (p, gamma, u) in [(3u64, 3u32, 2u32), (3, 4, 3), (5, 2, 1), (5, 3, 2)] {
        let q = p.pow(gamma) as i64;
        for _ in 0..6 {
            let unit = |rng: &mut ChaCha8Rng| loop {
                let v = rng.gen_range(1..q);
                if v % p as i64 != 0 {
                    break v;
                }
            };
            let pr = CharSumParams {
                pp: PrimePower::new(p, gamma).unwrap(),
                u,
                s1: unit(&mut rng),
                t1: unit(&mut rng),
                s2: unit(&mut rng),
                t2: unit(&mut rng),
                lam1: unit(&mut rng),
                lam2: unit(&mut rng),
                m: rng.gen_range(0..q),
            };
            if pr.validate().is_err() {
                continue;
            }
            let got = charsums::frak_c_gamma_u(&pr).map_err(|e| e.to_string())?;
            let want = correlation(&pr);
            if (got - want).norm() > 1e-6 * (p.pow(2 * u)) as f64 {
                return Err(format!("{pr:?}: {got} vs {want}"));
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} tuples against the literal double sum"))
}

fn oracle_prime() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut cases = 0;
    for p in [3u64, 5, 7, 11, 13, 17, 19, 23, 29, 31] {
        for _ in 0..5 {
            let mut r = || rng.gen_range(1..p as i64);
            let pr = CharSumParams::prime(p, r(), r(), r(), r(), r(), r(), r() - 1).unwrap();
            let Ok(got) = charsums::frak_c_11(&pr) else {
                continue;
            };
            let want = correlation(&pr);
            if (got.sum_value - want).norm() > 1e-6 * (p * p) as f64 {
                return Err(format!("{pr:?}: {} vs {want}", got.sum_value));
            }
            cases += 1;
        }
    }
    Ok(format!(
        "{cases} tuples p <= 31 against the literal double sum"
    ))
}

fn oracle_df() -> Result<String, String> {
    let spot: f64 = (1..5).map(|x| kloosterman(1, x, 5).powi(2)).sum();
    if (spot - 19.0).abs() > 1e-6 {
        return Err(format!("sum* |S(1,x;5)|^2 = {spot}"));
    }
    Ok(format!("literal sum* |S(1,x;5)|^2 = {spot:.9}"))
}

fn oracle_cal_c() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cases = 0;
    for q in [12u64, 35, 45, 63, 77] {
        for _ in 0..4 {
            let unit = |rng: &mut ChaCha8Rng| loop {
                let v = rng.gen_range(1..q as i64);
                if gcd(v as u64, q) == 1 {
                    break v;
                }
            };
            let (n1, n2, b) = (unit(&mut rng), unit(&mut rng), unit(&mut rng));
            let mtil = rng.gen_range(0..q as i64);
            let got = charsums::cal_c(n1, n2, mtil, b, q).map_err(|e| e.to_string())?;
            let coef = md(n1, q) * inv(md(n2, q), q).unwrap() % q;
            let shift = inv(md(n2 * b, q), q).unwrap() * md(mtil, q) % q;
            let mut want = 0.0;
            for x in (1..q).filter(|&x| gcd(x, q) == 1) {
                let w = (coef * x + shift) % q;
                let Some(wi) = inv(w, q) else { continue };
                want += kloosterman(1, inv(x, q).unwrap() as i64, q) * kloosterman(1, wi as i64, q);
            }
            if (got.sum_value.re - want).abs() > 1e-6 * (q * q) as f64 {
                return Err(format!(
                    "C({n1},{n2},{mtil}) mod {q}: {} vs {want}",
                    got.sum_value
                ));
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} tuples against the literal sum over x"))
}

fn oracle_voronoi() -> Result<String, String> {
    let mut worst = 0.0f64;
    for x in [50.0, 100.0] {
        let h = SmoothWeight::new(x).unwrap();
        for q in [1u64, 4, 7, 12] {
            for a in (1..=q as i64).filter(|&a| gcd(a as u64, q) == 1) {
                let got = voronoi::voronoi_lhs(a, q, &h).map_err(|e| e.to_string())?;
                let want: Complex64 = (1..=2 * x as u64)
                    .map(|n| e(md(a, q) * n % q, q) * (divisor_count(n) as f64 * h.eval(n as f64)))
                    .sum();
                worst = worst.max((got - want).norm() / want.norm());
            }
        }
        // main term for q = 1 by the trapezoid rule on the smooth weight
        let steps = 200_000;
        let dx = x / steps as f64;
        let main: f64 = (0..=steps)
            .map(|i| {
                let y = x + i as f64 * dx;
                let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                w * (y.ln() + 2.0 * 0.577_215_664_901_532_9) * h.eval(y) * dx
            })
            .sum();
        let got = voronoi::voronoi_main(1, &h);
        worst = worst.max((got - main).abs() / main.abs());
    }
    if worst > 1e-9 {
        return Err(format!("relative difference {worst:e}"));
    }
    Ok(format!("divisor-sum side and q = 1 main term against literal sums, max relative difference {worst:.3e}"))
}

fn oracle_distribution() -> Result<String, String> {
    let x = 10_000u64;
    let table = D3Table::new(x);
    let mut d3 = vec![0u64; x as usize + 1];
    for a in 1..=x {
        for b in 1..=x / a {
            for c in 1..=x / (a * b) {
                d3[(a * b * c) as usize] += 1;
            }
        }
    }
    if let Some(n) = (1..=x).find(|&n| table.get(n) != d3[n as usize]) {
        return Err(format!("d3({n}) = {} vs {}", table.get(n), d3[n as usize]));
    }
    for q in [9u64, 30] {
        for a in (1..q).filter(|&a| gcd(a, q) == 1) {
            let want: u64 = (1..=x).filter(|n| n % q == a).map(|n| d3[n as usize]).sum();
            if distribution::d3_ap_sum(x, q, a) != want {
                return Err(format!("progression {a} mod {q}"));
            }
        }
    }
    Ok(format!(
        "d3 sieve and progression sums to {x} against triple counting"
    ))
}

fn oracle_bilinear() -> Result<String, String> {
    let mut worst = 0.0f64;
    for (q, b, m, n_start, len) in [
        (7u64, 3i64, 20u64, 1i64, 5usize),
        (30, 7, 40, 4, 6),
        (27, 2, 30, 10, 4),
    ] {
        let alpha = bilinear::random_phases(len, q);
        let cfg =
            BilinearConfig::new(q, b, m, n_start, alpha.clone()).map_err(|e| e.to_string())?;
        let got = bilinear::bilinear_sum(&cfg);
        let v = |t: f64| {
            let s = 2.0 * t - 3.0;
            if s.abs() >= 1.0 {
                0.0
            } else {
                (1.0 - 1.0 / (1.0 - s * s)).exp()
            }
        };
        let mut want = Complex64::new(0.0, 0.0);
        for (i, a) in alpha.iter().enumerate() {
            let n = n_start + i as i64;
            for mm in m + 1..2 * m {
                want += a
                    * hyper_kl3(mm as i64 * n * b, q)
                    * (divisor_count(mm) as f64 * v(mm as f64 / m as f64));
            }
        }
        worst = worst.max((got - want).norm() / want.norm().max(1.0));
    }
    if worst > 1e-9 {
        return Err(format!("relative difference {worst:e}"));
    }
    Ok(format!(
        "three configs against the literal double sum, max relative difference {worst:.3e}"
    ))
}

/// The bilinear CSV emitted by the binary: 50 rows, every path residual
/// within tolerance, trivial bound respected, hypothesis text present.
fn bilinear_csv() -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_expsum"))
        .arg("bilinear")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("exit {:?}", out.status.code()));
    }
    let text = String::from_utf8(out.stdout).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or(format!("no column {name}"))
    };
    let (hyp, path, trivial) = (
        col("hypothesis")?,
        col("path_residual")?,
        col("trivial_ok")?,
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    if rows.len() != 50 {
        return Err(format!("{} rows", rows.len()));
    }
    let mut flagged = 0;
    for r in &rows {
        let residual: f64 = r[path].parse().map_err(|_| "bad residual".to_string())?;
        if residual > 1e-9 || r[trivial] != "true" {
            return Err(format!("row {r:?}"));
        }
        if r[hyp].contains("N <=") {
            flagged += 1;
        }
    }
    Ok(format!(
        "CSV with 50 rows, {flagged} carrying a hypothesis condition"
    ))
}

fn main() {
    let bin = env!("CARGO_BIN_EXE_expsum");
    let start = Instant::now();
    let first = Command::new(bin)
        .arg("verify-all")
        .output()
        .expect("run verify-all");
    let suite_secs = start.elapsed().as_secs_f64();
    let second = Command::new(bin)
        .arg("verify-all")
        .output()
        .expect("run verify-all");
    let stdout = String::from_utf8_lossy(&first.stdout).into_owned();
    let suite = parse_suite(&stdout);
    println!("verify-all (full) took {suite_secs:.1}s");

    let mut report = Report { failures: 0 };
    let criteria: [(&str, &str, fn() -> Result<String, String>); 11] = [
        (
            "explicit_prime_power_kloosterman",
            "kloosterman_explicit_formula",
            oracle_explicit,
        ),
        ("sigma00_identity", "sigma00_identity", oracle_sigma00),
        (
            "crt_split_and_hyper_paths",
            "kloosterman_split_and_hyper_paths",
            oracle_split,
        ),
        ("weil_deligne_audit", "weil_deligne_audit", oracle_weil),
        (
            "prime_power_correlation",
            "correlation_prime_power",
            oracle_ppower,
        ),
        (
            "prime_correlation_and_moebius",
            "correlation_prime_and_moebius",
            oracle_prime,
        ),
        ("dabrowski_fisher", "dabrowski_fisher", oracle_df),
        (
            "crt_correlation_and_glue",
            "crt_correlation_and_glue",
            oracle_cal_c,
        ),
        (
            "voronoi_divisor_identity",
            "voronoi_identity",
            oracle_voronoi,
        ),
        (
            "d3_distribution_identities",
            "d3_progressions",
            oracle_distribution,
        ),
        ("bilinear_paths", "bilinear_paths", || {
            let a = oracle_bilinear()?;
            let b = bilinear_csv()?;
            Ok(format!("{a}; {b}"))
        }),
    ];
    for (name, key, oracle) in criteria {
        let t = Instant::now();
        let result = oracle();
        report.line(name, suite.get(key), result, t.elapsed().as_secs_f64());
    }

    let identical = first.stdout == second.stdout;
    let exits = (first.status.code(), second.status.code());
    let det = if identical && exits == (Some(0), Some(0)) {
        Ok(format!(
            "{} bytes identical across two runs, exit codes 0",
            first.stdout.len()
        ))
    } else {
        Err(format!("identical = {identical}, exit codes {exits:?}"))
    };
    let det_suite = (det.is_ok(), "verify-all run twice".to_string());
    report.line("determinism", Some(&det_suite), det, 0.0);

    println!("{} criteria, {} failed", 12, report.failures);
    if report.failures > 0 {
        std::process::exit(1);
    }
}
