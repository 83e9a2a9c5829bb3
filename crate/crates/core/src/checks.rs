//! The verification suite: each check evaluates one family of identities or
//! bounds by two routes and reduces the outcome to a pass/fail line.
//! [`Level::Quick`] shrinks every family so the whole suite runs in seconds.

use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::arith::{factorize, sigma00_divisor_form, sigma00_mobius_form};
use crate::bilinear::{cancellation_scan, default_family, CancellationReport};
use crate::charsums::{
    df_correlation, moebius_closed_form, moebius_reduce, scan_cal_c, scan_df, scan_glue,
    scan_ppower, scan_prime, summarize, CharSumParams, ScanRow, RATIO_CEILING,
};
use crate::distribution::{discrepancy_scan, D3Table, DiscrepancyScan};
use crate::error::Result;
use crate::expsums::{
    hyper_kl3_fast, kloosterman_explicit_pp, kloosterman_row_fft, kloosterman_split, unit_inverses,
    weil_audit, HyperTable, KloosterTable, RootTable, WeilAudit,
};
use crate::format::sci;
use crate::modarith::{add_mod, is_prime, legendre, mul_mod, PrimePower};
use crate::voronoi::{voronoi_scan, SmoothWeight, VoronoiReport};

/// Seed shared by every sampled family.
pub const SEED: u64 = 0x5eed_2024;

/// Size of the checked families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

/// One line of the suite.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        name,
        passed,
        detail,
    }
}

fn failed(name: &'static str, err: crate::Error) -> CheckOutcome {
    outcome(name, false, format!("error: {err}"))
}

/// Explicit prime-power formula against the Fourier row of the definition,
/// one row per `(p, gamma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitRow {
    pub p: u64,
    pub gamma: u32,
    pub units: u64,
    /// `max |explicit - direct| / (2 p^(gamma/2))` over units `beta`.
    pub max_scaled_error: f64,
    pub nonresidues: u64,
    /// Non-residues where the explicit value is not exactly zero or the
    /// direct value exceeds the tolerance.
    pub zero_failures: u64,
}

pub const EXPLICIT_TOL: f64 = 1e-9;

pub fn explicit_rows(primes: &[u64], q_cap: u64) -> Result<Vec<ExplicitRow>> {
    let mut cells = Vec::new();
    for &p in primes {
        let mut gamma = 2;
        while p.checked_pow(gamma).is_some_and(|q| q <= q_cap) {
            cells.push((p, gamma));
            gamma += 1;
        }
    }
    cells
        .par_iter()
        .map(|&(p, gamma)| {
            let pp = PrimePower::new(p, gamma)?;
            let q = pp.q();
            let direct = kloosterman_row_fft(q);
            let scale = 2.0 * (q as f64).sqrt();
            let mut row = ExplicitRow {
                p,
                gamma,
                units: 0,
                max_scaled_error: 0.0,
                nonresidues: 0,
                zero_failures: 0,
            };
            for beta in (1..q).filter(|b| b % p != 0) {
                let e = kloosterman_explicit_pp(beta as i64, pp)?;
                let err = (e - direct[beta as usize]).norm() / scale;
                row.units += 1;
                row.max_scaled_error = row.max_scaled_error.max(err);
                if legendre(beta as i64, p) == -1 {
                    row.nonresidues += 1;
                    if e != Complex64::new(0.0, 0.0) || err > EXPLICIT_TOL {
                        row.zero_failures += 1;
                    }
                }
            }
            Ok(row)
        })
        .collect()
}

pub fn explicit_csv(rows: &[ExplicitRow]) -> String {
    let mut out = String::from("p,gamma,q,units,max_scaled_error,nonresidues,zero_failures\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.p,
            r.gamma,
            r.p.pow(r.gamma),
            r.units,
            sci(r.max_scaled_error),
            r.nonresidues,
            r.zero_failures
        ));
    }
    out
}

pub fn check_explicit(level: Level) -> CheckOutcome {
    const NAME: &str = "kloosterman_explicit_formula";
    let cap = if level == Level::Full {
        1_000_000
    } else {
        10_000
    };
    match explicit_rows(&[3, 5, 7, 11, 13], cap) {
        Ok(rows) => {
            let worst = rows.iter().map(|r| r.max_scaled_error).fold(0.0, f64::max);
            let zero_failures: u64 = rows.iter().map(|r| r.zero_failures).sum();
            let units: u64 = rows.iter().map(|r| r.units).sum();
            let nonres: u64 = rows.iter().map(|r| r.nonresidues).sum();
            outcome(
                NAME,
                worst <= EXPLICIT_TOL && zero_failures == 0,
                format!(
                    "{} moduli up to {cap}, {units} units, max error / 2p^(gamma/2) = {}, {nonres} non-residues, {zero_failures} not exactly zero",
                    rows.len(),
                    sci(worst)
                ),
            )
        }
        Err(e) => failed(NAME, e),
    }
}

pub fn check_sigma00(level: Level) -> CheckOutcome {
    let limit = if level == Level::Full { 500 } else { 100 };
    let mismatches: usize = (1..=limit)
        .into_par_iter()
        .map(|k| {
            (1..=limit)
                .filter(|&l| sigma00_divisor_form(k, l) != sigma00_mobius_form(k, l))
                .count()
        })
        .sum();
    outcome(
        "sigma00_identity",
        mismatches == 0,
        format!(
            "{} pairs 1 <= k, l <= {limit}, {mismatches} mismatches",
            limit * limit
        ),
    )
}

/// `S(a, b; q)` summed literally with precomputed inverses and roots.
fn kloosterman_literal(
    a: u64,
    b: u64,
    q: u64,
    inverses: &[Option<u32>],
    roots: &RootTable,
) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, inv) in inverses.iter().enumerate() {
        if let Some(xinv) = inv {
            acc += roots.get(add_mod(
                mul_mod(a, x as u64, q),
                mul_mod(b, *xinv as u64, q),
                q,
            ));
        }
    }
    acc
}

/// Worst disagreements, each divided by `q`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SplitSummary {
    pub moduli: usize,
    pub kloosterman: f64,
    pub hyper: f64,
}

/// For `q <= all_max`: `S(1, m; q)` split against the Fourier row and the two
/// `Kl3~` tables, for every `m`. For composite `all_max < q <= composite_max`:
/// `samples` pairs `(a, b)` split against the literal sum, and `samples`
/// values of `m` from the fast `Kl3~` table against the table-free sum over
/// the Fourier row.
pub fn split_summary(all_max: u64, composite_max: u64, samples: usize, seed: u64) -> SplitSummary {
    let small: Vec<(f64, f64)> = (1..=all_max)
        .into_par_iter()
        .map(|q| {
            let row = kloosterman_row_fft(q);
            let kl = (0..q)
                .map(|m| (kloosterman_split(1, m as i64, q) - row[m as usize]).norm())
                .fold(0.0, f64::max);
            let (fast, slow) = (HyperTable::new(q), HyperTable::direct(q));
            let hy = fast
                .values()
                .iter()
                .zip(slow.values())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            (kl / q as f64, hy / q as f64)
        })
        .collect();
    let composites: Vec<u64> = (all_max + 1..=composite_max)
        .filter(|&q| !is_prime(q))
        .collect();
    let large: Vec<(f64, f64)> = composites
        .par_iter()
        .map(|&q| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ q);
            let inverses = unit_inverses(q);
            let roots = RootTable::new(q);
            let mut kl = 0.0f64;
            for _ in 0..samples {
                let (a, b) = (rng.gen_range(0..q), rng.gen_range(0..q));
                let lit = kloosterman_literal(a, b, q, &inverses, &roots);
                kl = kl.max((kloosterman_split(a as i64, b as i64, q) - lit).norm());
            }
            let fast = HyperTable::new(q);
            let reference = KloosterTable::direct(q);
            let mut hy = 0.0f64;
            for _ in 0..samples {
                let m = rng.gen_range(0..q) as i64;
                hy = hy.max((fast.get(m) - hyper_kl3_fast(m, &reference)).norm());
            }
            (kl / q as f64, hy / q as f64)
        })
        .collect();
    let mut s = SplitSummary {
        moduli: small.len() + large.len(),
        ..Default::default()
    };
    for (kl, hy) in small.into_iter().chain(large) {
        s.kloosterman = s.kloosterman.max(kl);
        s.hyper = s.hyper.max(hy);
    }
    s
}

pub const SPLIT_TOL: f64 = 1e-9;

pub fn check_split(level: Level) -> CheckOutcome {
    let (all_max, composite_max, samples) = if level == Level::Full {
        (500, 10_000, 20)
    } else {
        (100, 1_000, 5)
    };
    let s = split_summary(all_max, composite_max, samples, SEED);
    outcome(
        "kloosterman_split_and_hyper_paths",
        s.kloosterman <= SPLIT_TOL && s.hyper <= SPLIT_TOL,
        format!(
            "{} moduli (all m for q <= {all_max}, {samples} samples for composite q <= {composite_max}), max |split - direct| / q = {}, max |Kl3 fast - reference| / q = {}",
            s.moduli,
            sci(s.kloosterman),
            sci(s.hyper)
        ),
    )
}

pub fn check_weil(level: Level) -> CheckOutcome {
    let max_prime = if level == Level::Full { 200 } else { 50 };
    let a: WeilAudit = weil_audit(max_prime);
    outcome(
        "weil_deligne_audit",
        a.passes(),
        format!(
            "{} primes <= {max_prime}, max |S(a,b;p)| / 2sqrt(p) = {} at {:?}, max |Kl3(m,p)| = {} at {:?}",
            a.primes_checked,
            sci(a.max_kloosterman_ratio),
            a.kloosterman_argmax,
            sci(a.max_hyper_abs),
            a.hyper_argmax
        ),
    )
}

fn ratio_line(rows: &[ScanRow]) -> (bool, String) {
    let s = summarize(rows);
    (
        s.max_ratio <= RATIO_CEILING,
        format!(
            "{} tuples, max ratio {} at {}",
            s.rows,
            sci(s.max_ratio),
            s.argmax
        ),
    )
}

pub fn check_ppower(level: Level) -> CheckOutcome {
    const NAME: &str = "correlation_prime_power";
    let (gamma_max, samples) = if level == Level::Full {
        (6, 200)
    } else {
        (4, 20)
    };
    match scan_ppower(&[3, 5], gamma_max, gamma_max, u64::MAX, samples, SEED) {
        Ok(rows) => {
            let predicted: Vec<&ScanRow> = rows.iter().filter(|r| r.vanishing_predicted).collect();
            let bad = predicted
                .iter()
                .filter(|r| r.abs_sum > 1e-6 * r.zero_scale)
                .count();
            let (ratio_ok, line) = ratio_line(&rows);
            outcome(
                NAME,
                bad == 0 && ratio_ok,
                format!(
                    "{line}; {} predicted zeros, {bad} nonzero beyond 1e-6 p^(2u)",
                    predicted.len()
                ),
            )
        }
        Err(e) => failed(NAME, e),
    }
}

pub fn check_prime_correlation(level: Level) -> CheckOutcome {
    const NAME: &str = "correlation_prime_and_moebius";
    let (p_max, samples) = if level == Level::Full {
        (31, 50)
    } else {
        (13, 10)
    };
    let primes: Vec<u64> = (3..=p_max).filter(|&p| is_prime(p)).collect();
    let mut rows = Vec::new();
    let mut worst_route = 0.0f64;
    for (i, &p) in primes.iter().enumerate() {
        match scan_prime(&[p], samples, SEED + i as u64) {
            Ok(r) => {
                let route = r
                    .iter()
                    .filter_map(|x| x.route_residual)
                    .fold(0.0, f64::max);
                worst_route = worst_route.max(route / (p * p) as f64);
                rows.extend(r);
            }
            Err(e) => return failed(NAME, e),
        }
    }
    // the matrix product against its closed form
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut matrix_mismatch = 0;
    let mut matrices = 0;
    for &p in &primes {
        for _ in 0..samples {
            let mut u = || rng.gen_range(1..p) as i64;
            let Ok(params) = CharSumParams::prime(p, u(), u(), u(), u(), u(), u(), 1) else {
                continue;
            };
            if let (Ok(a), Ok(b)) = (moebius_reduce(&params), moebius_closed_form(&params)) {
                matrices += 1;
                matrix_mismatch += (a != b) as usize;
            }
        }
    }
    let (ratio_ok, line) = ratio_line(&rows);
    outcome(
        NAME,
        ratio_ok && worst_route <= 1e-6 && matrix_mismatch == 0,
        format!(
            "{line}; max |direct - reduced| / p^2 = {}; {matrices} matrices, {matrix_mismatch} differ from the closed form",
            sci(worst_route)
        ),
    )
}

pub fn check_df(level: Level) -> CheckOutcome {
    const NAME: &str = "dabrowski_fisher";
    let (caps, samples): ([(u64, u32); 3], usize) = if level == Level::Full {
        ([(3, 6), (5, 4), (7, 3)], 100)
    } else {
        ([(3, 4), (5, 3), (7, 2)], 20)
    };
    let mut rows = Vec::new();
    for (i, &(p, g)) in caps.iter().enumerate() {
        match scan_df(&[p], g, p.pow(g), samples, SEED + i as u64) {
            Ok(r) => rows.extend(r),
            Err(e) => return failed(NAME, e),
        }
    }
    let spot = PrimePower::new(5, 1).and_then(|pp| df_correlation(1, 0, pp));
    let spot = match spot {
        Ok(r) => r.sum_value,
        Err(e) => return failed(NAME, e),
    };
    let spot_ok = (spot - Complex64::new(19.0, 0.0)).norm() <= 1e-6;
    let (ratio_ok, line) = ratio_line(&rows);
    outcome(
        NAME,
        ratio_ok && spot_ok,
        format!("{line}; sum* |S(1,x;5)|^2 = {}", sci(spot.re)),
    )
}

pub fn check_cal_c_and_glue(level: Level) -> CheckOutcome {
    const NAME: &str = "crt_correlation_and_glue";
    let (q_max, samples) = if level == Level::Full {
        (200, 5)
    } else {
        (60, 2)
    };
    let moduli: Vec<u64> = (1..=q_max).collect();
    let rows_c = match scan_cal_c(&moduli, samples, SEED) {
        Ok(r) => r,
        Err(e) => return failed(NAME, e),
    };
    let rows_g = match scan_glue(&moduli, samples, SEED + 1) {
        Ok(r) => r,
        Err(e) => return failed(NAME, e),
    };
    let route = |rows: &[ScanRow]| {
        rows.iter()
            .map(|r| {
                let q: f64 = r
                    .params
                    .split(';')
                    .find_map(|kv| kv.strip_prefix("q="))
                    .and_then(|v| v.parse().ok())
                    .unwrap_or(1.0);
                r.route_residual.unwrap_or(0.0) / (q * q)
            })
            .fold(0.0, f64::max)
    };
    let (rc, rg) = (route(&rows_c), route(&rows_g));
    let (ok_c, line_c) = ratio_line(&rows_c);
    let (ok_g, line_g) = ratio_line(&rows_g);
    outcome(
        NAME,
        ok_c && ok_g && rc <= 1e-6 && rg <= 1e-6,
        format!(
            "C: {line_c}, max |direct - CRT| / q^2 = {}; glue: {line_g}, max |direct - split| / q^2 = {}",
            sci(rc),
            sci(rg)
        ),
    )
}

/// Every report of the Voronoi check, in `(X, q, a)` order.
pub fn voronoi_reports(scales: &[f64], q_max: u64) -> Result<Vec<VoronoiReport>> {
    let mut out = Vec::new();
    for &x in scales {
        let h = SmoothWeight::new(x)?;
        for q in 1..=q_max {
            out.extend(voronoi_scan(q, &h)?);
        }
    }
    Ok(out)
}

pub fn check_voronoi(level: Level) -> CheckOutcome {
    const NAME: &str = "voronoi_identity";
    let (scales, q_max): (&[f64], u64) = if level == Level::Full {
        (&[50.0, 100.0, 200.0], 20)
    } else {
        (&[50.0], 6)
    };
    match voronoi_reports(scales, q_max) {
        Ok(reports) => {
            let worst = reports
                .iter()
                .map(|r| r.relative_residual())
                .fold(0.0, f64::max);
            let fails = reports.iter().filter(|r| !r.passes()).count();
            let flagged = reports
                .iter()
                .filter(|r| r.printed_normalization_flagged())
                .count();
            outcome(
                NAME,
                fails == 0,
                format!(
                    "{} (X, q, a) triples, q <= {q_max}, max relative residual {}, {fails} above 1e-6; printed main term fails in {flagged}",
                    reports.len(),
                    sci(worst)
                ),
            )
        }
        Err(e) => failed(NAME, e),
    }
}

/// `d_3(n)` for `n <= x` by counting ordered triples `abc <= x`.
pub fn d3_by_triples(x: u64) -> Vec<u64> {
    let mut counts = vec![0u64; x as usize + 1];
    for a in 1..=x {
        for b in 1..=x / a {
            let ab = a * b;
            for c in 1..=x / ab {
                counts[(ab * c) as usize] += 1;
            }
        }
    }
    counts
}

/// Square-free `q <= squarefree_max` followed by `powers`.
pub fn distribution_moduli(squarefree_max: u64, powers: &[u64]) -> Vec<u64> {
    let mut m: Vec<u64> = (1..=squarefree_max)
        .filter(|&q| factorize(q).is_squarefree())
        .collect();
    m.extend_from_slice(powers);
    m
}

pub fn check_distribution(level: Level) -> CheckOutcome {
    const NAME: &str = "d3_progressions";
    let (x, sq_max, powers, sieve_x): (u64, u64, &[u64], u64) = if level == Level::Full {
        (1_000_000, 200, &[9, 27, 81, 243], 10_000)
    } else {
        (100_000, 50, &[9, 27], 2_000)
    };
    let scan: DiscrepancyScan =
        match discrepancy_scan(x, &distribution_moduli(sq_max, powers), true) {
            Ok(s) => s,
            Err(e) => return failed(NAME, e),
        };
    let zero_fail = scan.moduli.iter().filter(|s| !s.zero_sum).count();
    let worst = scan
        .moduli
        .iter()
        .filter_map(|s| s.decomposition_residual)
        .fold(0.0, f64::max);
    let table = D3Table::new(sieve_x);
    let oracle = d3_by_triples(sieve_x);
    let sieve_bad = (1..=sieve_x)
        .filter(|&n| table.get(n) != oracle[n as usize])
        .count();
    let slope = scan
        .fit
        .as_ref()
        .map(|f| sci(f.slope))
        .unwrap_or_else(|| "none".into());
    outcome(
        NAME,
        zero_fail == 0 && worst <= 1e-6 && sieve_bad == 0,
        format!(
            "X = {x}, {} moduli: {zero_fail} nonzero delta sums, max decomposition residual {}; sieve vs triples to {sieve_x}: {sieve_bad} mismatches; slope fit {slope}",
            scan.moduli.len(),
            sci(worst)
        ),
    )
}

pub fn bilinear_reports(level: Level) -> Vec<CancellationReport> {
    let family: Vec<_> = default_family()
        .into_iter()
        .filter(|c| level == Level::Full || c.q() <= 243)
        .collect();
    cancellation_scan(&family)
}

pub fn check_bilinear(level: Level) -> CheckOutcome {
    let rows = bilinear_reports(level);
    let worst = rows.iter().map(|r| r.path_residual()).fold(0.0, f64::max);
    let trivial_fail = rows.iter().filter(|r| !r.trivial_ok()).count();
    let hyp = rows
        .iter()
        .filter(|r| r.hypothesis.as_ref().is_some_and(|h| h.holds))
        .count();
    outcome(
        "bilinear_paths",
        worst <= 1e-9 && trivial_fail == 0,
        format!(
            "{} configs, max path residual {}, {trivial_fail} above the trivial bound, {hyp} inside the bound hypotheses",
            rows.len(),
            sci(worst)
        ),
    )
}

/// All checks in a fixed order.
pub fn run_all(level: Level) -> Vec<CheckOutcome> {
    let checks: [fn(Level) -> CheckOutcome; 11] = [
        check_explicit,
        check_sigma00,
        check_split,
        check_weil,
        check_ppower,
        check_prime_correlation,
        check_df,
        check_cal_c_and_glue,
        check_voronoi,
        check_distribution,
        check_bilinear,
    ];
    checks.iter().map(|c| c(level)).collect()
}
