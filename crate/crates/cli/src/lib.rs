//! Command-line front end: one subcommand per scan, JSON config with flag
//! overrides, CSV or JSON output.
//!
//! Exit codes: 0 on success, 1 when a computed check fails, 2 on a usage or
//! configuration error.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use expsum::bilinear::{self, BilinearConfig};
use expsum::charsums::{self, ScanRow, RATIO_CEILING};
use expsum::checks::{self, Level, SEED};
use expsum::distribution;
use expsum::expsums::{hyper_kl3_degenerate_check, HyperTable};
use expsum::format::sci;
use expsum::modarith::{gcd, is_prime};
use expsum::voronoi;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Largest prime accepted in `--p`.
pub const MAX_PRIME: u64 = 1_000;
pub const MAX_GAMMA: u32 = 20;
pub const MAX_Q: u64 = 10_000;
pub const MAX_X: f64 = 1e7;
pub const MAX_M: u64 = 1_000_000;
pub const MAX_N: u64 = 10_000;
pub const MAX_SAMPLES: usize = 10_000;
pub const MAX_JOBS: usize = 256;
/// Largest modulus `p^gamma` for the explicit-formula scan.
pub const MAX_EXPLICIT_Q: u64 = 1_000_000;
/// Largest modulus `p^gamma` for the correlation scans.
pub const MAX_CORRELATION_Q: u64 = 100_000;
/// Largest modulus for the Voronoi scan.
pub const MAX_VORONOI_Q: u64 = 50;
/// Largest weight scale for the Voronoi scan.
pub const MAX_VORONOI_X: f64 = 1_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// A list given either as JSON numbers or as a range string like `"1..20,25"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ListSpec<T> {
    Items(Vec<T>),
    Text(String),
}

/// Settings shared by every subcommand. Fields left out of a config file
/// take the subcommand's defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub p: Option<ListSpec<u64>>,
    #[serde(default)]
    pub gamma_max: Option<u32>,
    #[serde(default)]
    pub u_max: Option<u32>,
    #[serde(default)]
    pub q: Option<ListSpec<u64>>,
    #[serde(default, rename = "X")]
    pub x: Option<ListSpec<f64>>,
    #[serde(default, rename = "M")]
    pub m: Option<ListSpec<u64>>,
    #[serde(default, rename = "N")]
    pub n: Option<ListSpec<u64>>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io(String),
    Parse(String),
    Validation(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(m) => write!(f, "cannot read config: {m}"),
            ConfigError::Parse(m) => write!(f, "malformed config: {m}"),
            ConfigError::Validation(m) => write!(f, "invalid config: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Validation(msg.into())
}

/// `"1..20,25,30..32"` as an inclusive list.
pub fn parse_u64_list(s: &str) -> Result<Vec<u64>, ConfigError> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a
                .trim()
                .parse()
                .map_err(|_| invalid(format!("bad range start in {part:?}")))?;
            let b: u64 = b
                .trim()
                .parse()
                .map_err(|_| invalid(format!("bad range end in {part:?}")))?;
            if b < a {
                return Err(invalid(format!("empty range {part:?}")));
            }
            if b - a > 1_000_000 {
                return Err(invalid(format!("range {part:?} too long")));
            }
            out.extend(a..=b);
        } else {
            out.push(
                part.parse()
                    .map_err(|_| invalid(format!("bad integer {part:?}")))?,
            );
        }
    }
    if out.is_empty() {
        return Err(invalid("empty list"));
    }
    Ok(out)
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>, ConfigError> {
    let out: Result<Vec<f64>, _> = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| invalid(format!("bad number {p:?}")))
        })
        .collect();
    let out = out?;
    if out.is_empty() {
        return Err(invalid("empty list"));
    }
    Ok(out)
}

fn resolve_u64(spec: &Option<ListSpec<u64>>) -> Result<Option<Vec<u64>>, ConfigError> {
    match spec {
        None => Ok(None),
        Some(ListSpec::Items(v)) if v.is_empty() => Err(invalid("empty list")),
        Some(ListSpec::Items(v)) => Ok(Some(v.clone())),
        Some(ListSpec::Text(s)) => parse_u64_list(s).map(Some),
    }
}

fn resolve_f64(spec: &Option<ListSpec<f64>>) -> Result<Option<Vec<f64>>, ConfigError> {
    match spec {
        None => Ok(None),
        Some(ListSpec::Items(v)) if v.is_empty() => Err(invalid("empty list")),
        Some(ListSpec::Items(v)) => Ok(Some(v.clone())),
        Some(ListSpec::Text(s)) => parse_f64_list(s).map(Some),
    }
}

/// Fully parsed and range-checked settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub p: Option<Vec<u64>>,
    pub gamma_max: Option<u32>,
    pub u_max: Option<u32>,
    pub q: Option<Vec<u64>>,
    pub x: Option<Vec<f64>>,
    pub m: Option<Vec<u64>>,
    pub n: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub jobs: Option<usize>,
    pub tol: Option<f64>,
    pub samples: Option<usize>,
    pub seed: u64,
}

impl RunConfig {
    /// Range checks against the desk-scale caps.
    pub fn validate(&self) -> Result<Settings, ConfigError> {
        let p = resolve_u64(&self.p)?;
        if let Some(bad) = p.iter().flatten().find(|&&p| p > MAX_PRIME || !is_prime(p)) {
            return Err(invalid(format!("p = {bad} must be a prime <= {MAX_PRIME}")));
        }
        if let Some(g) = self.gamma_max {
            if g == 0 || g > MAX_GAMMA {
                return Err(invalid(format!("gamma_max = {g} outside 1..={MAX_GAMMA}")));
            }
        }
        if let Some(u) = self.u_max {
            if u == 0 || u > MAX_GAMMA {
                return Err(invalid(format!("u_max = {u} outside 1..={MAX_GAMMA}")));
            }
        }
        let q = resolve_u64(&self.q)?;
        if let Some(bad) = q.iter().flatten().find(|&&q| q == 0 || q > MAX_Q) {
            return Err(invalid(format!("q = {bad} outside 1..={MAX_Q}")));
        }
        let x = resolve_f64(&self.x)?;
        if let Some(bad) = x.iter().flatten().find(|&&x| !(x > 0.0 && x <= MAX_X)) {
            return Err(invalid(format!("X = {bad} outside (0, {MAX_X:e}]")));
        }
        let m = resolve_u64(&self.m)?;
        if let Some(bad) = m.iter().flatten().find(|&&m| m > MAX_M) {
            return Err(invalid(format!("M = {bad} exceeds {MAX_M}")));
        }
        let n = resolve_u64(&self.n)?;
        if let Some(bad) = n.iter().flatten().find(|&&n| n == 0 || n > MAX_N) {
            return Err(invalid(format!("N = {bad} outside 1..={MAX_N}")));
        }
        if let Some(j) = self.jobs {
            if j == 0 || j > MAX_JOBS {
                return Err(invalid(format!("jobs = {j} outside 1..={MAX_JOBS}")));
            }
        }
        if let Some(t) = self.tol {
            if !(t.is_finite() && t >= f64::EPSILON) {
                return Err(invalid(format!(
                    "tol = {t} must be finite and at least machine epsilon"
                )));
            }
        }
        if let Some(s) = self.samples {
            if s == 0 || s > MAX_SAMPLES {
                return Err(invalid(format!("samples = {s} outside 1..={MAX_SAMPLES}")));
            }
        }
        Ok(Settings {
            p,
            gamma_max: self.gamma_max,
            u_max: self.u_max,
            q,
            x,
            m,
            n,
            out: self.out.clone(),
            format: self.format.unwrap_or_default(),
            jobs: self.jobs,
            tol: self.tol,
            samples: self.samples,
            seed: self.seed.unwrap_or(SEED),
        })
    }
}

/// Reads and validates a JSON config file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
        if e.to_string().contains("unknown field") {
            ConfigError::Validation(e.to_string())
        } else {
            ConfigError::Parse(e.to_string())
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Parser)]
#[command(
    name = "expsum",
    version,
    about = "Scans and checks for Kloosterman-type sums, correlation sums, Voronoi summation and d_3 in progressions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON config; flags given on the command line override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write output here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads.
    #[arg(long, global = true, env = "EXPSUM_JOBS")]
    pub jobs: Option<usize>,
    /// Pass/fail tolerance override.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Primes, e.g. `3,5` or `3..13`.
    #[arg(long, global = true)]
    pub p: Option<String>,
    #[arg(long = "gamma-max", global = true)]
    pub gamma_max: Option<u32>,
    #[arg(long = "u-max", global = true)]
    pub u_max: Option<u32>,
    /// Moduli, e.g. `1..20`.
    #[arg(long, global = true)]
    pub q: Option<String>,
    /// Scales, e.g. `50,100`.
    #[arg(long = "X", global = true)]
    pub x: Option<String>,
    #[arg(long = "M", global = true)]
    pub m: Option<String>,
    #[arg(long = "N", global = true)]
    pub n: Option<String>,
    /// Random tuples per cell of a sampled scan.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Explicit prime-power Kloosterman formula against direct summation.
    Kloosterman,
    /// Two evaluations of Kl3~ and its degeneration at non-coprime arguments.
    Hyperkl3,
    /// Prime-power correlation sums against their bounds.
    CharsumPp,
    /// Prime correlation sums and the Moebius reduction.
    CharsumPrime,
    /// Dabrowski–Fisher correlation sums.
    Df,
    /// CRT-factored correlation sums.
    #[command(name = "calC")]
    CalC,
    /// Square-free glue sums.
    Glue,
    /// The Voronoi formula for d(n).
    Voronoi,
    /// Bilinear sums twisted by Kl3~.
    Bilinear,
    /// d_3 in arithmetic progressions.
    Distribution,
    /// Every check, one line each.
    VerifyAll {
        /// Reduced families.
        #[arg(long)]
        quick: bool,
    },
}

impl Cli {
    fn overrides(&self) -> RunConfig {
        RunConfig {
            p: self.p.clone().map(ListSpec::Text),
            gamma_max: self.gamma_max,
            u_max: self.u_max,
            q: self.q.clone().map(ListSpec::Text),
            x: self.x.clone().map(ListSpec::Text),
            m: self.m.clone().map(ListSpec::Text),
            n: self.n.clone().map(ListSpec::Text),
            out: self.out.clone(),
            format: self.format,
            jobs: self.jobs,
            tol: self.tol,
            samples: self.samples,
            seed: self.seed,
        }
    }
}

/// Flag values win over config values.
fn merge(base: RunConfig, over: RunConfig) -> RunConfig {
    RunConfig {
        p: over.p.or(base.p),
        gamma_max: over.gamma_max.or(base.gamma_max),
        u_max: over.u_max.or(base.u_max),
        q: over.q.or(base.q),
        x: over.x.or(base.x),
        m: over.m.or(base.m),
        n: over.n.or(base.n),
        out: over.out.or(base.out),
        format: over.format.or(base.format),
        jobs: over.jobs.or(base.jobs),
        tol: over.tol.or(base.tol),
        samples: over.samples.or(base.samples),
        seed: over.seed.or(base.seed),
    }
}

/// Output of one subcommand: a CSV table (or check lines) and whether every
/// check in it passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub body: Body,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Csv(String),
    Lines(Vec<checks::CheckOutcome>),
}

impl Output {
    fn csv(csv: String, passed: bool) -> Self {
        Output {
            body: Body::Csv(csv),
            passed,
        }
    }

    pub fn render(&self, format: Format) -> String {
        match (&self.body, format) {
            (Body::Csv(csv), Format::Csv) => csv.clone(),
            (Body::Csv(csv), Format::Json) => csv_to_json(csv),
            (Body::Lines(lines), Format::Csv) => {
                let mut s: String = lines.iter().map(|l| format!("{l}\n")).collect();
                let failed = lines.iter().filter(|l| !l.passed).count();
                s.push_str(&format!("{} checks, {failed} failed\n", lines.len()));
                s
            }
            (Body::Lines(lines), Format::Json) => {
                let v: Vec<serde_json::Value> = lines
                    .iter()
                    .map(|l| serde_json::json!({ "name": l.name, "passed": l.passed, "detail": l.detail }))
                    .collect();
                format!(
                    "{}\n",
                    serde_json::to_string_pretty(&v).expect("serializable")
                )
            }
        }
    }
}

/// CSV rows as JSON objects keyed by column, values kept as the CSV text.
fn csv_to_json(csv: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let rows: Vec<BTreeMap<&str, &str>> = lines
        .map(|l| header.iter().copied().zip(l.split(',')).collect())
        .collect();
    format!(
        "{}\n",
        serde_json::to_string_pretty(&rows).expect("serializable")
    )
}

fn usage_error(msg: impl fmt::Display) -> Result<Output, (i32, String)> {
    Err((EXIT_USAGE, msg.to_string()))
}

fn lib_error(e: expsum::Error) -> (i32, String) {
    (EXIT_USAGE, format!("error: {e}"))
}

fn odd_primes_up_to(n: u64) -> Vec<u64> {
    (3..=n).filter(|&p| is_prime(p)).collect()
}

/// Largest `gamma` with `p^gamma <= cap`, clipped to `gamma_max`.
fn gamma_limit(p: u64, cap: u64, gamma_max: Option<u32>) -> u32 {
    let mut g = 0;
    while p.checked_pow(g + 1).is_some_and(|q| q <= cap) {
        g += 1;
    }
    gamma_max.map_or(g, |m| g.min(m))
}

fn check_prime_powers(primes: &[u64], gamma: Option<u32>, cap: u64) -> Result<(), (i32, String)> {
    if let Some(g) = gamma {
        for &p in primes {
            if p.checked_pow(g).is_none_or(|q| q > cap) {
                return Err((
                    EXIT_USAGE,
                    format!("p^gamma = {p}^{g} exceeds the cap {cap}"),
                ));
            }
        }
    }
    Ok(())
}

fn charsum_passed(rows: &[ScanRow], tol: f64) -> bool {
    rows.iter().all(|r| {
        r.ratio <= RATIO_CEILING && !(r.vanishing_predicted && r.abs_sum > tol * r.zero_scale)
    })
}

fn kloosterman(s: &Settings) -> Result<Output, (i32, String)> {
    let primes = s.p.clone().unwrap_or_else(|| vec![3, 5, 7, 11, 13]);
    if primes.contains(&2) {
        return usage_error("the explicit formula needs odd primes");
    }
    check_prime_powers(&primes, s.gamma_max, MAX_EXPLICIT_Q)?;
    let mut rows = Vec::new();
    for &p in &primes {
        let cap = p.pow(gamma_limit(p, MAX_EXPLICIT_Q, s.gamma_max));
        rows.extend(checks::explicit_rows(&[p], cap).map_err(lib_error)?);
    }
    let tol = s.tol.unwrap_or(checks::EXPLICIT_TOL);
    let passed = rows
        .iter()
        .all(|r| r.max_scaled_error <= tol && r.zero_failures == 0);
    Ok(Output::csv(checks::explicit_csv(&rows), passed))
}

fn hyperkl3(s: &Settings) -> Result<Output, (i32, String)> {
    use rayon::prelude::*;
    let moduli = s.q.clone().unwrap_or_else(|| (1..=60).collect());
    if let Some(&q) = moduli.iter().find(|&&q| q > 2_000) {
        return usage_error(format!(
            "q = {q} exceeds 2000 for the O(q^2) reference table"
        ));
    }
    let tol = s.tol.unwrap_or(1e-9);
    let rows: Vec<(u64, f64, usize, f64, f64)> = moduli
        .par_iter()
        .map(|&q| {
            let (fast, slow) = (HyperTable::new(q), HyperTable::direct(q));
            let path = fast
                .values()
                .iter()
                .zip(slow.values())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            let (mut cases, mut corrected, mut printed) = (0, 0.0f64, 0.0f64);
            for n in 1..q as i64 {
                if let Ok(r) = hyper_kl3_degenerate_check(1, n, 1, q) {
                    cases += 1;
                    corrected = corrected.max(r.corrected_residual);
                    printed = printed.max(r.printed_residual);
                }
            }
            (q, path, cases, corrected, printed)
        })
        .collect();
    let mut csv = String::from(
        "q,max_path_difference,degenerate_cases,max_corrected_residual,max_printed_residual\n",
    );
    let mut passed = true;
    for &(q, path, cases, corrected, printed) in &rows {
        passed &= path <= tol * q as f64 && corrected <= tol * q as f64;
        csv.push_str(&format!(
            "{q},{},{cases},{},{}\n",
            sci(path),
            sci(corrected),
            sci(printed)
        ));
    }
    Ok(Output::csv(csv, passed))
}

fn charsum_pp(s: &Settings) -> Result<Output, (i32, String)> {
    let primes = s.p.clone().unwrap_or_else(|| vec![3, 5]);
    if primes.contains(&2) {
        return usage_error("the prime-power scan needs odd primes");
    }
    let gamma_max = s.gamma_max.unwrap_or(6);
    let u_max = s.u_max.unwrap_or(gamma_max);
    let rows = charsums::scan_ppower(
        &primes,
        gamma_max,
        u_max,
        MAX_CORRELATION_Q,
        s.samples.unwrap_or(20),
        s.seed,
    )
    .map_err(lib_error)?;
    let passed = charsum_passed(&rows, s.tol.unwrap_or(charsums::VANISH_TOL));
    Ok(Output::csv(charsums::scan_csv(&rows), passed))
}

fn charsum_prime(s: &Settings) -> Result<Output, (i32, String)> {
    let primes = s.p.clone().unwrap_or_else(|| odd_primes_up_to(31));
    if let Some(&p) = primes.iter().find(|&&p| p == 2 || p > 200) {
        return usage_error(format!("p = {p} outside the odd primes up to 200"));
    }
    let tol = s.tol.unwrap_or(1e-6);
    let samples = s.samples.unwrap_or(20);
    let mut rows = Vec::new();
    let mut passed = true;
    for (i, &p) in primes.iter().enumerate() {
        let r = charsums::scan_prime(&[p], samples, s.seed.wrapping_add(i as u64))
            .map_err(lib_error)?;
        passed &= r
            .iter()
            .all(|x| x.route_residual.unwrap_or(0.0) <= tol * (p * p) as f64);
        rows.extend(r);
    }
    passed &= charsum_passed(&rows, charsums::VANISH_TOL);
    Ok(Output::csv(charsums::scan_csv(&rows), passed))
}

fn df(s: &Settings) -> Result<Output, (i32, String)> {
    let primes = s.p.clone().unwrap_or_else(|| vec![3, 5, 7]);
    check_prime_powers(&primes, s.gamma_max, 10_000)?;
    let mut rows = Vec::new();
    for (i, &p) in primes.iter().enumerate() {
        let g = gamma_limit(p, 729, s.gamma_max);
        if g == 0 {
            continue;
        }
        let r = charsums::scan_df(
            &[p],
            g,
            p.pow(g),
            s.samples.unwrap_or(20),
            s.seed.wrapping_add(i as u64),
        )
        .map_err(lib_error)?;
        rows.extend(r);
    }
    let passed = charsum_passed(&rows, charsums::VANISH_TOL);
    Ok(Output::csv(charsums::scan_csv(&rows), passed))
}

fn crt_sums(s: &Settings, glue: bool) -> Result<Output, (i32, String)> {
    let moduli = s.q.clone().unwrap_or_else(|| (1..=60).collect());
    if let Some(&q) = moduli.iter().find(|&&q| q > 1_000) {
        return usage_error(format!(
            "q = {q} exceeds 1000 for the direct correlation sum"
        ));
    }
    let samples = s.samples.unwrap_or(5);
    let rows = if glue {
        charsums::scan_glue(&moduli, samples, s.seed)
    } else {
        charsums::scan_cal_c(&moduli, samples, s.seed)
    }
    .map_err(lib_error)?;
    let tol = s.tol.unwrap_or(1e-6);
    let route_ok = rows.iter().all(|r| {
        let q: f64 = r
            .params
            .split(';')
            .find_map(|kv| kv.strip_prefix("q="))
            .and_then(|v| v.parse().ok())
            .unwrap_or(1.0);
        r.route_residual.unwrap_or(0.0) <= tol * q * q
    });
    let passed = route_ok && charsum_passed(&rows, charsums::VANISH_TOL);
    Ok(Output::csv(charsums::scan_csv(&rows), passed))
}

fn voronoi_cmd(s: &Settings) -> Result<Output, (i32, String)> {
    let moduli = s.q.clone().unwrap_or_else(|| (1..=20).collect());
    let scales = s.x.clone().unwrap_or_else(|| vec![50.0, 100.0, 200.0]);
    if let Some(&q) = moduli.iter().find(|&&q| q > MAX_VORONOI_Q) {
        return usage_error(format!(
            "q = {q} exceeds {MAX_VORONOI_Q} for the Voronoi scan"
        ));
    }
    if let Some(&x) = scales
        .iter()
        .find(|&&x| !(1.0..=MAX_VORONOI_X).contains(&x))
    {
        return usage_error(format!(
            "X = {x} outside [1, {MAX_VORONOI_X}] for the Voronoi scan"
        ));
    }
    let tol = s.tol.unwrap_or(voronoi::RESIDUAL_TOL);
    let mut reports = Vec::new();
    for &x in &scales {
        let h = voronoi::SmoothWeight::new(x).map_err(lib_error)?;
        for &q in &moduli {
            reports.extend(
                voronoi::voronoi_scan(q, &h)
                    .map_err(|e| (EXIT_CHECK_FAILED, format!("error: {e}")))?,
            );
        }
    }
    let passed = reports.iter().all(|r| r.residual <= tol * r.lhs.norm());
    Ok(Output::csv(voronoi::to_csv(&reports), passed))
}

fn bilinear_cmd(s: &Settings) -> Result<Output, (i32, String)> {
    let family = if s.q.is_none() && s.m.is_none() && s.n.is_none() {
        bilinear::default_family()
    } else {
        let moduli = s.q.clone().unwrap_or_else(|| vec![27, 1009, 2401]);
        let mut family = Vec::new();
        for &q in &moduli {
            let ms = s.m.clone().unwrap_or_else(|| vec![q]);
            let ns = s.n.clone().unwrap_or_else(|| vec![1, 2, 4]);
            let b = (1..=q.max(2) as i64)
                .find(|&b| b >= 2.min(q as i64) && gcd(b as u64 % q, q) == 1)
                .unwrap_or(1);
            for &m in &ms {
                for &n in &ns {
                    let seed = s.seed ^ (q << 40) ^ (m << 20) ^ n;
                    let alpha = bilinear::random_phases(n as usize, seed);
                    family.push(BilinearConfig::new(q, b, m, n as i64, alpha).map_err(lib_error)?);
                }
            }
        }
        family
    };
    let tol = s.tol.unwrap_or(1e-9);
    let rows = bilinear::cancellation_scan(&family);
    let passed = rows
        .iter()
        .all(|r| r.trivial_ok() && r.path_residual() <= tol);
    Ok(Output::csv(bilinear::to_csv(&rows), passed))
}

fn distribution_cmd(s: &Settings) -> Result<Output, (i32, String)> {
    let x = match s.x.as_deref() {
        None => 1_000_000,
        Some([x]) if x.fract() == 0.0 => *x as u64,
        Some(_) => return usage_error("distribution takes a single integer X"),
    };
    let moduli =
        s.q.clone()
            .unwrap_or_else(|| checks::distribution_moduli(200, &[9, 27, 81, 243]));
    let scan = distribution::discrepancy_scan(x, &moduli, true).map_err(lib_error)?;
    let tol = s.tol.unwrap_or(1e-6);
    let passed = scan
        .moduli
        .iter()
        .all(|m| m.zero_sum && m.decomposition_residual.is_none_or(|r| r <= tol));
    Ok(Output::csv(scan.to_csv(), passed))
}

fn dispatch(command: &Command, s: &Settings) -> Result<Output, (i32, String)> {
    match command {
        Command::Kloosterman => kloosterman(s),
        Command::Hyperkl3 => hyperkl3(s),
        Command::CharsumPp => charsum_pp(s),
        Command::CharsumPrime => charsum_prime(s),
        Command::Df => df(s),
        Command::CalC => crt_sums(s, false),
        Command::Glue => crt_sums(s, true),
        Command::Voronoi => voronoi_cmd(s),
        Command::Bilinear => bilinear_cmd(s),
        Command::Distribution => distribution_cmd(s),
        Command::VerifyAll { quick } => {
            let level = if *quick { Level::Quick } else { Level::Full };
            let lines = checks::run_all(level);
            let passed = lines.iter().all(|l| l.passed);
            Ok(Output {
                body: Body::Lines(lines),
                passed,
            })
        }
    }
}

/// Runs one invocation, writing results to `out` (or the `--out` file) and
/// diagnostics to `err`; returns the exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let base = match &cli.config {
        Some(path) => match load_config(path) {
            Ok(c) => c,
            Err(e) => {
                let _ = writeln!(err, "{e}");
                return EXIT_USAGE;
            }
        },
        None => RunConfig::default(),
    };
    let settings = match merge(base, cli.overrides()).validate() {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return EXIT_USAGE;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "cannot start worker pool: {e}");
            return EXIT_USAGE;
        }
    };
    let result = pool.install(|| dispatch(&cli.command, &settings));
    match result {
        Ok(output) => {
            let text = output.render(settings.format);
            let written = match &settings.out {
                Some(path) => fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
                None => out.write_all(text.as_bytes()).map_err(|e| e.to_string()),
            };
            if let Err(e) = written {
                let _ = writeln!(err, "cannot write output: {e}");
                return EXIT_USAGE;
            }
            if output.passed {
                EXIT_OK
            } else {
                let _ = writeln!(err, "one or more checks failed");
                EXIT_CHECK_FAILED
            }
        }
        Err((code, msg)) => {
            let _ = writeln!(err, "{msg}");
            code
        }
    }
}

/// [`run_with`] on the process's standard streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let (stdout, stderr) = (std::io::stdout(), std::io::stderr());
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_parsing() {
        assert_eq!(parse_u64_list("1..4,7").unwrap(), vec![1, 2, 3, 4, 7]);
        assert_eq!(parse_u64_list(" 3 , 5 ").unwrap(), vec![3, 5]);
        assert!(parse_u64_list("5..3").is_err());
        assert!(parse_u64_list("").is_err());
        assert!(parse_u64_list("a").is_err());
        assert_eq!(parse_f64_list("50,100").unwrap(), vec![50.0, 100.0]);
    }

    #[test]
    fn gamma_limit_respects_cap() {
        assert_eq!(gamma_limit(3, 729, None), 6);
        assert_eq!(gamma_limit(3, 729, Some(4)), 4);
        assert_eq!(gamma_limit(7, 729, None), 3);
        assert_eq!(gamma_limit(1009, 729, None), 0);
    }

    #[test]
    fn json_rendering_keeps_csv_text() {
        let json = csv_to_json("a,b\n1.000000000000e+00,x\n");
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v[0]["a"], "1.000000000000e+00");
        assert_eq!(v[0]["b"], "x");
    }
}
