//! Bilinear sums
//!
//! ```text
//! S = sum_{n in W} sum_{m >= 1} alpha_n lambda(m) Kl3~(m n b, q) V(m / M)
//! ```
//!
//! over a window `W` of `N` consecutive integers, with
//! `lambda(m) = sigma_{s1}(m) m^{s2}` and `V` the bump on `[1, 2]`.
//! Two evaluation paths (term by term, and grouped by `m n b mod q`) use
//! independently built `Kl3~` tables. The theorem bounds are reference curves
//! only; the trivial bound is the sole pass/fail check.

use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::arith::factorize;
use crate::error::{Error, Result};
use crate::expsums::{CompensatedSum, HyperTable};
use crate::format::{sci, sci_opt};
use crate::modarith::{gcd, mul_mod, reduce};
use crate::voronoi::SmoothWeight;

/// Largest modulus accepted.
pub const MAX_MODULUS: u64 = 10_000;
/// Slack on `|S| <= trivial`.
pub const TRIVIAL_SLACK: f64 = 1e-9;

/// Parameters of one bilinear sum. `alpha[i]` is the coefficient of
/// `n = n_start + i`, so `N = alpha.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearConfig {
    q: u64,
    b: i64,
    m: u64,
    n_start: i64,
    alpha: Vec<Complex64>,
    s1: Complex64,
    s2: Complex64,
}

impl BilinearConfig {
    /// `lambda = d` (both shifts zero).
    pub fn new(q: u64, b: i64, m: u64, n_start: i64, alpha: Vec<Complex64>) -> Result<Self> {
        if q == 0 || q > MAX_MODULUS {
            return Err(Error::BadModulus(format!(
                "q = {q} outside 1..={MAX_MODULUS}"
            )));
        }
        if gcd(reduce(b, q), q) != 1 {
            return Err(Error::NonCoprime { a: b, q });
        }
        if let Some(a) = alpha.iter().find(|a| !(a.norm() <= 1.0 + 1e-12)) {
            return Err(Error::InvalidInput(format!(
                "|alpha_n| = {} exceeds 1",
                a.norm()
            )));
        }
        let zero = Complex64::new(0.0, 0.0);
        Ok(BilinearConfig {
            q,
            b,
            m,
            n_start,
            alpha,
            s1: zero,
            s2: zero,
        })
    }

    /// `lambda(m) = sigma_{s1}(m) m^{s2}`.
    pub fn with_shifts(mut self, s1: Complex64, s2: Complex64) -> Self {
        self.s1 = s1;
        self.s2 = s2;
        self
    }

    /// Eisenstein coefficients of `E(z, 1/2 + w)`: `lambda = sigma_{-2w}`.
    pub fn with_eisenstein(self, w: Complex64) -> Self {
        self.with_shifts(-2.0 * w, Complex64::new(0.0, 0.0))
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn b(&self) -> i64 {
        self.b
    }

    /// The scale `M` of `V(m/M)`.
    pub fn m_scale(&self) -> u64 {
        self.m
    }

    pub fn n_len(&self) -> usize {
        self.alpha.len()
    }

    pub fn n_start(&self) -> i64 {
        self.n_start
    }

    pub fn alpha(&self) -> &[Complex64] {
        &self.alpha
    }

    pub fn shifts(&self) -> (Complex64, Complex64) {
        (self.s1, self.s2)
    }

    /// `alpha_n` multiplied by `factor`, which must keep `|alpha_n| <= 1`.
    pub fn scaled_alpha(&self, factor: f64) -> Self {
        let mut cfg = self.clone();
        cfg.alpha.iter_mut().for_each(|a| *a *= factor);
        cfg
    }

    /// `b -> -b` with `alpha` and both shifts conjugated.
    pub fn conjugated(&self) -> Self {
        BilinearConfig {
            q: self.q,
            b: -self.b,
            m: self.m,
            n_start: self.n_start,
            alpha: self.alpha.iter().map(|a| a.conj()).collect(),
            s1: self.s1.conj(),
            s2: self.s2.conj(),
        }
    }

    /// `(m, lambda(m) V(m/M))` over `M < m < 2M`, where `V(m/M) != 0`.
    pub fn m_weights(&self) -> Vec<(u64, Complex64)> {
        if self.m == 0 {
            return Vec::new();
        }
        let v = SmoothWeight::new(1.0).expect("unit scale");
        let (lo, hi) = (self.m + 1, 2 * self.m - 1);
        if hi < lo {
            return Vec::new();
        }
        let len = (hi - lo + 1) as usize;
        // sigma_{s1} by a sieve over divisors d <= hi
        let mut sigma = vec![Complex64::new(0.0, 0.0); len];
        let zero = self.s1 == Complex64::new(0.0, 0.0);
        for d in 1..=hi {
            let dp = if zero {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(d as f64, 0.0).powc(self.s1)
            };
            let mut k = lo.div_ceil(d) * d;
            while k <= hi {
                sigma[(k - lo) as usize] += dp;
                k += d;
            }
        }
        let shift_zero = self.s2 == Complex64::new(0.0, 0.0);
        (lo..=hi)
            .zip(sigma)
            .map(|(mm, s)| {
                let twist = if shift_zero {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(mm as f64, 0.0).powc(self.s2)
                };
                (mm, s * twist * v.eval(mm as f64 / self.m as f64))
            })
            .collect()
    }

    fn n_residues(&self) -> impl Iterator<Item = (u64, Complex64)> + '_ {
        let (q, b) = (self.q, reduce(self.b, self.q));
        self.alpha
            .iter()
            .enumerate()
            .map(move |(i, &a)| (mul_mod(reduce(self.n_start + i as i64, q), b, q), a))
    }
}

/// Term-by-term double sum against the fast `Kl3~` table.
pub fn bilinear_sum(cfg: &BilinearConfig) -> Complex64 {
    bilinear_sum_with(cfg, &HyperTable::new(cfg.q))
}

pub fn bilinear_sum_with(cfg: &BilinearConfig, table: &HyperTable) -> Complex64 {
    assert_eq!(table.modulus(), cfg.q);
    let q = cfg.q;
    let weights = cfg.m_weights();
    let mut acc = CompensatedSum::default();
    for (nb, a) in cfg.n_residues() {
        for &(m, w) in &weights {
            acc.add(a * w * table.values()[mul_mod(m % q, nb, q) as usize]);
        }
    }
    acc.sum()
}

/// Weights accumulated per residue `m n b mod q`, contracted against the
/// `O(q^2)` reference `Kl3~` table.
pub fn bilinear_grouped(cfg: &BilinearConfig) -> Complex64 {
    bilinear_grouped_with(cfg, &HyperTable::direct(cfg.q))
}

pub fn bilinear_grouped_with(cfg: &BilinearConfig, table: &HyperTable) -> Complex64 {
    assert_eq!(table.modulus(), cfg.q);
    let q = cfg.q;
    let weights = cfg.m_weights();
    let mut bins = vec![CompensatedSum::default(); q as usize];
    for (nb, a) in cfg.n_residues() {
        for &(m, w) in &weights {
            bins[mul_mod(m % q, nb, q) as usize].add(a * w);
        }
    }
    bins.iter()
        .zip(table.values())
        .map(|(bin, k)| bin.sum() * k)
        .collect::<CompensatedSum>()
        .sum()
}

/// `sum |alpha_n| * sum |lambda(m) V(m/M)| * max_r |Kl3~(r, q)|`.
pub fn trivial_bound(cfg: &BilinearConfig, table: &HyperTable) -> f64 {
    let alpha: f64 = cfg.alpha.iter().map(|a| a.norm()).sum();
    let lam: f64 = cfg.m_weights().iter().map(|(_, w)| w.norm()).sum();
    let kmax = table.values().iter().map(|k| k.norm()).fold(0.0, f64::max);
    // empty float sums are -0.0; keep the bound nonnegative in print
    alpha * lam * kmax + 0.0
}

/// Which printed bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundKind {
    /// Square-free `q`.
    Squarefree,
    /// `q = p^gamma`, `gamma >= 2`, `p > 2`.
    PrimePower,
    /// `q = p^gamma`, `gamma >= 1`, the estimate by Poisson in `m`.
    Alt,
}

/// The printed right-hand side with `epsilon = 0`; `p` is used by
/// [`BoundKind::PrimePower`] only.
pub fn thm_bound(kind: BoundKind, q: f64, m: f64, n: f64, p: f64) -> f64 {
    let r = 1.0 + m / q;
    match kind {
        BoundKind::Squarefree => {
            q.powf(3.0 / 8.0) * m.sqrt() * n.powf(0.75) * r.sqrt()
                + q.powf(-0.25) * m * n.powf(1.5) * r
                + n * q.powf(0.75) * r.sqrt()
        }
        BoundKind::PrimePower => {
            p.powf(7.0 / 12.0) * q.cbrt() * m.sqrt() * n.powf(5.0 / 6.0) * r.powf(2.0 / 3.0)
                + q.powf(13.0 / 20.0) * n
        }
        BoundKind::Alt => m * n.sqrt() + m.sqrt() * n * q.powf(0.25) * r.sqrt(),
    }
}

/// The hypothesis under which a bound is stated, checked for `(q, M, N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub kind: BoundKind,
    pub holds: bool,
    pub condition: &'static str,
}

pub fn hypothesis(kind: BoundKind, q: u64, m: f64, n: f64) -> Hypothesis {
    let f = factorize(q);
    let r = 1.0 + m / q as f64;
    let single = f.factors().len() == 1;
    let (holds, condition) = match kind {
        BoundKind::Squarefree => (
            f.is_squarefree() && n <= (q as f64).sqrt() / (r * r),
            "q squarefree; N <= q^(1/2)(1+M/q)^(-2)",
        ),
        BoundKind::PrimePower => (
            single
                && f.factors()[0].1 >= 2
                && f.factors()[0].0 > 2
                && n <= (q as f64).powf(0.2) / (r * r),
            "q = p^g with g >= 2 and p odd; N <= q^(1/5)(1+M/q)^(-2)",
        ),
        BoundKind::Alt => (single, "q = p^g with g >= 1"),
    };
    Hypothesis {
        kind,
        holds,
        condition,
    }
}

/// The bound matching the shape of `q`: square-free first, then odd prime
/// powers, else none.
pub fn applicable_kind(q: u64) -> Option<BoundKind> {
    let f = factorize(q);
    if q > 1 && f.is_squarefree() {
        Some(BoundKind::Squarefree)
    } else if f.factors().len() == 1 && f.factors()[0].0 > 2 {
        Some(BoundKind::PrimePower)
    } else {
        None
    }
}

/// One row of a cancellation scan.
#[derive(Debug, Clone, PartialEq)]
pub struct CancellationReport {
    pub q: u64,
    /// The prime when `q` is a prime power.
    pub p: Option<u64>,
    pub m: u64,
    pub n: usize,
    pub sum_value: Complex64,
    pub grouped_value: Complex64,
    pub trivial_bound: f64,
    pub thm_squarefree: f64,
    pub thm_primepower: Option<f64>,
    pub thm_alt: f64,
    /// The bound for the shape of `q`, if any.
    pub thm_bound: Option<f64>,
    /// `log|S| / log(trivial)`.
    pub exponent: f64,
    /// `log q`, the size of the omitted `q^epsilon` per unit `epsilon`.
    pub log_q: f64,
    pub hypothesis: Option<Hypothesis>,
}

impl CancellationReport {
    pub fn new(cfg: &BilinearConfig, fast: &HyperTable, reference: &HyperTable) -> Self {
        let sum_value = bilinear_sum_with(cfg, fast);
        let grouped_value = bilinear_grouped_with(cfg, reference);
        let trivial = trivial_bound(cfg, fast);
        let (q, m, n) = (cfg.q, cfg.m, cfg.alpha.len());
        let (qf, mf, nf) = (q as f64, m as f64, n as f64);
        let f = factorize(q);
        let p = (f.factors().len() == 1).then(|| f.factors()[0].0);
        let thm_primepower = p.map(|p| thm_bound(BoundKind::PrimePower, qf, mf, nf, p as f64));
        let kind = applicable_kind(q);
        let thm = kind.map(|k| match k {
            BoundKind::PrimePower => thm_primepower.expect("prime power"),
            k => thm_bound(k, qf, mf, nf, 0.0),
        });
        CancellationReport {
            q,
            p,
            m,
            n,
            sum_value,
            grouped_value,
            trivial_bound: trivial,
            thm_squarefree: thm_bound(BoundKind::Squarefree, qf, mf, nf, 0.0),
            thm_primepower,
            thm_alt: thm_bound(BoundKind::Alt, qf, mf, nf, 0.0),
            thm_bound: thm,
            exponent: sum_value.norm().ln() / trivial.ln(),
            log_q: qf.ln(),
            hypothesis: kind.map(|k| hypothesis(k, q, mf, nf)),
        }
    }

    pub fn trivial_ok(&self) -> bool {
        self.sum_value.norm() <= self.trivial_bound * (1.0 + TRIVIAL_SLACK)
    }

    /// `|S - S_grouped| / |S|`, or the absolute gap when `S = 0`.
    pub fn path_residual(&self) -> f64 {
        let gap = (self.sum_value - self.grouped_value).norm();
        let scale = self.sum_value.norm();
        if scale > 0.0 {
            gap / scale
        } else {
            gap
        }
    }
}

/// Reports for a family of configurations, in input order. Tables are
/// built once per modulus.
pub fn cancellation_scan(family: &[BilinearConfig]) -> Vec<CancellationReport> {
    let mut moduli: Vec<u64> = family.iter().map(|c| c.q).collect();
    moduli.sort_unstable();
    moduli.dedup();
    let tables: Vec<(u64, HyperTable, HyperTable)> = moduli
        .par_iter()
        .map(|&q| (q, HyperTable::new(q), HyperTable::direct(q)))
        .collect();
    family
        .par_iter()
        .map(|cfg| {
            let i = tables
                .binary_search_by_key(&cfg.q, |t| t.0)
                .expect("table built");
            CancellationReport::new(cfg, &tables[i].1, &tables[i].2)
        })
        .collect()
}

pub const CSV_HEADER: &str = "q,p,M,N,abs_S,trivial,thm_squarefree,thm_primepower,thm_alt,exponent,log_q,hypothesis_ok,hypothesis,path_residual,trivial_ok";

pub fn to_csv(rows: &[CancellationReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let (ok, cond) = match &r.hypothesis {
            Some(h) => (h.holds.to_string(), h.condition.to_string()),
            None => ("false".to_string(), String::new()),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.q,
            r.p.map(|p| p.to_string()).unwrap_or_default(),
            r.m,
            r.n,
            sci(r.sum_value.norm()),
            sci(r.trivial_bound),
            sci(r.thm_squarefree),
            sci_opt(r.thm_primepower),
            sci(r.thm_alt),
            sci(r.exponent),
            sci(r.log_q),
            ok,
            cond,
            sci(r.path_residual()),
            r.trivial_ok(),
        )
        .expect("write to string");
    }
    out
}

/// Unit-modulus coefficients `alpha_n = e(theta_n)` from a seeded generator.
pub fn random_phases(len: usize, seed: u64) -> Vec<Complex64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| Complex64::from_polar(1.0, std::f64::consts::TAU * rng.gen::<f64>()))
        .collect()
}

/// The standard scan grid: ten moduli up to `7^4 = 2401` (square-free,
/// odd prime powers, and `q = 1`) times five `(M, N)` shapes, 50 configs.
pub fn default_family() -> Vec<BilinearConfig> {
    const MODULI: [u64; 10] = [1, 7, 27, 30, 101, 125, 243, 1001, 1009, 2401];
    let mut family = Vec::new();
    for (i, &q) in MODULI.iter().enumerate() {
        let shapes = [
            (q, 1usize),
            (q / 2 + 1, 2),
            (2 * q, 3),
            (q.div_ceil(4), 5),
            (4 * q, 2),
        ];
        for (j, &(m, n)) in shapes.iter().enumerate() {
            let seed = (i * 16 + j) as u64;
            let alpha = if j == 0 {
                vec![Complex64::new(1.0, 0.0); n]
            } else {
                random_phases(n, seed)
            };
            let b = if q == 1 { 1 } else { 2 + (q as i64 % 5) };
            let b = if gcd(reduce(b, q), q) == 1 { b } else { 1 };
            family.push(
                BilinearConfig::new(q, b, m.max(1), n as i64, alpha).expect("valid grid config"),
            );
        }
    }
    family
}
