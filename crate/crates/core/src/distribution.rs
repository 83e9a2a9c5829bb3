//! `d_3` in arithmetic progressions: exact progression sums against the
//! coprime mean, their Ramanujan-sum splitting, and the rebracketing of a
//! dyadic `d_3`-sum twisted by `Kl3~` as a bilinear form.

use std::fmt::Write as _;

use num_complex::Complex64;
use num_rational::Ratio;
use rayon::prelude::*;

use crate::arith::{divisor_table, divisors, euler_phi, factorize, DivisorTable};
use crate::error::{Error, Result};
use crate::expsums::{CompensatedSum, HyperTable, RootTable};
use crate::format::sci;
use crate::modarith::{gcd, mul_mod, reduce};

/// Largest `X` for the dyadic rebracketing.
pub const MAX_DYADIC: u64 = 1_000_000;
/// Largest modulus for the dyadic rebracketing.
pub const MAX_TWIST_MODULUS: u64 = 10_000;

/// `d_3(n)` for `n <= X`.
#[derive(Debug, Clone)]
pub struct D3Table {
    table: DivisorTable,
}

impl D3Table {
    pub fn new(x: u64) -> Self {
        D3Table {
            table: divisor_table(3, x as usize),
        }
    }

    pub fn limit(&self) -> u64 {
        self.table.limit() as u64
    }

    pub fn get(&self, n: u64) -> u64 {
        self.table.get(n as usize) as u64
    }

    /// `T[r] = sum_{n <= X, n = r (q)} d_3(n)` for `0 <= r < q`.
    pub fn residue_sums(&self, q: u64) -> Vec<u64> {
        let mut t = vec![0u64; q as usize];
        for (n, &v) in self.table.values().iter().enumerate().skip(1) {
            t[n % q as usize] += v as u64;
        }
        t
    }
}

/// `sum_{n <= X, n = a (q)} d_3(n)`.
pub fn d3_ap_sum(x: u64, q: u64, a: u64) -> u64 {
    assert!(q >= 1);
    D3Table::new(x).residue_sums(q)[(a % q) as usize]
}

/// `(1/phi(q)) sum_{n <= X, (n, q) = 1} d_3(n)`.
pub fn coprime_mean(x: u64, q: u64) -> Ratio<i128> {
    assert!(q >= 1);
    coprime_mean_from(&D3Table::new(x).residue_sums(q), q)
}

fn coprime_mean_from(sums: &[u64], q: u64) -> Ratio<i128> {
    let total: u64 = (0..q)
        .filter(|&r| gcd(r, q) == 1)
        .map(|r| sums[r as usize])
        .sum();
    Ratio::new(total as i128, euler_phi(q) as i128)
}

/// One progression against the coprime mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ApDiscrepancy {
    pub x: u64,
    pub q: u64,
    pub a: u64,
    pub ap_sum: u64,
    pub coprime_mean: Ratio<i128>,
    pub delta: Ratio<i128>,
}

impl ApDiscrepancy {
    pub fn delta_f64(&self) -> f64 {
        *self.delta.numer() as f64 / *self.delta.denom() as f64
    }
}

/// Discrepancies for every `a` coprime to `q`, in increasing `a`.
pub fn ap_discrepancies(table: &D3Table, q: u64) -> Vec<ApDiscrepancy> {
    let sums = table.residue_sums(q);
    let mean = coprime_mean_from(&sums, q);
    (0..q)
        .filter(|&a| gcd(a, q) == 1)
        .map(|a| {
            let a = if q == 1 { 1 } else { a };
            let ap = sums[(a % q) as usize];
            ApDiscrepancy {
                x: table.limit(),
                q,
                a,
                ap_sum: ap,
                coprime_mean: mean,
                delta: Ratio::from_integer(ap as i128) - mean,
            }
        })
        .collect()
}

/// `S(d) = (1/q) sum*_{alpha (d)} sum_{n <= X} d_3(n) e(alpha (n - a) / d)`
/// for each `d | q`.
#[derive(Debug, Clone, PartialEq)]
pub struct RamanujanDecomposition {
    pub q: u64,
    pub a: u64,
    pub x: u64,
    /// `(d, S(d))` in increasing `d`.
    pub terms: Vec<(u64, Complex64)>,
}

impl RamanujanDecomposition {
    pub fn total(&self) -> Complex64 {
        self.terms
            .iter()
            .map(|t| t.1)
            .collect::<CompensatedSum>()
            .sum()
    }

    /// `|sum_d S(d) - ap_sum|`.
    pub fn residual(&self, ap_sum: u64) -> f64 {
        (self.total() - Complex64::new(ap_sum as f64, 0.0)).norm()
    }
}

pub fn ramanujan_decomposition(x: u64, q: u64, a: i64) -> Result<RamanujanDecomposition> {
    let table = D3Table::new(x);
    ramanujan_decomposition_from(&table.residue_sums(q), x, q, a)
}

/// From the residue sums modulo `q`: each `d | q` folds them to residues
/// modulo `d`, so the cost is `O(q + sum_d d phi(d))`.
pub fn ramanujan_decomposition_from(
    sums: &[u64],
    x: u64,
    q: u64,
    a: i64,
) -> Result<RamanujanDecomposition> {
    if q == 0 || sums.len() as u64 != q {
        return Err(Error::BadModulus(format!(
            "q = {q} with {} residue sums",
            sums.len()
        )));
    }
    let a_red = reduce(a, q);
    if gcd(a_red, q) != 1 {
        return Err(Error::NonCoprime { a, q });
    }
    let terms = divisors(q)
        .into_iter()
        .map(|d| {
            let mut folded = vec![0u64; d as usize];
            for (r, &s) in sums.iter().enumerate() {
                folded[r % d as usize] += s;
            }
            let roots = RootTable::new(d);
            let ad = a_red % d;
            let mut acc = CompensatedSum::default();
            for alpha in (0..d).filter(|&al| gcd(al, d) == 1) {
                for (r, &t) in folded.iter().enumerate() {
                    if t == 0 {
                        continue;
                    }
                    let shift = (r as u64 + d - ad) % d;
                    acc.add(roots.get(mul_mod(alpha, shift, d)) * t as f64);
                }
            }
            (d, acc.sum() / q as f64)
        })
        .collect();
    Ok(RamanujanDecomposition {
        q,
        a: if q == 1 { 1 } else { a_red },
        x,
        terms,
    })
}

/// Least-squares line `log y = intercept + slope log q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// `(q, log y - fitted)` for each point used.
    pub residuals: Vec<(u64, f64)>,
}

/// Fit over points with `q > 1` and `y > 0`; `None` with fewer than two.
pub fn fit_slope(points: &[(u64, f64)]) -> Option<SlopeFit> {
    let pts: Vec<(u64, f64, f64)> = points
        .iter()
        .filter(|&&(q, y)| q > 1 && y > 0.0)
        .map(|&(q, y)| (q, (q as f64).ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.2).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.1 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.1 - mx) * (p.2 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = pts
        .iter()
        .map(|p| (p.0, p.2 - intercept - slope * p.1))
        .collect();
    Some(SlopeFit {
        slope,
        intercept,
        residuals,
    })
}

/// Per-modulus summary of a discrepancy scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulusSummary {
    pub q: u64,
    pub rows: Vec<ApDiscrepancy>,
    pub max_abs_delta: f64,
    /// `max_a |delta| * q / X`.
    pub normalized: f64,
    /// `sum_a delta == 0` in exact arithmetic.
    pub zero_sum: bool,
    /// Largest `|sum_d S(d) - ap_sum|` over `a`, when decompositions were run.
    pub decomposition_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyScan {
    pub x: u64,
    pub moduli: Vec<ModulusSummary>,
    pub fit: Option<SlopeFit>,
}

/// Discrepancies for every `q` in `moduli` and every `a` coprime to `q`.
/// With `decompose`, the Ramanujan splitting is checked for every row too.
pub fn discrepancy_scan(x: u64, moduli: &[u64], decompose: bool) -> Result<DiscrepancyScan> {
    if let Some(&q) = moduli.iter().find(|&&q| q == 0 || q > x.max(1)) {
        return Err(Error::BadModulus(format!(
            "q = {q} must satisfy 1 <= q <= X = {x}"
        )));
    }
    let table = D3Table::new(x);
    let summaries: Vec<ModulusSummary> = moduli
        .par_iter()
        .map(|&q| {
            let rows = ap_discrepancies(&table, q);
            let zero_sum =
                rows.iter().map(|r| r.delta).sum::<Ratio<i128>>() == Ratio::from_integer(0);
            let max_abs_delta = rows.iter().map(|r| r.delta_f64().abs()).fold(0.0, f64::max);
            let decomposition_residual = decompose.then(|| {
                let sums = table.residue_sums(q);
                rows.iter()
                    .map(|r| {
                        ramanujan_decomposition_from(&sums, x, q, r.a as i64)
                            .expect("coprime residue")
                            .residual(r.ap_sum)
                    })
                    .fold(0.0, f64::max)
            });
            ModulusSummary {
                q,
                rows,
                max_abs_delta,
                normalized: max_abs_delta * q as f64 / x as f64,
                zero_sum,
                decomposition_residual,
            }
        })
        .collect();
    let fit = fit_slope(
        &summaries
            .iter()
            .map(|s| (s.q, s.max_abs_delta))
            .collect::<Vec<_>>(),
    );
    Ok(DiscrepancyScan {
        x,
        moduli: summaries,
        fit,
    })
}

pub const CSV_HEADER: &str = "X,q,a,ap_sum,coprime_mean,delta,max_abs_delta,normalized,slope_fit,zero_sum,decomposition_residual";

fn ratio_str(r: &Ratio<i128>) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl DiscrepancyScan {
    /// One row per `(q, a)`, then a `*` row per modulus with the aggregates.
    pub fn to_csv(&self) -> String {
        let slope = self.fit.as_ref().map(|f| sci(f.slope)).unwrap_or_default();
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for s in &self.moduli {
            for r in &s.rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},,,,,",
                    self.x,
                    s.q,
                    r.a,
                    r.ap_sum,
                    ratio_str(&r.coprime_mean),
                    sci(r.delta_f64())
                )
                .expect("write to string");
            }
            writeln!(
                out,
                "{},{},*,,{},,{},{},{},{},{}",
                self.x,
                s.q,
                s.rows
                    .first()
                    .map(|r| ratio_str(&r.coprime_mean))
                    .unwrap_or_default(),
                sci(s.max_abs_delta),
                sci(s.normalized),
                slope,
                s.zero_sum,
                s.decomposition_residual.map(sci).unwrap_or_default()
            )
            .expect("write to string");
        }
        out
    }
}

/// `sum_{Y < m <= 2Y} d_3(m) Kl3~(m b, q)` taken directly, and rebracketed
/// as `sum_{n1} sum_{Y/n1 < m <= 2Y/n1} d(m) Kl3~(m n1 b, q)`.
pub fn d3_to_bilinear(y: u64, q: u64, b: i64) -> Result<(Complex64, Complex64)> {
    if y > MAX_DYADIC {
        return Err(Error::InvalidInput(format!("Y = {y} exceeds {MAX_DYADIC}")));
    }
    if q == 0 || q > MAX_TWIST_MODULUS {
        return Err(Error::BadModulus(format!(
            "q = {q} outside 1..={MAX_TWIST_MODULUS}"
        )));
    }
    let table = HyperTable::new(q);
    let k = |m: u64| table.values()[mul_mod(m % q, reduce(b, q), q) as usize];
    let top = 2 * y;
    let d3 = divisor_table(3, top as usize);
    let d2 = divisor_table(2, top as usize);
    let direct: CompensatedSum = ((y + 1)..=top)
        .map(|m| k(m) * d3.get(m as usize) as f64)
        .collect();
    let mut glued = CompensatedSum::default();
    for n1 in 1..=top {
        let (lo, hi) = (y / n1 + 1, top / n1);
        for m in lo..=hi {
            glued.add(k(m * n1) * d2.get(m as usize) as f64);
        }
    }
    Ok((direct.sum(), glued.sum()))
}

/// `true` when `q` is square-free or a power of an odd prime, the moduli of
/// the standard scans.
pub fn is_scan_modulus(q: u64) -> bool {
    let f = factorize(q);
    f.is_squarefree() || (f.factors().len() == 1 && f.factors()[0].0 > 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// `d_3(n)` by counting ordered triples.
    fn d3_triples(n: u64) -> u64 {
        let mut c = 0;
        for a in 1..=n {
            if n % a != 0 {
                continue;
            }
            for b in 1..=n / a {
                if (n / a) % b == 0 {
                    c += 1;
                }
            }
        }
        c
    }

    #[test]
    fn table_matches_triple_count() {
        let t = D3Table::new(2000);
        for n in 1..=2000 {
            assert_eq!(t.get(n), d3_triples(n), "n={n}");
        }
    }

    #[test]
    fn ap_sum_examples() {
        assert_eq!(d3_ap_sum(10, 1, 1), 53);
        assert_eq!(d3_ap_sum(10, 3, 3), 18);
        assert_eq!(d3_ap_sum(0, 5, 2), 0);
    }

    #[test]
    fn coprime_mean_examples() {
        assert_eq!(coprime_mean(10, 1), Ratio::from_integer(53));
        assert_eq!(coprime_mean(10, 3), Ratio::new(35, 2));
        assert_eq!(coprime_mean(0, 7), Ratio::from_integer(0));
    }

    #[test]
    fn decomposition_examples() {
        let r = ramanujan_decomposition(10, 1, 1).unwrap();
        assert_eq!(r.terms.len(), 1);
        assert!((r.terms[0].1 - Complex64::new(53.0, 0.0)).norm() < 1e-12);
        let r = ramanujan_decomposition(10, 3, 1).unwrap();
        assert_eq!(r.terms.len(), 2);
        assert!(r.residual(d3_ap_sum(10, 3, 1)) < 1e-9);
        let r = ramanujan_decomposition(100, 6, 5).unwrap();
        assert_eq!(
            r.terms.iter().map(|t| t.0).collect::<Vec<_>>(),
            vec![1, 2, 3, 6]
        );
        assert!(r.residual(d3_ap_sum(100, 6, 5)) < 1e-9);
        assert!(ramanujan_decomposition(100, 6, 4).is_err());
    }

    #[test]
    fn scan_zero_sum_and_csv() {
        let moduli: Vec<u64> = (1..=40).filter(|&q| is_scan_modulus(q)).collect();
        let scan = discrepancy_scan(20_000, &moduli, true).unwrap();
        for s in &scan.moduli {
            assert!(s.zero_sum, "q={}", s.q);
            assert!(s.decomposition_residual.unwrap() <= 1e-6);
            assert_eq!(s.rows.len() as u64, euler_phi(s.q));
        }
        assert!(scan.fit.is_some());
        let csv = scan.to_csv();
        let rows: usize = scan.moduli.iter().map(|s| s.rows.len() + 1).sum();
        assert_eq!(csv.lines().count(), rows + 1);
        assert!(discrepancy_scan(10, &[11], false).is_err());
    }

    #[test]
    fn slope_fit_recovers_power_law() {
        let pts: Vec<(u64, f64)> = [2u64, 3, 5, 7, 11]
            .iter()
            .map(|&q| (q, 4.0 * (q as f64).powf(-0.7)))
            .collect();
        let f = fit_slope(&pts).unwrap();
        assert!((f.slope + 0.7).abs() < 1e-12);
        assert!((f.intercept - 4f64.ln()).abs() < 1e-12);
        assert!(f.residuals.iter().all(|r| r.1.abs() < 1e-12));
        assert!(fit_slope(&[(1, 1.0), (5, 2.0)]).is_none());
    }

    #[test]
    fn rebracketing_examples() {
        let (a, b) = d3_to_bilinear(8, 1, 1).unwrap();
        let want: u64 = (9..=16).map(d3_triples).sum();
        assert_eq!(a, Complex64::new(want as f64, 0.0));
        assert_eq!(b, Complex64::new(want as f64, 0.0));
        for (y, q, bb) in [(64, 7, 1), (64, 9, 2)] {
            let (a, b) = d3_to_bilinear(y, q, bb).unwrap();
            assert!((a - b).norm() <= 1e-9 * a.norm().max(1.0));
        }
        assert!(d3_to_bilinear(2_000_000, 7, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn ap_sum_monotone_in_x(x in 1u64..3000, q in 1u64..50, a in 0u64..50) {
            let t1 = D3Table::new(x).residue_sums(q);
            let t2 = D3Table::new(x + 1).residue_sums(q);
            prop_assert!(t1[(a % q) as usize] <= t2[(a % q) as usize]);
        }

        #[test]
        fn rebracketing_agrees(y in 1u64..3000, q in 1u64..200, b in -50i64..50) {
            let (a, g) = d3_to_bilinear(y, q, b).unwrap();
            prop_assert!((a - g).norm() <= 1e-9 * a.norm().max(1.0));
        }
    }
}
