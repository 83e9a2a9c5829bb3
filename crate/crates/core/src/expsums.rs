//! Kloosterman sums `S(a, b; q)`, their explicit evaluation modulo odd prime
//! powers, twisted multiplicativity, and the normalised hyper-Kloosterman
//! sum `Kl3~(m, q) = q^-1 sum*_{x, y} e((m x + y + (xy)^-1) / q)`.
//!
//! Every exponential `e(k/q)` is evaluated from the numerator reduced modulo
//! `q`, and every loop over residues accumulates with [`CompensatedSum`].

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::arith::factorize;
use crate::error::{Error, Result};
use crate::modarith::{
    add_mod, gcd, inv_mod, is_prime, legendre, mul_mod, reduce, sqrt_mod_pp, PrimePower, Residue,
};

pub type ComplexVal = Complex64;

/// `e(k / q) = exp(2 pi i k / q)` with `k` reduced modulo `q` first.
#[inline]
pub fn unit_root(k: u64, q: u64) -> Complex64 {
    let k = k % q;
    let (s, c) = (TAU * (k as f64 / q as f64)).sin_cos();
    Complex64::new(c, s)
}

/// `e(k / q)` for a signed numerator.
#[inline]
pub fn e_frac(k: i64, q: u64) -> Complex64 {
    unit_root(reduce(k, q), q)
}

/// Precomputed `e(k / q)` for `0 <= k < q`.
#[derive(Debug, Clone)]
pub struct RootTable {
    q: u64,
    roots: Vec<Complex64>,
}

impl RootTable {
    pub fn new(q: u64) -> Self {
        RootTable {
            q,
            roots: (0..q).map(|k| unit_root(k, q)).collect(),
        }
    }

    #[inline]
    pub fn get(&self, k: u64) -> Complex64 {
        self.roots[(k % self.q) as usize]
    }
}

/// Neumaier-compensated complex accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    re: f64,
    im: f64,
    re_c: f64,
    im_c: f64,
    terms: u64,
}

#[inline]
fn neumaier(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, z: Complex64) {
        neumaier(&mut self.re, &mut self.re_c, z.re);
        neumaier(&mut self.im, &mut self.im_c, z.im);
        self.terms += 1;
    }

    pub fn sum(&self) -> Complex64 {
        Complex64::new(self.re + self.re_c, self.im + self.im_c)
    }

    pub fn terms(&self) -> u64 {
        self.terms
    }
}

impl FromIterator<Complex64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = Complex64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for z in iter {
            acc.add(z);
        }
        acc
    }
}

/// Inverse of every unit modulo `q`; non-units map to `None`.
pub fn unit_inverses(q: u64) -> Vec<Option<u32>> {
    (0..q)
        .map(|x| {
            if gcd(x, q) == 1 {
                inv_mod(x, q).map(|v| v as u32)
            } else {
                None
            }
        })
        .collect()
}

/// `S(a, b; q)` by the defining sum over units.
pub fn kloosterman_direct(a: i64, b: i64, q: u64) -> Complex64 {
    assert!(q >= 1);
    if q == 1 {
        return Complex64::new(1.0, 0.0);
    }
    let (a, b) = (reduce(a, q), reduce(b, q));
    let mut acc = CompensatedSum::default();
    for x in 1..q {
        if gcd(x, q) != 1 {
            continue;
        }
        let xinv = inv_mod(x, q).expect("unit");
        acc.add(unit_root(
            add_mod(mul_mod(a, x, q), mul_mod(b, xinv, q), q),
            q,
        ));
    }
    acc.sum()
}

/// Unnormalised inverse DFT: `out[c] = sum_y input[y] e(c y / n)`.
pub(crate) fn dft_positive(mut data: Vec<Complex64>) -> Vec<Complex64> {
    let n = data.len();
    if n <= 1 {
        return data;
    }
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_inverse(n).process(&mut data);
    data
}

/// The whole row `S(1, c; q)`, `0 <= c < q`, as one discrete Fourier
/// transform of `y -> e(y^-1 / q)` over the units `y`.
pub fn kloosterman_row_fft(q: u64) -> Vec<Complex64> {
    assert!(q >= 1);
    if q == 1 {
        return vec![Complex64::new(1.0, 0.0)];
    }
    let input = unit_inverses(q)
        .into_iter()
        .map(|inv| match inv {
            Some(yinv) => unit_root(yinv as u64, q),
            None => Complex64::new(0.0, 0.0),
        })
        .collect();
    dft_positive(input)
}

/// `S(1, beta; p^gamma)` for odd `p`, `gamma >= 2`, `p` not dividing `beta`:
/// zero for non-residues, otherwise
/// `2 (l/p)^gamma p^(gamma/2) Re[eps e(2 l / p^gamma)]` with `l^2 = beta`
/// and `eps = 1` or `i` as `p^gamma` is 1 or 3 mod 4.
pub fn kloosterman_explicit_pp(beta: i64, pp: PrimePower) -> Result<Complex64> {
    let (p, gamma, q) = (pp.p(), pp.gamma(), pp.q());
    if gamma < 2 || p == 2 {
        return Err(Error::BadModulus(format!(
            "explicit evaluation needs an odd prime power with exponent >= 2, got {p}^{gamma}"
        )));
    }
    let beta = reduce(beta, q);
    if beta % p == 0 {
        return Err(Error::NonInvertible {
            value: beta,
            modulus: p,
        });
    }
    let Some([root, _]) = sqrt_mod_pp(Residue::from_u64(beta, q), pp)? else {
        return Ok(Complex64::new(0.0, 0.0));
    };
    let sign = if gamma % 2 == 1 {
        legendre(root as i64, p) as f64
    } else {
        1.0
    };
    let phase = unit_root(mul_mod(2, root, q), q);
    let re = if q % 4 == 1 { phase.re } else { -phase.im };
    Ok(Complex64::new(2.0 * sign * (q as f64).sqrt() * re, 0.0))
}

/// Row `S(1, c; p^e)` for a single prime-power component.
fn component_row(p: u64, e: u32) -> Vec<f64> {
    let q = p.pow(e);
    if p != 2 && e >= 2 {
        let pp = PrimePower::new(p, e).expect("prime power");
        // S(1, c; p^e) = 0 whenever p | c and e >= 2
        (0..q)
            .map(|c| {
                if c % p == 0 {
                    0.0
                } else {
                    kloosterman_explicit_pp(c as i64, pp)
                        .expect("unit argument")
                        .re
                }
            })
            .collect()
    } else {
        kloosterman_row_fft(q).into_iter().map(|z| z.re).collect()
    }
}

/// `S(1, c; q)` for every `c` modulo `q` (all real).
#[derive(Debug, Clone)]
pub struct KloosterTable {
    q: u64,
    values: Vec<f64>,
}

impl KloosterTable {
    /// Fast build: explicit formula on odd prime-power components with
    /// exponent at least 2, FFT rows on the remaining components, glued with
    /// `S(1, c; q) = prod_i S(1, c (q/q_i)^-2; q_i)`.
    pub fn new(q: u64) -> Self {
        assert!(q >= 1);
        if q == 1 {
            return KloosterTable {
                q,
                values: vec![1.0],
            };
        }
        let fac = factorize(q);
        let components: Vec<(u64, u64, Vec<f64>)> = fac
            .factors()
            .par_iter()
            .map(|&(p, e)| {
                let qi = p.pow(e);
                let cofactor = (q / qi) % qi;
                let twist = inv_mod(mul_mod(cofactor, cofactor, qi), qi).expect("coprime");
                (qi, twist, component_row(p, e))
            })
            .collect();
        let values = (0..q)
            .map(|c| {
                components
                    .iter()
                    .map(|(qi, twist, row)| row[mul_mod(c % qi, *twist, *qi) as usize])
                    .product()
            })
            .collect();
        KloosterTable { q, values }
    }

    /// Reference build: one DFT of the defining sum.
    pub fn direct(q: u64) -> Self {
        KloosterTable {
            q,
            values: kloosterman_row_fft(q).into_iter().map(|z| z.re).collect(),
        }
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    #[inline]
    pub fn get(&self, c: u64) -> f64 {
        self.values[(c % self.q) as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `S(a, b; q)` on a single prime-power component `q_i = p^e`.
fn kloosterman_component(a: u64, b: u64, p: u64, e: u32) -> Complex64 {
    let qi = p.pow(e);
    let (a, b) = (a % qi, b % qi);
    // S(a, b) = S(1, ab) once one of the arguments is a unit
    let product = if a % p != 0 || b % p != 0 {
        Some(mul_mod(a, b, qi))
    } else {
        None
    };
    match product {
        Some(c) if p != 2 && e >= 2 => {
            if c % p == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                kloosterman_explicit_pp(c as i64, PrimePower::new(p, e).expect("prime power"))
                    .expect("unit argument")
            }
        }
        _ => kloosterman_direct(a as i64, b as i64, qi),
    }
}

/// `S(a, b; q)` through the twisted multiplicativity
/// `S(a, b; rs) = S(a s^-1, b s^-1; r) S(a r^-1, b r^-1; s)`.
pub fn kloosterman_split(a: i64, b: i64, q: u64) -> Complex64 {
    assert!(q >= 1);
    if q == 1 {
        return Complex64::new(1.0, 0.0);
    }
    let (a, b) = (reduce(a, q), reduce(b, q));
    let mut acc = Complex64::new(1.0, 0.0);
    for &(p, e) in factorize(q).factors() {
        let qi = p.pow(e);
        let cinv = inv_mod((q / qi) % qi, qi).expect("coprime cofactor");
        acc *= kloosterman_component(mul_mod(a, cinv, qi), mul_mod(b, cinv, qi), p, e);
    }
    acc
}

/// `Kl3~(m, q)` by the literal double sum over units `x, y`.
pub fn hyper_kl3_direct(m: i64, q: u64) -> Complex64 {
    assert!(q >= 1);
    if q == 1 {
        return Complex64::new(1.0, 0.0);
    }
    let m = reduce(m, q);
    let inverses = unit_inverses(q);
    let roots = RootTable::new(q);
    let mut acc = CompensatedSum::default();
    for x in 1..q {
        let Some(xinv) = inverses[x as usize] else {
            continue;
        };
        let mx = mul_mod(m, x, q);
        for y in 1..q {
            let Some(yinv) = inverses[y as usize] else {
                continue;
            };
            let k = mx + y + mul_mod(xinv as u64, yinv as u64, q);
            acc.add(roots.get(k));
        }
    }
    acc.sum() / q as f64
}

/// `Kl3~(m, q) = q^-1 sum*_x e(m x / q) S(1, x^-1; q)` from a table.
pub fn hyper_kl3_fast(m: i64, table: &KloosterTable) -> Complex64 {
    let q = table.modulus();
    if q == 1 {
        return Complex64::new(1.0, 0.0);
    }
    let m = reduce(m, q);
    let mut acc = CompensatedSum::default();
    for x in 1..q {
        if gcd(x, q) != 1 {
            continue;
        }
        let xinv = inv_mod(x, q).expect("unit");
        acc.add(unit_root(mul_mod(m, x, q), q) * table.get(xinv));
    }
    acc.sum() / q as f64
}

/// `Kl3~(r, q)` for every residue `r` modulo `q`.
#[derive(Debug, Clone)]
pub struct HyperTable {
    q: u64,
    values: Vec<Complex64>,
}

impl HyperTable {
    /// Fast build: Fourier transform of `x -> S(1, x^-1; q)` taken from a
    /// [`KloosterTable`].
    pub fn new(q: u64) -> Self {
        let table = KloosterTable::new(q);
        Self::from_kloosterman(&table)
    }

    pub fn from_kloosterman(table: &KloosterTable) -> Self {
        let q = table.modulus();
        if q == 1 {
            return HyperTable {
                q,
                values: vec![Complex64::new(1.0, 0.0)],
            };
        }
        let input = unit_inverses(q)
            .into_iter()
            .map(|inv| match inv {
                Some(xinv) => Complex64::new(table.get(xinv as u64), 0.0),
                None => Complex64::new(0.0, 0.0),
            })
            .collect();
        let values = dft_positive(input)
            .into_iter()
            .map(|z| z / q as f64)
            .collect();
        HyperTable { q, values }
    }

    /// Reference build in `O(q^2)`: the inner `y`-sums
    /// `sum*_y e((y + (xy)^-1) / q)` are summed literally, then the outer
    /// `x`-sum is taken term by term for every `r`.
    pub fn direct(q: u64) -> Self {
        if q == 1 {
            return HyperTable {
                q,
                values: vec![Complex64::new(1.0, 0.0)],
            };
        }
        let inverses = unit_inverses(q);
        let roots = RootTable::new(q);
        let units: Vec<u64> = (1..q).filter(|&x| inverses[x as usize].is_some()).collect();
        let inner: Vec<Complex64> = units
            .iter()
            .map(|&x| {
                let xinv = inverses[x as usize].unwrap() as u64;
                units
                    .iter()
                    .map(|&y| {
                        let yinv = inverses[y as usize].unwrap() as u64;
                        roots.get(y + mul_mod(xinv, yinv, q))
                    })
                    .collect::<CompensatedSum>()
                    .sum()
            })
            .collect();
        let values = (0..q)
            .map(|r| {
                units
                    .iter()
                    .zip(&inner)
                    .map(|(&x, &g)| roots.get(mul_mod(r, x, q)) * g)
                    .collect::<CompensatedSum>()
                    .sum()
                    / q as f64
            })
            .collect();
        HyperTable { q, values }
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    #[inline]
    pub fn get(&self, r: i64) -> Complex64 {
        self.values[reduce(r, self.q) as usize]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
}

/// Both sides of the degeneration of `Kl3~(m n b, q)` when `d = (n, q) > 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegenerationReport {
    pub d: u64,
    pub lhs: Complex64,
    /// `(d/q) Kl3~(m (n/d) b d^-1, q/d)`.
    pub printed_rhs: Complex64,
    /// `(mu(d)^2 / d) Kl3~(m (n/d) b d^-2, q/d)`.
    pub corrected_rhs: Complex64,
    pub printed_residual: f64,
    pub corrected_residual: f64,
}

impl DegenerationReport {
    pub fn printed_holds(&self, tol: f64) -> bool {
        self.printed_residual <= tol
    }

    pub fn corrected_holds(&self, tol: f64) -> bool {
        self.corrected_residual <= tol
    }
}

/// Checks the reduction of `Kl3~(m n b, q)` to the modulus `q/d`.
///
/// Splitting `q = d (q/d)` with coprime factors, the `d`-part of the double
/// sum is `sum*_{x,y mod d} e(c (y + (xy)^-1) / d) = mu(d)^2` and the
/// `q/d`-part is `Kl3(m (n/d) b d^-2, q/d)`, which gives the corrected form.
pub fn hyper_kl3_degenerate_check(m: i64, n: i64, b: i64, q: u64) -> Result<DegenerationReport> {
    let d = gcd(n.unsigned_abs(), q);
    if d <= 1 {
        return Err(Error::NotDegenerate);
    }
    let rest = q / d;
    let g = gcd(d, rest);
    if g > 1 {
        return Err(Error::NonCoprimeSplit(g));
    }
    let lhs = hyper_kl3_direct(
        (m as i128 * n as i128 * b as i128).rem_euclid(q as i128) as i64,
        q,
    );
    let base = (m as i128 * (n / d as i64) as i128 * b as i128).rem_euclid(rest as i128) as u64;
    let dinv = inv_mod(d % rest, rest).expect("coprime");
    let printed_rhs =
        hyper_kl3_direct(mul_mod(base, dinv, rest) as i64, rest) * (d as f64 / q as f64);
    let mu_sq = if factorize(d).is_squarefree() {
        1.0
    } else {
        0.0
    };
    let corrected_rhs =
        hyper_kl3_direct(mul_mod(base, mul_mod(dinv, dinv, rest), rest) as i64, rest)
            * (mu_sq / d as f64);
    Ok(DegenerationReport {
        d,
        lhs,
        printed_rhs,
        corrected_rhs,
        printed_residual: (lhs - printed_rhs).norm(),
        corrected_residual: (lhs - corrected_rhs).norm(),
    })
}

/// Largest normalised values seen by [`weil_audit`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeilAudit {
    pub max_prime: u64,
    pub primes_checked: usize,
    /// `max |S(a, b; p)| / (2 sqrt p)` over units `a, b`.
    pub max_kloosterman_ratio: f64,
    pub kloosterman_argmax: (u64, u64, u64),
    /// `max |Kl3~(m, p)|` over units `m`.
    pub max_hyper_abs: f64,
    pub hyper_argmax: (u64, u64),
}

impl WeilAudit {
    pub fn passes(&self) -> bool {
        self.max_kloosterman_ratio <= 1.0 + 1e-12 && self.max_hyper_abs <= 3.0 + 1e-12
    }
}

/// Exhaustive Weil and Deligne bound scan over all primes `p <= max_prime`.
pub fn weil_audit(max_prime: u64) -> WeilAudit {
    let primes: Vec<u64> = (2..=max_prime).filter(|&p| is_prime(p)).collect();
    let per_prime: Vec<(f64, (u64, u64, u64), f64, (u64, u64))> = primes
        .par_iter()
        .map(|&p| {
            let roots = RootTable::new(p);
            let inverses = unit_inverses(p);
            let mut best = (0.0f64, (p, 1, 1));
            for a in 1..p {
                for b in 1..p {
                    let s = (1..p)
                        .map(|x| {
                            let xinv = inverses[x as usize].unwrap() as u64;
                            roots.get(mul_mod(a, x, p) + mul_mod(b, xinv, p))
                        })
                        .collect::<CompensatedSum>()
                        .sum();
                    let ratio = s.norm() / (2.0 * (p as f64).sqrt());
                    if ratio > best.0 {
                        best = (ratio, (p, a, b));
                    }
                }
            }
            let hyper = HyperTable::direct(p);
            let mut hbest = (0.0f64, (p, 1));
            for m in 1..p {
                let v = hyper.get(m as i64).norm();
                if v > hbest.0 {
                    hbest = (v, (p, m));
                }
            }
            (best.0, best.1, hbest.0, hbest.1)
        })
        .collect();
    let mut audit = WeilAudit {
        max_prime,
        primes_checked: primes.len(),
        max_kloosterman_ratio: 0.0,
        kloosterman_argmax: (0, 0, 0),
        max_hyper_abs: 0.0,
        hyper_argmax: (0, 0),
    };
    for (ratio, arg, habs, harg) in per_prime {
        if ratio > audit.max_kloosterman_ratio {
            audit.max_kloosterman_ratio = ratio;
            audit.kloosterman_argmax = arg;
        }
        if habs > audit.max_hyper_abs {
            audit.max_hyper_abs = habs;
            audit.hyper_argmax = harg;
        }
    }
    audit
}
