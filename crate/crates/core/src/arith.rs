//! Multiplicative functions: divisor functions, Möbius, Euler phi,
//! Ramanujan sums and the `sigma_{0,0}` identity.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::expsums::{unit_root, CompensatedSum};
use crate::modarith::gcd;

/// Largest integer accepted by [`factorize`].
pub const FACTORIZE_LIMIT: u64 = 1_000_000_000_000;

/// Prime factorization `n = prod p_i^e_i`, primes strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factorization {
    n: u64,
    factors: Vec<(u64, u32)>,
}

impl Factorization {
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn factors(&self) -> &[(u64, u32)] {
        &self.factors
    }

    pub fn mobius(&self) -> i64 {
        if self.factors.iter().any(|&(_, e)| e > 1) {
            0
        } else if self.factors.len() % 2 == 0 {
            1
        } else {
            -1
        }
    }

    pub fn phi(&self) -> u64 {
        self.factors
            .iter()
            .map(|&(p, e)| (p - 1) * p.pow(e - 1))
            .product()
    }

    /// Number of distinct prime factors.
    pub fn omega(&self) -> usize {
        self.factors.len()
    }

    pub fn is_squarefree(&self) -> bool {
        self.factors.iter().all(|&(_, e)| e == 1)
    }

    /// Product of the prime factors occurring to the first power.
    pub fn squarefree_part(&self) -> u64 {
        self.factors
            .iter()
            .filter(|&&(_, e)| e == 1)
            .map(|&(p, _)| p)
            .product()
    }

    /// Product of the prime powers `p^e` with `e >= 2`.
    pub fn squarefull_part(&self) -> u64 {
        self.factors
            .iter()
            .filter(|&&(_, e)| e >= 2)
            .map(|&(p, e)| p.pow(e))
            .product()
    }

    /// The prime-power components `p^e` of `n`.
    pub fn prime_powers(&self) -> Vec<u64> {
        self.factors.iter().map(|&(p, e)| p.pow(e)).collect()
    }

    /// All positive divisors in increasing order.
    pub fn divisors(&self) -> Vec<u64> {
        let mut divs = vec![1u64];
        for &(p, e) in &self.factors {
            let len = divs.len();
            let mut pk = 1;
            for _ in 0..e {
                pk *= p;
                for i in 0..len {
                    divs.push(divs[i] * pk);
                }
            }
        }
        divs.sort_unstable();
        divs
    }
}

/// Trial division up to `sqrt(n)`.
pub fn factorize(n: u64) -> Factorization {
    assert!(
        (1..=FACTORIZE_LIMIT).contains(&n),
        "factorize: n out of range"
    );
    let mut factors = Vec::new();
    let mut m = n;
    let mut p = 2u64;
    while p * p <= m {
        if m % p == 0 {
            let mut e = 0;
            while m % p == 0 {
                m /= p;
                e += 1;
            }
            factors.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if m > 1 {
        factors.push((m, 1));
    }
    Factorization { n, factors }
}

pub fn mobius(n: u64) -> i64 {
    factorize(n).mobius()
}

pub fn euler_phi(n: u64) -> u64 {
    factorize(n).phi()
}

pub fn divisors(n: u64) -> Vec<u64> {
    factorize(n).divisors()
}

/// Table of `d_k(n)` for `1 <= n <= limit` (index 0 unused and zero).
#[derive(Debug, Clone)]
pub struct DivisorTable {
    k: u32,
    values: Vec<u32>,
}

impl DivisorTable {
    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn limit(&self) -> usize {
        self.values.len() - 1
    }

    #[inline]
    pub fn get(&self, n: usize) -> u32 {
        self.values[n]
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    /// `sum_{n <= x} d_k(n)`.
    pub fn summatory(&self, x: usize) -> u64 {
        self.values[1..=x.min(self.limit())]
            .iter()
            .map(|&v| v as u64)
            .sum()
    }
}

/// Largest range for which [`divisor_table`] is supported.
pub const DIVISOR_TABLE_LIMIT: usize = 100_000_000;

/// Linear sieve for `d_k`, using `d_k(p^e) = C(e + k - 1, k - 1)`.
pub fn divisor_table(k: u32, limit: usize) -> DivisorTable {
    assert!(k == 2 || k == 3, "only d_2 and d_3 are tabulated");
    assert!(limit <= DIVISOR_TABLE_LIMIT, "divisor table too large");
    let prime_power_value = |e: u32| -> u32 {
        if k == 2 {
            e + 1
        } else {
            (e + 1) * (e + 2) / 2
        }
    };
    let mut values = vec![0u32; limit + 1];
    // exponent of the smallest prime factor
    let mut spf_exp = vec![0u8; limit + 1];
    let mut primes: Vec<u32> = Vec::new();
    if limit >= 1 {
        values[1] = 1;
    }
    for n in 2..=limit {
        if values[n] == 0 {
            primes.push(n as u32);
            values[n] = k;
            spf_exp[n] = 1;
        }
        for &p in &primes {
            let m = n * p as usize;
            if m > limit {
                break;
            }
            if n % p as usize == 0 {
                let e = spf_exp[n] as u32;
                spf_exp[m] = spf_exp[n] + 1;
                values[m] = values[n] / prime_power_value(e) * prime_power_value(e + 1);
                break;
            }
            spf_exp[m] = 1;
            values[m] = values[n] * k;
        }
    }
    DivisorTable { k, values }
}

/// `sigma_w(n) = sum_{d | n} d^w` for complex `w`.
pub fn sigma_w(n: u64, w: Complex64) -> Complex64 {
    assert!(n >= 1);
    let mut acc = CompensatedSum::default();
    for d in divisors(n) {
        acc.add(Complex64::new(d as f64, 0.0).powc(w));
    }
    acc.sum()
}

/// `sigma_k(n)` for a nonnegative integer exponent, exactly.
pub fn sigma_int(n: u64, k: u32) -> u128 {
    divisors(n).into_iter().map(|d| (d as u128).pow(k)).sum()
}

/// `sum_{d1 | l} sum_{d2 | l/d1, (d2, k) = 1} 1`.
pub fn sigma00_divisor_form(k: u64, l: u64) -> u64 {
    let mut count = 0;
    for d1 in divisors(l) {
        count += divisors(l / d1)
            .into_iter()
            .filter(|&d2| gcd(d2, k) == 1)
            .count() as u64;
    }
    count
}

fn d3(n: u64) -> u64 {
    factorize(n)
        .factors()
        .iter()
        .map(|&(_, e)| ((e + 1) * (e + 2) / 2) as u64)
        .product()
}

/// `sum_{a | (k, l)} mu(a) d_3(l / a)`.
pub fn sigma00_mobius_form(k: u64, l: u64) -> u64 {
    let g = gcd(k, l);
    let total: i64 = divisors(g)
        .into_iter()
        .map(|a| mobius(a) * d3(l / a) as i64)
        .sum();
    u64::try_from(total).expect("sigma_{0,0} is a count")
}

/// `sigma_{0,0}(k, l)`. With debug assertions on, both sides of the identity
/// are evaluated and compared.
pub fn sigma00(k: u64, l: u64) -> Result<u64> {
    if k == 0 || l == 0 {
        return Err(Error::InvalidInput("sigma00 needs k, l >= 1".into()));
    }
    let value = sigma00_mobius_form(k, l);
    if cfg!(debug_assertions) {
        let other = sigma00_divisor_form(k, l);
        if other != value {
            return Err(Error::IdentityViolation(format!(
                "sigma00({k}, {l}): divisor form {other} != Moebius form {value}"
            )));
        }
    }
    Ok(value)
}

/// Ramanujan sum `c_q(n) = mu(q/g) phi(q) / phi(q/g)`, `g = gcd(n, q)`.
pub fn ramanujan_sum(q: u64, n: i64) -> i64 {
    assert!(q >= 1);
    let g = gcd(n.unsigned_abs() % q, q);
    let g = if g == 0 { q } else { g };
    let f = factorize(q / g);
    f.mobius() * (euler_phi(q) / f.phi()) as i64
}

/// `sum*_{alpha mod q} e(alpha n / q)` summed term by term.
pub fn ramanujan_sum_direct(q: u64, n: i64) -> Complex64 {
    let mut acc = CompensatedSum::default();
    let n = crate::modarith::reduce(n, q);
    for alpha in (0..q).filter(|&a| gcd(a, q) == 1) {
        acc.add(unit_root(crate::modarith::mul_mod(alpha, n, q), q));
    }
    acc.sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn d3_triple_loop(limit: usize) -> Vec<u32> {
        let mut v = vec![0u32; limit + 1];
        for a in 1..=limit {
            for b in 1..=limit / a {
                for c in 1..=limit / (a * b) {
                    v[a * b * c] += 1;
                }
            }
        }
        v
    }

    #[test]
    fn factorize_examples() {
        let f = factorize(1);
        assert!(f.factors().is_empty());
        assert_eq!((f.phi(), f.mobius()), (1, 1));
        let f = factorize(12);
        assert_eq!(f.factors(), &[(2, 2), (3, 1)]);
        assert_eq!((f.phi(), f.mobius()), (4, 0));
        let f = factorize(30);
        assert_eq!(f.factors(), &[(2, 1), (3, 1), (5, 1)]);
        assert_eq!((f.mobius(), f.omega()), (-1, 3));
        let f = factorize(2 * 2 * 2 * 3 * 5 * 5 * 7);
        assert_eq!(f.squarefree_part(), 21);
        assert_eq!(f.squarefull_part(), 200);
        assert_eq!(
            factorize(999_999_999_989).factors(),
            &[(999_999_999_989, 1)]
        );
    }

    #[test]
    fn divisor_table_examples() {
        let t = divisor_table(3, 100);
        assert_eq!(t.get(1), 1);
        assert_eq!(t.get(4), 6);
        let triples = (1..=12)
            .flat_map(|a| (1..=12).map(move |b| (a, b)))
            .filter(|&(a, b)| 12 % (a * b) == 0)
            .count();
        assert_eq!(triples, 18);
        assert_eq!(t.get(12), 18);
        let d = divisor_table(2, 100);
        assert_eq!(d.get(12), 6);
        assert_eq!(d.get(97), 2);
        assert_eq!(t.get(97), 3);
    }

    #[test]
    fn d3_sieve_matches_triple_loop() {
        let limit = 10_000;
        let t = divisor_table(3, limit);
        let oracle = d3_triple_loop(limit);
        assert_eq!(&t.values()[1..], &oracle[1..]);
    }

    #[test]
    fn d3_summatory_matches_hyperbola_count() {
        // sum_{n <= X} d_3(n) = sum_{a <= X} D(X / a) with D the summatory d
        let t = divisor_table(3, 3000);
        let d = divisor_table(2, 3000);
        let mut prev = 0;
        for x in 1..=3000usize {
            let s = t.summatory(x);
            let other: u64 = (1..=x).map(|a| d.summatory(x / a)).sum();
            assert_eq!(s, other, "x={x}");
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn d3_multiplicative_on_random_coprime_pairs() {
        let t = divisor_table(3, 1_000_000);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 10_000 {
            let m = rng.gen_range(1..1000usize);
            let n = rng.gen_range(1..1000usize);
            if gcd(m as u64, n as u64) != 1 {
                continue;
            }
            assert_eq!(t.get(m * n), t.get(m) * t.get(n));
            checked += 1;
        }
    }

    #[test]
    fn sigma_examples() {
        let w = Complex64::new(0.3, -1.7);
        assert!((sigma_w(1, w) - 1.0).norm() < 1e-15);
        assert!((sigma_w(6, Complex64::new(0.0, 0.0)) - 4.0).norm() < 1e-12);
        assert!((sigma_w(4, Complex64::new(1.0, 0.0)) - 7.0).norm() < 1e-12);
        assert_eq!(sigma_int(4, 1), 7);
        assert_eq!(sigma_int(6, 0), 4);
    }

    #[test]
    fn sigma00_examples() {
        assert_eq!(sigma00(1, 12).unwrap(), 18);
        assert_eq!(sigma00(2, 4).unwrap(), 3);
        assert_eq!(sigma00_divisor_form(2, 4), 3);
        assert_eq!(sigma00_mobius_form(2, 4), 3);
        assert_eq!(sigma00(6, 1).unwrap(), 1);
        assert!(sigma00(0, 3).is_err());
    }

    #[test]
    fn ramanujan_examples() {
        assert_eq!(ramanujan_sum(5, 0), 4);
        assert_eq!(ramanujan_sum(4, 2), -2);
        assert!((ramanujan_sum_direct(4, 2) - Complex64::new(-2.0, 0.0)).norm() < 1e-12);
        assert_eq!(ramanujan_sum(6, 1), 1);
        assert_eq!(ramanujan_sum(6, 1), mobius(6));
        assert_eq!(ramanujan_sum(1, 17), 1);
    }

    #[test]
    fn ramanujan_closed_form_matches_direct() {
        for q in 1..=300u64 {
            for n in -300i64..=300 {
                let direct = ramanujan_sum_direct(q, n);
                let closed = ramanujan_sum(q, n) as f64;
                assert!(
                    (direct - closed).norm() <= 1e-9 * q as f64,
                    "q={q} n={n} direct={direct} closed={closed}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn divisors_are_exactly_the_divisors(n in 1u64..20_000) {
            let divs = divisors(n);
            let naive: Vec<u64> = (1..=n).filter(|d| n % d == 0).collect();
            prop_assert_eq!(divs, naive);
        }

        #[test]
        fn phi_counts_units(n in 1u64..5_000) {
            let count = (0..n).filter(|&a| gcd(a, n) == 1).count() as u64;
            prop_assert_eq!(euler_phi(n), count);
        }
    }
}
