//! Exact modular and p-adic arithmetic.
//!
//! All moduli handled by the crate are well below 2^32, so products of two
//! reduced residues are formed in `u128` and never overflow.

use crate::error::{Error, Result};

/// Sentinel for the p-adic valuation of zero.
pub const NU_INFINITY: u32 = u32::MAX;

/// A residue class `value mod modulus` with `0 <= value < modulus`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Residue {
    value: u64,
    modulus: u64,
}

impl Residue {
    /// Reduces an arbitrary signed integer into `[0, modulus)`.
    ///
    /// Panics if `modulus == 0`.
    pub fn new(value: i64, modulus: u64) -> Self {
        assert!(modulus >= 1, "modulus must be positive");
        Residue {
            value: reduce(value, modulus),
            modulus,
        }
    }

    pub fn from_u64(value: u64, modulus: u64) -> Self {
        assert!(modulus >= 1, "modulus must be positive");
        Residue {
            value: value % modulus,
            modulus,
        }
    }

    #[inline]
    pub fn value(self) -> u64 {
        self.value
    }

    #[inline]
    pub fn modulus(self) -> u64 {
        self.modulus
    }

    pub fn is_unit(self) -> bool {
        gcd(self.value, self.modulus) == 1
    }

    pub fn mul(self, other: Residue) -> Residue {
        debug_assert_eq!(self.modulus, other.modulus);
        Residue {
            value: mul_mod(self.value, other.value, self.modulus),
            modulus: self.modulus,
        }
    }

    pub fn add(self, other: Residue) -> Residue {
        debug_assert_eq!(self.modulus, other.modulus);
        Residue {
            value: add_mod(self.value, other.value, self.modulus),
            modulus: self.modulus,
        }
    }

    pub fn neg(self) -> Residue {
        Residue {
            value: (self.modulus - self.value) % self.modulus,
            modulus: self.modulus,
        }
    }
}

impl std::fmt::Display for Residue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} mod {}", self.value, self.modulus)
    }
}

/// `q = p^gamma` with `p` prime and `gamma >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrimePower {
    p: u64,
    gamma: u32,
    q: u64,
}

impl PrimePower {
    pub fn new(p: u64, gamma: u32) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::BadModulus(format!("{p} is not prime")));
        }
        if gamma == 0 {
            return Err(Error::BadModulus("exponent must be at least 1".into()));
        }
        let q = p
            .checked_pow(gamma)
            .filter(|&q| q < (1u64 << 40))
            .ok_or_else(|| Error::BadModulus(format!("{p}^{gamma} is too large")))?;
        Ok(PrimePower { p, gamma, q })
    }

    #[inline]
    pub fn p(self) -> u64 {
        self.p
    }

    #[inline]
    pub fn gamma(self) -> u32 {
        self.gamma
    }

    #[inline]
    pub fn q(self) -> u64 {
        self.q
    }

    /// `p^k` for `k <= gamma`.
    pub fn power(self, k: u32) -> u64 {
        debug_assert!(k <= self.gamma);
        self.p.pow(k)
    }
}

/// `n = p^nu * unit` with `p` not dividing `unit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Valuation {
    pub nu: u32,
    pub unit: i64,
}

#[inline]
pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

#[inline]
pub fn reduce(a: i64, m: u64) -> u64 {
    (a as i128).rem_euclid(m as i128) as u64
}

#[inline]
pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

#[inline]
pub fn add_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 + b as u128) % m as u128) as u64
}

#[inline]
pub fn sub_mod(a: u64, b: u64, m: u64) -> u64 {
    add_mod(a % m, m - b % m, m)
}

/// Square-and-multiply.
pub fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Inverse by the extended Euclidean algorithm; `None` unless `gcd(a, m) = 1`.
pub fn inv_mod(a: u64, m: u64) -> Option<u64> {
    if m == 1 {
        return Some(0);
    }
    let (mut r0, mut r1) = (m as i128, (a % m) as i128);
    let (mut s0, mut s1) = (0i128, 1i128);
    while r1 != 0 {
        let k = r0 / r1;
        (r0, r1) = (r1, r0 - k * r1);
        (s0, s1) = (s1, s0 - k * s1);
    }
    if r0 != 1 {
        return None;
    }
    Some(s0.rem_euclid(m as i128) as u64)
}

/// Inverse modulo `m`, mapping every residue divisible by `m` to zero.
///
/// This is the convention under which `S(1, 0̄; p) = S(1, 0; p)` in the
/// degenerate terms of the prime-modulus correlation sums.
pub fn inv_or_zero(a: u64, m: u64) -> Option<u64> {
    if a % m == 0 {
        Some(0)
    } else {
        inv_mod(a, m)
    }
}

/// Trial-division primality test.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

pub fn mod_pow(a: Residue, e: u64) -> Residue {
    Residue {
        value: pow_mod(a.value, e, a.modulus),
        modulus: a.modulus,
    }
}

pub fn mod_inv(a: Residue) -> Result<Residue> {
    inv_mod(a.value, a.modulus)
        .map(|value| Residue {
            value,
            modulus: a.modulus,
        })
        .ok_or(Error::NonInvertible {
            value: a.value,
            modulus: a.modulus,
        })
}

/// Chinese remainder theorem for pairwise coprime moduli.
pub fn crt_combine(parts: &[Residue]) -> Result<Residue> {
    let mut acc = Residue::from_u64(0, 1);
    for part in parts {
        let (m1, m2) = (acc.modulus, part.modulus);
        if gcd(m1, m2) != 1 {
            return Err(Error::ModuliNotCoprime(m1, m2));
        }
        let modulus = m1
            .checked_mul(m2)
            .ok_or_else(|| Error::InvalidInput("CRT modulus overflows u64".into()))?;
        // x = a1 + m1 * ((a2 - a1) * m1^{-1} mod m2)
        let m1_inv = inv_mod(m1 % m2, m2).expect("coprime moduli");
        let k = mul_mod(sub_mod(part.value, acc.value % m2, m2), m1_inv, m2);
        let value = ((acc.value as u128 + m1 as u128 * k as u128) % modulus as u128) as u64;
        acc = Residue { value, modulus };
    }
    Ok(acc)
}

/// Legendre symbol by Euler's criterion.
pub fn legendre(a: i64, p: u64) -> i8 {
    debug_assert!(p > 2 && is_prime(p));
    let a = reduce(a, p);
    if a == 0 {
        return 0;
    }
    if pow_mod(a, (p - 1) / 2, p) == 1 {
        1
    } else {
        -1
    }
}

pub fn valuation(n: i64, p: u64) -> Result<Valuation> {
    if n == 0 {
        return Err(Error::ZeroInput);
    }
    let p = p as i64;
    let (mut nu, mut unit) = (0u32, n);
    while unit % p == 0 {
        unit /= p;
        nu += 1;
    }
    Ok(Valuation { nu, unit })
}

/// `nu_p(n)`, with `nu_p(0) = NU_INFINITY`.
pub fn nu_p(n: i64, p: u64) -> u32 {
    valuation(n, p).map(|v| v.nu).unwrap_or(NU_INFINITY)
}

/// Tonelli–Shanks square root modulo an odd prime; `None` for non-residues.
pub fn sqrt_mod_prime(a: u64, p: u64) -> Option<u64> {
    let a = a % p;
    if a == 0 {
        return Some(0);
    }
    if pow_mod(a, (p - 1) / 2, p) != 1 {
        return None;
    }
    if p % 4 == 3 {
        return Some(pow_mod(a, (p + 1) / 4, p));
    }
    let (mut q, mut s) = (p - 1, 0u32);
    while q % 2 == 0 {
        q /= 2;
        s += 1;
    }
    let z = (2..p)
        .find(|&z| pow_mod(z, (p - 1) / 2, p) == p - 1)
        .expect("odd prime has a non-residue");
    let mut m = s;
    let mut c = pow_mod(z, q, p);
    let mut t = pow_mod(a, q, p);
    let mut r = pow_mod(a, (q + 1) / 2, p);
    while t != 1 {
        let mut i = 0u32;
        let mut t2 = t;
        while t2 != 1 {
            t2 = mul_mod(t2, t2, p);
            i += 1;
        }
        let b = pow_mod(c, 1u64 << (m - i - 1), p);
        m = i;
        c = mul_mod(b, b, p);
        t = mul_mod(t, c, p);
        r = mul_mod(r, b, p);
    }
    Some(r)
}

/// Both square roots of a unit `beta` modulo `p^gamma`, smaller one first.
///
/// Tonelli–Shanks at level `p`, then Hensel lifting one power at a time.
pub fn sqrt_mod_pp(beta: Residue, pp: PrimePower) -> Result<Option<[u64; 2]>> {
    let (p, q) = (pp.p(), pp.q());
    if p == 2 {
        return Err(Error::EvenPrime);
    }
    debug_assert_eq!(beta.modulus(), q);
    let b = beta.value() % q;
    if b % p == 0 {
        return Err(Error::NonInvertible {
            value: b,
            modulus: p,
        });
    }
    let Some(mut root) = sqrt_mod_prime(b % p, p) else {
        return Ok(None);
    };
    let mut modulus = p;
    for _ in 1..pp.gamma() {
        modulus *= p;
        // root <- root - (root^2 - b) / (2 root)
        let f = sub_mod(mul_mod(root, root, modulus), b % modulus, modulus);
        let inv = inv_mod(mul_mod(2, root, modulus), modulus).expect("2*root is a unit");
        root = sub_mod(root, mul_mod(f, inv, modulus), modulus);
    }
    let other = (q - root) % q;
    Ok(Some(if root <= other {
        [root, other]
    } else {
        [other, root]
    }))
}

/// `binom(-1/2, i)` reduced modulo an odd modulus.
///
/// Uses `binom(-1/2, i) = (-1)^i C(2i, i) / 4^i`, so only powers of two are
/// inverted.
pub fn binom_neg_half(i: u32, modulus: u64) -> u64 {
    assert!(modulus % 2 == 1, "modulus must be odd");
    assert!(i <= 30, "central binomial coefficient would overflow");
    let central = central_binomial(i);
    let inv4 = inv_mod(4 % modulus, modulus).unwrap_or(0);
    let v = mul_mod(central % modulus, pow_mod(inv4, i as u64, modulus), modulus);
    if i % 2 == 1 {
        (modulus - v) % modulus
    } else {
        v
    }
}

fn central_binomial(i: u32) -> u64 {
    let mut c = 1u128;
    for k in 1..=i as u128 {
        c = c * (i as u128 + k) / k;
    }
    c as u64
}

/// Inverse square root of `s p^(gamma-u) a + t` modulo `p^gamma` by the
/// truncated binomial series
///
/// `sum_{i <= I} binom(-1/2, i) t^(-i-1/2) (s p^(gamma-u) a)^i`,
///
/// where `I` is minimal with `(I+1)(gamma-u) >= gamma` and `t^(-1/2)` is the
/// inverse of the smaller square root of `t`.
pub fn inv_sqrt_series(s: i64, t: i64, a: i64, pp: PrimePower, u: u32) -> Result<Residue> {
    let (p, q, gamma) = (pp.p(), pp.q(), pp.gamma());
    if p == 2 {
        return Err(Error::EvenPrime);
    }
    if u >= gamma {
        return Err(Error::HypothesisViolated(format!(
            "series needs u < gamma (u = {u}, gamma = {gamma})"
        )));
    }
    let t_red = reduce(t, q);
    if t_red % p == 0 {
        return Err(Error::NonInvertible {
            value: t_red,
            modulus: p,
        });
    }
    let roots = sqrt_mod_pp(Residue::from_u64(t_red, q), pp)?.ok_or(Error::NonResidue {
        value: t_red % p,
        p,
    })?;
    let inv_root = inv_mod(roots[0], q).expect("root of a unit is a unit");
    let inv_t = inv_mod(t_red, q).expect("unit");
    let step = gamma - u;
    let terms = gamma.div_ceil(step); // I + 1
    let z = mul_mod(mul_mod(reduce(s, q), pp.power(step), q), reduce(a, q), q);
    let ratio = mul_mod(z, inv_t, q); // z / t
    let mut acc = 0u64;
    let mut power = 1u64;
    for i in 0..terms {
        acc = add_mod(acc, mul_mod(binom_neg_half(i, q), power, q), q);
        power = mul_mod(power, ratio, q);
    }
    Ok(Residue::from_u64(mul_mod(acc, inv_root, q), q))
}
