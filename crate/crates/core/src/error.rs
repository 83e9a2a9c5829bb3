use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{value} is not invertible modulo {modulus}")]
    NonInvertible { value: u64, modulus: u64 },
    #[error("moduli {0} and {1} are not coprime")]
    ModuliNotCoprime(u64, u64),
    #[error("valuation of zero is infinite")]
    ZeroInput,
    #[error("the prime 2 is not supported here")]
    EvenPrime,
    #[error("{value} is a quadratic non-residue modulo {p}")]
    NonResidue { value: u64, p: u64 },
    #[error("bad modulus: {0}")]
    BadModulus(String),
    #[error("gcd(n, q) = 1, the hyper-Kloosterman sum does not degenerate")]
    NotDegenerate,
    #[error("gcd(d, q/d) = {0} > 1, no coprime splitting of the modulus")]
    NonCoprimeSplit(u64),
    #[error("Kloosterman argument {value} is neither a unit nor zero modulo {modulus}")]
    NonInvertibleTerm { value: u64, modulus: u64 },
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("singular Moebius transformation modulo {0}")]
    SingularTransform(u64),
    #[error("{0} is not square-free")]
    NotSquareFree(u64),
    #[error("argument must be positive, got {0}")]
    NonPositiveArgument(f64),
    #[error("gcd(a, q) = gcd({a}, {q}) != 1")]
    NonCoprime { a: i64, q: u64 },
    #[error("dual sum cutoff {n_max} too small: {reason}")]
    CutoffTooSmall { n_max: u64, reason: String },
    #[error("identity violated: {0}")]
    IdentityViolation(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
