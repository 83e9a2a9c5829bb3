//! Numerical check of the GL(2) Voronoi formula for `d(n)`:
//!
//! ```text
//! sum_n d(n) e(a n / q) h(n) = (1/q) int (log(x / q^2) + 2 gamma) h(x) dx
//!     + (1/q) sum_n d(n) [e(-a' n / q) H^-(n / q^2) + e(a' n / q) H^+(n / q^2)]
//! ```
//!
//! with `a a' = 1 (mod q)`, `H^-(alpha) = -2 pi int h(y) Y_0(4 pi sqrt(alpha y)) dy`
//! and `H^+(alpha) = 4 int h(y) K_0(4 pi sqrt(alpha y)) dy`.
//!
//! The kernels depend on `alpha` and `h` only, so one [`DualKernels`] serves
//! every residue `a` modulo `q`. Integrals are taken in `t = sqrt(y)`, where
//! the Bessel argument `4 pi sqrt(alpha) t` is linear.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::arith::divisor_table;
use crate::bessel::{k0_unchecked, y0_unchecked, EULER_GAMMA};
use crate::error::{Error, Result};
use crate::expsums::{unit_root, CompensatedSum};
use crate::format::sci;
use crate::modarith::{gcd, inv_mod, mul_mod, reduce};
use crate::quad::GaussLegendre;

/// Points per Gauss–Legendre panel.
pub const PANEL_POINTS: usize = 16;
/// Least number of panels across the support.
pub const MIN_PANELS: usize = 32;
/// Kernel periods covered by one panel.
pub const PERIODS_PER_PANEL: f64 = 3.0;
/// Relative tolerance of the identity.
pub const RESIDUAL_TOL: f64 = 1e-6;
/// Tolerance on the estimated dual tail, relative to `max(1, |main|)`.
pub const TAIL_TOL: f64 = 1e-8;
/// Tolerance on the last `K_0` term relative to the dual sum.
pub const K_TERM_TOL: f64 = 1e-8;
/// Largest dual length tried before giving up.
pub const MAX_CUTOFF: u64 = 50_000_000;

/// Beyond this Bessel argument `K_0 < 2e-22` and `H^+` is dropped.
const K0_NEGLIGIBLE: f64 = 50.0;

/// The bump `h(x) = exp(1 - 1/(1 - s^2))`, `s = (2x - 3X)/X`, supported on
/// `[X, 2X]` with `h(3X/2) = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothWeight {
    x: f64,
}

impl SmoothWeight {
    pub fn new(x: f64) -> Result<Self> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::NonPositiveArgument(x));
        }
        Ok(SmoothWeight { x })
    }

    pub fn scale(&self) -> f64 {
        self.x
    }

    pub fn support(&self) -> (f64, f64) {
        (self.x, 2.0 * self.x)
    }

    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        let s = (2.0 * y - 3.0 * self.x) / self.x;
        if s.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - s * s)).exp()
        }
    }
}

/// `H^-(n/q^2)` and `H^+(n/q^2)` for `1 <= n <= n_max`.
#[derive(Debug, Clone)]
pub struct DualKernels {
    q: u64,
    h: SmoothWeight,
    minus: Vec<f64>,
    plus: Vec<f64>,
    divisors: Vec<u32>,
}

/// Bessel arguments from which `Y_0` is taken from the Hankel expansion
/// truncated after `z^9`, `z = 1/(8x)`; the first omitted term is below `3e-15`.
const HANKEL_FIXED_MIN: f64 = 60.0;
const HANKEL_TERMS: usize = 10;

/// Coefficients of `z^m` in `P_0` (even `m`) and `Q_0` (odd `m`).
fn hankel_coefficients() -> [f64; HANKEL_TERMS] {
    let mut c = [0.0; HANKEL_TERMS];
    let mut t = 1.0f64;
    c[0] = 1.0;
    for m in 1..HANKEL_TERMS {
        let odd = (2 * m - 1) as f64;
        t *= -odd * odd / m as f64;
        let sign = if (m / 2) % 2 == 0 { 1.0 } else { -1.0 };
        c[m] = sign * t;
    }
    c
}

/// Quadrature data in `t = sqrt(y)` for a fixed panel count: `1/t`, the node
/// offsets `t - mid` shared by all panels, and `w dt * 2t h(t^2) / sqrt(t)`.
#[derive(Debug, Clone)]
struct PanelNodes {
    t0: f64,
    width: f64,
    inv_t: Vec<f64>,
    offset: Vec<f64>,
    g: Vec<f64>,
}

impl PanelNodes {
    fn new(h: &SmoothWeight, gl: &GaussLegendre, panels: usize) -> Self {
        let (t0, t1) = (h.scale().sqrt(), (2.0 * h.scale()).sqrt());
        let width = (t1 - t0) / panels as f64;
        let half = 0.5 * width;
        let n = panels * gl.len();
        let (mut inv_t, mut offset, mut g) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        for k in 0..panels {
            let mid = t0 + (k as f64 + 0.5) * width;
            for (x, w) in gl.nodes().iter().zip(gl.weights()) {
                let t = mid + half * x;
                inv_t.push(1.0 / t);
                if k == 0 {
                    offset.push(half * x);
                }
                g.push(w * half * 2.0 * t.sqrt() * h.eval(t * t));
            }
        }
        PanelNodes {
            t0,
            width,
            inv_t,
            offset,
            g,
        }
    }

    /// `int 2t h(t^2) Y_0(c t) dt` for `c t0 >= HANKEL_FIXED_MIN`.
    fn y0_integral(&self, c: f64, points: usize, coef: &[f64; HANKEL_TERMS]) -> f64 {
        let inv8c = 1.0 / (8.0 * c);
        let rot: Vec<(f64, f64)> = self.offset.iter().map(|o| (c * o).sin_cos()).collect();
        let mut total = 0.0;
        for (k, chunk) in self.g.chunks_exact(points).enumerate() {
            let base = k * points;
            let mid = self.t0 + (k as f64 + 0.5) * self.width;
            let (ms, mc) = (c * mid - std::f64::consts::FRAC_PI_4).sin_cos();
            let mut panel = 0.0;
            for (j, g) in chunk.iter().enumerate() {
                let z = inv8c * self.inv_t[base + j];
                let z2 = z * z;
                let mut p = coef[8];
                let mut q = coef[9];
                for m in (0..4).rev() {
                    p = p * z2 + coef[2 * m];
                    q = q * z2 + coef[2 * m + 1];
                }
                let q = q * z;
                let (os, oc) = rot[j];
                let (s, co) = (ms * oc + mc * os, mc * oc - ms * os);
                panel += g * (p * s + q * co);
            }
            total += panel;
        }
        (2.0 / (PI * c)).sqrt() * total
    }
}

fn panel_count(alpha: f64, h: &SmoothWeight) -> usize {
    let (t0, t1) = (h.scale().sqrt(), (2.0 * h.scale()).sqrt());
    let period = 2.0 * PI / (4.0 * PI * alpha.sqrt());
    MIN_PANELS.max(((t1 - t0) / (PERIODS_PER_PANEL * period)).ceil() as usize)
}

/// `(H^-(alpha), H^+(alpha))` by direct Bessel evaluation at every node.
fn kernel_pair(alpha: f64, h: &SmoothWeight, gl: &GaussLegendre) -> (f64, f64) {
    let (t0, t1) = (h.scale().sqrt(), (2.0 * h.scale()).sqrt());
    let c = 4.0 * PI * alpha.sqrt();
    let panels = panel_count(alpha, h);
    let weight = |t: f64| 2.0 * t * h.eval(t * t);
    let minus = -2.0 * PI * gl.integrate(t0, t1, panels, |t| weight(t) * y0_unchecked(c * t));
    let plus = if c * t0 > K0_NEGLIGIBLE {
        0.0
    } else {
        4.0 * gl.integrate(t0, t1, panels, |t| weight(t) * k0_unchecked(c * t))
    };
    (minus, plus)
}

impl DualKernels {
    /// Kernels up to a fixed cutoff.
    pub fn new(q: u64, h: SmoothWeight, n_max: u64) -> Result<Self> {
        if q == 0 {
            return Err(Error::BadModulus("q must be positive".into()));
        }
        let mut k = DualKernels {
            q,
            h,
            minus: Vec::new(),
            plus: Vec::new(),
            divisors: Vec::new(),
        };
        k.extend_to(n_max)?;
        Ok(k)
    }

    /// Kernels with the cutoff grown geometrically until the estimated tail
    /// of the dual sum for every residue in `residues` drops below `tail_tol`.
    pub fn adaptive(q: u64, h: SmoothWeight, residues: &[i64], tail_tol: f64) -> Result<Self> {
        let q2 = (q * q) as f64;
        let mut alpha = (200.0 / h.scale()).max(2.0);
        let mut k = DualKernels::new(q, h, (alpha * q2).ceil() as u64)?;
        loop {
            alpha *= 1.25;
            let n = (alpha * q2).ceil() as u64;
            if n > MAX_CUTOFF {
                return Err(Error::CutoffTooSmall {
                    n_max: k.n_max(),
                    reason: format!(
                        "tail estimate {:.3e} above {tail_tol:.3e} at the cutoff cap",
                        k.tail_estimate(residues)
                    ),
                });
            }
            k.extend_to(n)?;
            if k.tail_estimate(residues) <= tail_tol {
                return Ok(k);
            }
        }
    }

    fn extend_to(&mut self, n_max: u64) -> Result<()> {
        let have = self.minus.len() as u64;
        if n_max <= have {
            return Ok(());
        }
        if n_max > MAX_CUTOFF {
            return Err(Error::InvalidInput(format!(
                "cutoff {n_max} exceeds {MAX_CUTOFF}"
            )));
        }
        let gl = GaussLegendre::new(PANEL_POINTS);
        let q2 = (self.q * self.q) as f64;
        let h = self.h;
        let t0 = h.scale().sqrt();
        let coef = hankel_coefficients();
        // the same panel layout as the direct route, with the weight cached
        let top = panel_count(n_max as f64 / q2, &h);
        let mut layouts: Vec<Option<PanelNodes>> = vec![None; top + 1];
        for n in (have + 1)..=n_max {
            let alpha = n as f64 / q2;
            if 4.0 * PI * alpha.sqrt() * t0 >= HANKEL_FIXED_MIN {
                let p = panel_count(alpha, &h);
                if layouts[p].is_none() {
                    layouts[p] = Some(PanelNodes::new(&h, &gl, p));
                }
            }
        }
        let fresh: Vec<(f64, f64)> = ((have + 1)..=n_max)
            .into_par_iter()
            .map(|n| {
                let alpha = n as f64 / q2;
                let c = 4.0 * PI * alpha.sqrt();
                // past both thresholds H^+ vanishes and Y_0 has a fixed-length expansion
                if c * t0 >= HANKEL_FIXED_MIN.max(K0_NEGLIGIBLE) {
                    let nodes = layouts[panel_count(alpha, &h)]
                        .as_ref()
                        .expect("layout built above");
                    (-2.0 * PI * nodes.y0_integral(c, gl.len(), &coef), 0.0)
                } else {
                    kernel_pair(alpha, &h, &gl)
                }
            })
            .collect();
        for (m, p) in fresh {
            self.minus.push(m);
            self.plus.push(p);
        }
        self.divisors = divisor_table(2, n_max as usize).values().to_vec();
        Ok(())
    }

    pub fn n_max(&self) -> u64 {
        self.minus.len() as u64
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    pub fn weight(&self) -> SmoothWeight {
        self.h
    }

    /// `H^-(n/q^2)`.
    pub fn minus(&self, n: u64) -> f64 {
        self.minus[(n - 1) as usize]
    }

    /// `H^+(n/q^2)`.
    pub fn plus(&self, n: u64) -> f64 {
        self.plus[(n - 1) as usize]
    }

    /// `(1/q) sum_{lo < n <= hi} d(n) (|H^-| + |H^+|)`.
    fn window_abs(&self, lo: u64, hi: u64) -> f64 {
        ((lo + 1)..=hi)
            .map(|n| self.divisors[n as usize] as f64 * (self.minus(n).abs() + self.plus(n).abs()))
            .sum::<f64>()
            / self.q as f64
    }

    /// `|(1/q) sum_{lo < n <= hi} d(n) [e(-a'n/q) H^- + e(a'n/q) H^+]|`.
    fn window_signed(&self, abar: u64, lo: u64, hi: u64) -> f64 {
        let q = self.q;
        let sum: Complex64 = ((lo + 1)..=hi)
            .map(|n| {
                let e = unit_root(mul_mod(abar, n % q, q), q);
                (e.conj() * self.minus(n) + e * self.plus(n)) * self.divisors[n as usize] as f64
            })
            .sum();
        sum.norm() / q as f64
    }

    /// Tail of the dual sum beyond `N = n_max`, maximised over `residues`.
    ///
    /// The windows `(N/1.5625, N/1.25]` and `(N/1.25, N]` give a decay ratio
    /// `r` of the summed absolute terms; the larger of the two signed window
    /// sums, carried to the last window, is extrapolated geometrically with
    /// that ratio.
    pub fn tail_estimate(&self, residues: &[i64]) -> f64 {
        let n = self.n_max();
        let (a, b) = ((n as f64 / 1.5625) as u64, (n as f64 / 1.25) as u64);
        if a == 0 || b <= a || n <= b {
            return f64::INFINITY;
        }
        let (w1, w2) = (self.window_abs(a, b), self.window_abs(b, n));
        if w2 == 0.0 {
            return 0.0;
        }
        let r = w2 / w1;
        if r >= 1.0 {
            return f64::INFINITY;
        }
        let q = self.q;
        residues
            .iter()
            .map(|&res| {
                let abar = if q == 1 {
                    0
                } else {
                    inv_mod(reduce(res, q), q).unwrap_or(0)
                };
                let s1 = self.window_signed(abar, a, b);
                let s2 = self.window_signed(abar, b, n);
                s2.max(s1 * r) * r / (1.0 - r)
            })
            .fold(0.0, f64::max)
    }

    /// `(1/q) d(N) |H^+(N/q^2)|` at the cutoff.
    pub fn last_k_term(&self) -> f64 {
        let n = self.n_max();
        if n == 0 {
            return 0.0;
        }
        self.divisors[n as usize] as f64 * self.plus(n).abs() / self.q as f64
    }
}

/// `sum_n d(n) e(a n / q) h(n)`.
pub fn voronoi_lhs(a: i64, q: u64, h: &SmoothWeight) -> Result<Complex64> {
    if q == 0 {
        return Err(Error::BadModulus("q must be positive".into()));
    }
    if gcd(reduce(a, q), q) != 1 {
        return Err(Error::NonCoprime { a, q });
    }
    let (lo, hi) = h.support();
    let hi = hi.floor() as usize;
    let d = divisor_table(2, hi);
    let ar = reduce(a, q);
    Ok(((lo.ceil() as usize).max(1)..=hi)
        .map(|n| unit_root(mul_mod(ar, n as u64 % q, q), q) * (d.get(n) as f64 * h.eval(n as f64)))
        .collect::<CompensatedSum>()
        .sum())
}

fn weighted_integral(h: &SmoothWeight, f: impl Fn(f64) -> f64) -> f64 {
    let (lo, hi) = h.support();
    GaussLegendre::new(PANEL_POINTS)
        .integrate_adaptive(lo, hi, MIN_PANELS, 1e-13, 8, |x| f(x) * h.eval(x))
}

/// `(1/q) int (log(x/q^2) + 2 gamma) h(x) dx`.
pub fn voronoi_main(q: u64, h: &SmoothWeight) -> f64 {
    let q2 = (q * q) as f64;
    weighted_integral(h, |x| (x / q2).ln() + 2.0 * EULER_GAMMA) / q as f64
}

/// `(1/q) int (log(sqrt(x)/q) + gamma) h(x) dx`, the main term with the
/// normalization as printed, kept for comparison.
pub fn voronoi_main_printed(q: u64, h: &SmoothWeight) -> f64 {
    let qf = q as f64;
    weighted_integral(h, |x| (x.sqrt() / qf).ln() + EULER_GAMMA) / qf
}

/// Dual sum from precomputed kernels.
pub fn voronoi_dual(a: i64, kernels: &DualKernels) -> Result<Complex64> {
    let q = kernels.modulus();
    let ar = reduce(a, q);
    if gcd(ar, q) != 1 {
        return Err(Error::NonCoprime { a, q });
    }
    let abar = if q == 1 {
        0
    } else {
        inv_mod(ar, q).expect("unit")
    };
    let sum = (1..=kernels.n_max())
        .map(|n| {
            let phase = mul_mod(abar, n % q, q);
            let plus = unit_root(phase, q);
            let d = kernels.divisors[n as usize] as f64;
            (plus.conj() * kernels.minus(n) + plus * kernels.plus(n)) * d
        })
        .collect::<CompensatedSum>()
        .sum();
    Ok(sum / q as f64)
}

/// `(rhs_main, rhs_dual)` with the dual sum cut at `n_max`.
///
/// Fails with `CutoffTooSmall` when the last `K_0` term is above
/// `K_TERM_TOL |rhs_dual|` or the estimated `Y_0` tail is above
/// `TAIL_TOL max(1, |rhs_main|)`.
pub fn voronoi_rhs(a: i64, q: u64, h: &SmoothWeight, n_max: u64) -> Result<(Complex64, Complex64)> {
    if q == 0 {
        return Err(Error::BadModulus("q must be positive".into()));
    }
    if gcd(reduce(a, q), q) != 1 {
        return Err(Error::NonCoprime { a, q });
    }
    let kernels = DualKernels::new(q, *h, n_max)?;
    let main = voronoi_main(q, h);
    let dual = voronoi_dual(a, &kernels)?;
    check_cutoff(a, &kernels, main, dual)?;
    Ok((Complex64::new(main, 0.0), dual))
}

fn check_cutoff(a: i64, kernels: &DualKernels, main: f64, dual: Complex64) -> Result<()> {
    let k_term = kernels.last_k_term();
    if k_term > K_TERM_TOL * dual.norm() {
        return Err(Error::CutoffTooSmall {
            n_max: kernels.n_max(),
            reason: format!("last K0 term {k_term:.3e} above {K_TERM_TOL:e} |dual|"),
        });
    }
    let tail = kernels.tail_estimate(&[a]);
    let tol = TAIL_TOL * main.abs().max(1.0);
    if tail > tol {
        return Err(Error::CutoffTooSmall {
            n_max: kernels.n_max(),
            reason: format!("Y0 tail estimate {tail:.3e} above {tol:.3e}"),
        });
    }
    Ok(())
}

/// Both sides of the identity for one residue.
#[derive(Debug, Clone, PartialEq)]
pub struct VoronoiReport {
    pub a: i64,
    pub q: u64,
    pub x: f64,
    pub lhs: Complex64,
    pub rhs_main: Complex64,
    pub rhs_dual: Complex64,
    pub n_max: u64,
    /// `|lhs - rhs_main - rhs_dual|`.
    pub residual: f64,
    /// Main term with the printed normalization.
    pub printed_main: f64,
    /// Residual with the printed main term in place of `rhs_main`.
    pub printed_residual: f64,
    pub tail_estimate: f64,
}

impl VoronoiReport {
    pub fn relative_residual(&self) -> f64 {
        self.residual / self.lhs.norm()
    }

    pub fn passes(&self) -> bool {
        self.residual <= RESIDUAL_TOL * self.lhs.norm()
    }

    /// The identity holds with the corrected main term but not with the
    /// printed one.
    pub fn printed_normalization_flagged(&self) -> bool {
        self.passes() && self.printed_residual > RESIDUAL_TOL * self.lhs.norm()
    }
}

fn report(a: i64, kernels: &DualKernels, main: f64, printed: f64) -> Result<VoronoiReport> {
    let h = kernels.weight();
    let q = kernels.modulus();
    let lhs = voronoi_lhs(a, q, &h)?;
    let dual = voronoi_dual(a, kernels)?;
    let rhs_main = Complex64::new(main, 0.0);
    Ok(VoronoiReport {
        a,
        q,
        x: h.scale(),
        lhs,
        rhs_main,
        rhs_dual: dual,
        n_max: kernels.n_max(),
        residual: (lhs - rhs_main - dual).norm(),
        printed_main: printed,
        printed_residual: (lhs - printed - dual).norm(),
        tail_estimate: kernels.tail_estimate(&[a]),
    })
}

/// The identity for one residue; `n_max = None` picks the cutoff adaptively.
pub fn voronoi_residual(
    a: i64,
    q: u64,
    h: &SmoothWeight,
    n_max: Option<u64>,
) -> Result<VoronoiReport> {
    if q == 0 {
        return Err(Error::BadModulus("q must be positive".into()));
    }
    if gcd(reduce(a, q), q) != 1 {
        return Err(Error::NonCoprime { a, q });
    }
    let main = voronoi_main(q, h);
    let kernels = match n_max {
        Some(n) => DualKernels::new(q, *h, n)?,
        None => DualKernels::adaptive(q, *h, &[a], TAIL_TOL * main.abs().max(1.0))?,
    };
    let r = report(a, &kernels, main, voronoi_main_printed(q, h))?;
    if n_max.is_some() {
        check_cutoff(a, &kernels, main, r.rhs_dual)?;
    }
    Ok(r)
}

/// The identity for every residue `a` coprime to `q`, sharing one kernel set.
pub fn voronoi_scan(q: u64, h: &SmoothWeight) -> Result<Vec<VoronoiReport>> {
    let main = voronoi_main(q, h);
    let printed = voronoi_main_printed(q, h);
    let residues: Vec<i64> = (0..q.max(1))
        .filter(|&a| gcd(a, q) == 1)
        .map(|a| a as i64)
        .collect();
    let kernels = DualKernels::adaptive(q, *h, &residues, TAIL_TOL * main.abs().max(1.0))?;
    residues
        .iter()
        .map(|&a| report(a, &kernels, main, printed))
        .collect()
}

pub const CSV_HEADER: &str = "X,q,a,lhs_re,lhs_im,main,dual_re,dual_im,n_max,residual,relative_residual,printed_main,printed_residual,tail_estimate,passes";

pub fn to_csv(reports: &[VoronoiReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            sci(r.x),
            r.q,
            r.a,
            sci(r.lhs.re),
            sci(r.lhs.im),
            sci(r.rhs_main.re),
            sci(r.rhs_dual.re),
            sci(r.rhs_dual.im),
            r.n_max,
            sci(r.residual),
            sci(r.relative_residual()),
            sci(r.printed_main),
            sci(r.printed_residual),
            sci(r.tail_estimate),
            r.passes()
        ));
    }
    out
}
