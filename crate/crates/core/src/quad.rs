//! Composite Gauss–Legendre quadrature.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on `P_n` from the Tricomi initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `int_a^b f` over `panels` equal panels.
    pub fn integrate(&self, a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
        let panels = panels.max(1);
        let width = (b - a) / panels as f64;
        let half = 0.5 * width;
        let mut total = 0.0;
        for k in 0..panels {
            let mid = a + (k as f64 + 0.5) * width;
            let mut panel = 0.0;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                panel += w * f(mid + half * x);
            }
            total += half * panel;
        }
        total
    }

    /// Panel doubling from `start` panels until two successive results agree
    /// to `rel_tol`; gives up after `max_doublings`.
    pub fn integrate_adaptive(
        &self,
        a: f64,
        b: f64,
        start: usize,
        rel_tol: f64,
        max_doublings: u32,
        mut f: impl FnMut(f64) -> f64,
    ) -> f64 {
        let mut panels = start.max(1);
        let mut prev = self.integrate(a, b, panels, &mut f);
        for _ in 0..max_doublings {
            panels *= 2;
            let next = self.integrate(a, b, panels, &mut f);
            if (next - prev).abs() <= rel_tol * next.abs().max(f64::MIN_POSITIVE) {
                return next;
            }
            prev = next;
        }
        prev
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn weights_sum_to_two_and_nodes_are_symmetric() {
        for n in [1usize, 2, 5, 16, 64] {
            let gl = GaussLegendre::new(n);
            assert_abs_diff_eq!(gl.weights().iter().sum::<f64>(), 2.0, epsilon = 1e-13);
            for i in 0..n {
                assert_abs_diff_eq!(gl.nodes()[i], -gl.nodes()[n - 1 - i], epsilon = 1e-15);
            }
        }
        let gl = GaussLegendre::new(2);
        assert_abs_diff_eq!(gl.nodes()[1], 1.0 / 3f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let gl = GaussLegendre::new(8);
        for k in 0..16i32 {
            let exact = (2f64.powi(k + 1) - (-1f64).powi(k + 1)) / (k + 1) as f64;
            let approx = gl.integrate(-1.0, 2.0, 1, |x| x.powi(k));
            assert!(
                (approx - exact).abs() <= 1e-12 * exact.abs().max(1.0),
                "k={k}"
            );
        }
    }

    #[test]
    fn oscillatory_integral() {
        let gl = GaussLegendre::new(16);
        let v = gl.integrate(0.0, 10.0, 20, |x| (7.0 * x).cos());
        assert_abs_diff_eq!(v, (70.0f64).sin() / 7.0, epsilon = 1e-13);
        let v = gl.integrate_adaptive(0.0, 1.0, 1, 1e-14, 10, |x| x.exp());
        assert_abs_diff_eq!(v, 1f64.exp() - 1.0, epsilon = 1e-14);
    }
}
