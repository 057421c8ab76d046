//! Quadrature rules shared by the plant, the controller and the analysis code.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds an `order`-point rule by Newton iteration on the Legendre polynomial.
    ///
    /// Panics if `order` is zero.
    pub fn new(order: usize) -> Self {
        assert!(order > 0, "Gauss-Legendre order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess for the i-th root.
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
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrates `f` over `[lo, hi]` with a single panel.
    pub fn integrate<F: Fn(f64) -> f64>(&self, lo: f64, hi: f64, f: F) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Integrates `f` over `[lo, hi]` split into `panels` equal sub-intervals.
    pub fn integrate_composite<F: Fn(f64) -> f64>(
        &self,
        lo: f64,
        hi: f64,
        panels: usize,
        f: F,
    ) -> f64 {
        let panels = panels.max(1);
        let h = (hi - lo) / panels as f64;
        (0..panels)
            .map(|p| {
                let a = lo + p as f64 * h;
                self.integrate(a, a + h, &f)
            })
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Integral of nodal samples on a uniform grid with spacing `dx`.
///
/// Composite Simpson when the number of intervals is even, composite
/// trapezoid otherwise. Exact for constants and linear functions either way.
pub fn grid_integral(values: &[f64], dx: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let intervals = n - 1;
    if intervals % 2 == 0 {
        let mut sum = values[0] + values[n - 1];
        for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
            sum += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        sum * dx / 3.0
    } else {
        let inner: f64 = values[1..n - 1].iter().sum();
        (0.5 * (values[0] + values[n - 1]) + inner) * dx
    }
}

/// Quadrature weights matching [`grid_integral`] for `n` nodes.
pub fn grid_weights(n: usize, dx: f64) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    let intervals = n - 1;
    if intervals % 2 == 0 {
        (0..n)
            .map(|i| {
                let c = if i == 0 || i == n - 1 {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                c * dx / 3.0
            })
            .collect()
    } else {
        (0..n)
            .map(|i| if i == 0 || i == n - 1 { 0.5 * dx } else { dx })
            .collect()
    }
}

/// Mean of `f` over one period `2π/omega` starting at `t0`.
///
/// Uses the rectangle rule on `samples` equispaced points, which is
/// spectrally accurate for smooth periodic integrands.
pub fn period_average<F: Fn(f64) -> f64>(omega: f64, t0: f64, samples: usize, f: F) -> f64 {
    let samples = samples.max(1);
    let period = 2.0 * PI / omega;
    let h = period / samples as f64;
    (0..samples).map(|i| f(t0 + i as f64 * h)).sum::<f64>() / samples as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_weights_sum_to_two() {
        for order in [1, 2, 5, 32, 64] {
            let rule = GaussLegendre::new(order);
            let total: f64 = rule.weights().iter().sum();
            assert!((total - 2.0).abs() < 1e-13, "order {order}: {total}");
        }
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let rule = GaussLegendre::new(8);
        // degree 15 is the highest exactly integrated
        let got = rule.integrate(0.0, 1.0, |x| x.powi(15));
        assert!((got - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn composite_rule_integrates_exponential() {
        let rule = GaussLegendre::new(32);
        let got = rule.integrate_composite(0.0, 3.0, 4, f64::exp);
        assert!((got - (3f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn grid_integral_constant_and_linear() {
        let n = 101;
        let dx = 1.0 / (n - 1) as f64;
        let line: Vec<f64> = (0..n).map(|i| i as f64 * dx).collect();
        assert!((grid_integral(&line, dx) - 0.5).abs() < 1e-12);
        let even = vec![2.5; 26];
        assert!((grid_integral(&even, 1.0 / 25.0) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn grid_weights_match_integral() {
        for n in [2, 3, 26, 51] {
            let dx = 0.1;
            let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
            let w = grid_weights(n, dx);
            let dot: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            assert!((dot - grid_integral(&v, dx)).abs() < 1e-14);
        }
    }

    #[test]
    fn period_average_of_sine_vanishes() {
        let m = period_average(10.0, 0.3, 64, |t| (10.0 * t).sin());
        assert!(m.abs() < 1e-15);
        let sq = period_average(10.0, 0.0, 64, |t| (10.0 * t).sin().powi(2));
        assert!((sq - 0.5).abs() < 1e-15);
    }
}
