//! Gauss–Legendre rules on the unit interval and the unit square.

use std::f64::consts::PI;

/// Tensor-product Gauss rule on the reference square `[0,1]^2` together with
/// the matching one-dimensional rule used on reference edges.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    degree: usize,
    line_points: Vec<f64>,
    line_weights: Vec<f64>,
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Rule exact for tensor-product polynomials of degree `degree` in each
    /// variable.
    pub fn with_degree(degree: usize) -> Self {
        let n = degree / 2 + 1;
        let (line_points, line_weights) = gauss_legendre_unit(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (j, &y) in line_points.iter().enumerate() {
            for (i, &x) in line_points.iter().enumerate() {
                points.push([x, y]);
                weights.push(line_weights[i] * line_weights[j]);
            }
        }
        Self {
            degree,
            line_points,
            line_weights,
            points,
            weights,
        }
    }

    /// Degree-5 rule used for assembly.
    pub fn assembly() -> Self {
        Self::with_degree(5)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    /// Points and weights on `[0,1]`.
    pub fn line(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.line_points
            .iter()
            .copied()
            .zip(self.line_weights.iter().copied())
    }
}

/// `n`-point Gauss–Legendre nodes and weights mapped to `[0,1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_n.
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
    let nodes = nodes.into_iter().map(|x| 0.5 * (x + 1.0)).collect();
    let weights = weights.into_iter().map(|w| 0.5 * w).collect();
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_are_positive_and_sum_to_one() {
        for degree in 0..12 {
            let rule = QuadratureRule::with_degree(degree);
            assert!(rule.weights().iter().all(|&w| w > 0.0));
            let total: f64 = rule.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-14, "degree {degree}: {total}");
            let line: f64 = rule.line().map(|(_, w)| w).sum();
            assert!((line - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_for_tensor_monomials_up_to_degree() {
        for degree in 1..10 {
            let rule = QuadratureRule::with_degree(degree);
            for a in 0..=degree {
                for b in 0..=degree {
                    let approx: f64 = rule
                        .iter()
                        .map(|([x, y], w)| w * x.powi(a as i32) * y.powi(b as i32))
                        .sum();
                    let exact = 1.0 / ((a + 1) * (b + 1)) as f64;
                    assert!((approx - exact).abs() < 1e-14, "deg {degree} x^{a} y^{b}");
                }
            }
        }
    }

    #[test]
    fn one_point_rule_is_midpoint() {
        let (x, w) = gauss_legendre_unit(1);
        assert_eq!(x, vec![0.5]);
        assert_eq!(w, vec![1.0]);
    }
}
