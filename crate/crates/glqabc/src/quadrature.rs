//! Gauss-Legendre rules and Gauss-Lobatto node sets on `[-1, 1]`.
//!
//! The N-point Gauss-Legendre rule doubles as the reduced integration rule
//! for degree-N elements; the (N+1)-point rule is used as the full rule.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("Newton iteration failed to locate node {index} of the {n}-point rule")]
    Convergence { n: usize, index: usize },
}

/// Nodes and weights of a quadrature rule on `[-1, 1]`.
///
/// Nodes are strictly increasing and symmetric about 0; weights are positive
/// and sum to 2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    exact_degree: usize,
}

impl QuadratureRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Highest polynomial degree integrated exactly.
    pub fn exact_degree(&self) -> usize {
        self.exact_degree
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Legendre `P_n` and derivative `P_n'` at `x` via the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 2..=n {
        let k = k as f64;
        let p_next = ((2.0 * k - 1.0) * x * p - (k - 1.0) * p_prev) / k;
        p_prev = p;
        p = p_next;
    }
    let dp = if (x * x - 1.0).abs() < 1e-300 {
        // endpoint limit: P_n'(±1) = ±^{n+1} n(n+1)/2
        let s = if x > 0.0 { 1.0 } else { (-1.0f64).powi(n as i32 + 1) };
        s * (n * (n + 1)) as f64 / 2.0
    } else {
        (n as f64) * (x * p - p_prev) / (x * x - 1.0)
    };
    (p, dp)
}

/// The n-point Gauss-Legendre rule. Nodes are the roots of `P_n`, located by
/// Newton iteration from Chebyshev initial guesses to a position tolerance
/// of 1e-15, then symmetrised about 0.
pub fn gauss_legendre(n: usize) -> Result<QuadratureRule, QuadratureError> {
    assert!((1..=32).contains(&n), "rule size must be in 1..=32");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut converged = false;
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(QuadratureError::Convergence { n, index: i });
        }
        let (_, dp) = legendre_with_derivative(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    // Symmetrise: mirrored pairs average, the middle node of odd rules is 0.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let m = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -m;
        nodes[j] = m;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        exact_degree: 2 * n - 1,
    })
}

/// Gauss-Lobatto nodes of the given order: `order + 1` points including both
/// endpoints, with the interior ones at the roots of `P_order'`.
pub fn gauss_lobatto_nodes(order: usize) -> Result<Vec<f64>, QuadratureError> {
    assert!(order >= 1, "order must be positive");
    let n = order;
    let mut nodes = Vec::with_capacity(n + 1);
    nodes.push(-1.0);
    for i in 1..n {
        // Chebyshev-Lobatto guesses interlace the extrema of P_n.
        let mut x = -(std::f64::consts::PI * i as f64 / n as f64).cos();
        let mut converged = false;
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            // P_n'' from the Legendre ODE.
            let ddp = (2.0 * x * dp - (n * (n + 1)) as f64 * p) / (1.0 - x * x);
            let dx = dp / ddp;
            x -= dx;
            if dx.abs() < 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(QuadratureError::Convergence { n, index: i });
        }
        nodes.push(x);
    }
    nodes.push(1.0);
    let len = nodes.len();
    for i in 0..len / 2 {
        let j = len - 1 - i;
        let m = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -m;
        nodes[j] = m;
    }
    if len % 2 == 1 {
        nodes[len / 2] = 0.0;
    }
    Ok(nodes)
}

/// Values and derivatives of the cardinal Lagrange polynomials for the given
/// nodes, evaluated at `zeta`.
pub fn lagrange_basis(nodes: &[f64], zeta: f64) -> (Vec<f64>, Vec<f64>) {
    let n = nodes.len();
    let mut values = vec![0.0; n];
    let mut derivs = vec![0.0; n];
    for i in 0..n {
        let mut denom = 1.0;
        for j in 0..n {
            if j != i {
                denom *= nodes[i] - nodes[j];
            }
        }
        let mut v = 1.0;
        for j in 0..n {
            if j != i {
                v *= zeta - nodes[j];
            }
        }
        values[i] = v / denom;
        let mut d = 0.0;
        for k in 0..n {
            if k == i {
                continue;
            }
            let mut prod = 1.0;
            for j in 0..n {
                if j != i && j != k {
                    prod *= zeta - nodes[j];
                }
            }
            d += prod;
        }
        derivs[i] = d / denom;
    }
    (values, derivs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specialfuncs::jacobi_eval;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn small_rules_closed_form() {
        let r1 = gauss_legendre(1).unwrap();
        assert_eq!(r1.nodes(), &[0.0]);
        assert_eq!(r1.weights(), &[2.0]);
        let r2 = gauss_legendre(2).unwrap();
        let inv_sqrt3 = 1.0 / 3.0f64.sqrt();
        assert!((r2.nodes()[0] + inv_sqrt3).abs() < 1e-15);
        assert!((r2.nodes()[1] - inv_sqrt3).abs() < 1e-15);
        assert!((r2.weights()[0] - 1.0).abs() < 1e-15);
        assert!((r2.weights()[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn monomial_integral() {
        // 5-point rule integrates zeta^8 exactly: 2/9.
        let r = gauss_legendre(5).unwrap();
        let v = r.integrate(|x| x.powi(8));
        assert!((v - 2.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn rule_invariants() {
        for n in 1..=32 {
            let r = gauss_legendre(n).unwrap();
            assert_eq!(r.len(), n);
            assert_eq!(r.exact_degree(), 2 * n - 1);
            assert!((r.weights().iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for w in r.weights() {
                assert!(*w > 0.0);
            }
            for i in 1..n {
                assert!(r.nodes()[i] > r.nodes()[i - 1]);
            }
            for i in 0..n {
                assert_eq!(r.nodes()[i], -r.nodes()[n - 1 - i]);
            }
        }
    }

    #[test]
    fn exactness_boundary() {
        // Exact through degree 2n-1, visibly wrong at degree 2n.
        for n in 1..=12 {
            let r = gauss_legendre(n).unwrap();
            for m in 0..=(2 * n - 1) {
                let exact = if m % 2 == 1 { 0.0 } else { 2.0 / (m as f64 + 1.0) };
                let v = r.integrate(|x| x.powi(m as i32));
                assert!((v - exact).abs() < 1e-13, "n={n} m={m}: {v} vs {exact}");
            }
            let m = 2 * n;
            let exact = 2.0 / (m as f64 + 1.0);
            let v = r.integrate(|x| x.powi(m as i32));
            assert!(
                (v - exact).abs() > 1e-13 * exact.abs().max(1.0),
                "n={n} unexpectedly exact at degree {m}"
            );
        }
    }

    #[test]
    fn nodes_are_legendre_roots() {
        for n in 1..=16 {
            let r = gauss_legendre(n).unwrap();
            for &x in r.nodes() {
                assert!(jacobi_eval(n, 0, 0, x).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn reduced_integration_annihilates_legendre() {
        // Under the N-point rule, P_N vanishes at every node, so its product
        // with any polynomial integrates to exactly zero.
        let mut rng = StdRng::seed_from_u64(3);
        for n in 1..=8usize {
            let r = gauss_legendre(n).unwrap();
            for _ in 0..20 {
                let coeffs: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let v = r.integrate(|x| {
                    let poly: f64 = coeffs
                        .iter()
                        .enumerate()
                        .map(|(k, c)| c * x.powi(k as i32))
                        .sum();
                    jacobi_eval(n, 0, 0, x) * poly
                });
                assert!(v.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn lobatto_closed_forms() {
        assert_eq!(gauss_lobatto_nodes(1).unwrap(), vec![-1.0, 1.0]);
        assert_eq!(gauss_lobatto_nodes(2).unwrap(), vec![-1.0, 0.0, 1.0]);
        let n4 = gauss_lobatto_nodes(4).unwrap();
        let a = (3.0f64 / 7.0).sqrt();
        let expect = [-1.0, -a, 0.0, a, 1.0];
        for (x, e) in n4.iter().zip(expect.iter()) {
            assert!((x - e).abs() < 1e-14);
        }
    }

    #[test]
    fn lobatto_are_ordered_and_bracketing() {
        for order in 1..=16 {
            let nodes = gauss_lobatto_nodes(order).unwrap();
            assert_eq!(nodes.len(), order + 1);
            assert_eq!(nodes[0], -1.0);
            assert_eq!(nodes[order], 1.0);
            for i in 1..nodes.len() {
                assert!(nodes[i] > nodes[i - 1]);
            }
        }
    }

    #[test]
    fn lagrange_midpoint_and_cardinality() {
        let (v, _) = lagrange_basis(&[-1.0, 1.0], 0.0);
        assert_eq!(v, vec![0.5, 0.5]);
        let nodes = gauss_lobatto_nodes(4).unwrap();
        for (j, &xj) in nodes.iter().enumerate() {
            let (v, _) = lagrange_basis(&nodes, xj);
            for (i, &vi) in v.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((vi - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lagrange_quadratic_derivatives() {
        // Differentiating the three quadratics for nodes [-1, 0, 1] at zeta=1
        // by hand gives [0.5, -2, 1.5].
        let (_, d) = lagrange_basis(&[-1.0, 0.0, 1.0], 1.0);
        let expect = [0.5, -2.0, 1.5];
        for (a, b) in d.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn partition_of_unity_and_derivative_sum() {
        let mut rng = StdRng::seed_from_u64(11);
        for order in [1usize, 2, 3, 4, 7] {
            let nodes = gauss_lobatto_nodes(order).unwrap();
            for _ in 0..200 {
                let z = rng.gen_range(-1.0..1.0);
                let (v, d) = lagrange_basis(&nodes, z);
                let sv: f64 = v.iter().sum();
                let sd: f64 = d.iter().sum();
                assert!((sv - 1.0).abs() < 1e-12);
                assert!(sd.abs() < 1e-11);
            }
        }
    }
}
