//! Orthogonal-polynomial and hypergeometric kernels.
//!
//! Everything here is driven by the terminating confluent hypergeometric
//! series `1F1(-N;-2N;z)`, a degree-N polynomial. Its ratio at `-z` and `+z`
//! is the `[N/N]` Pade approximant of `exp(-z)`, whose zeros control where
//! the discrete absorbing layers annihilate outgoing waves.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpecialFuncError {
    /// The denominator polynomial of the Pade approximant vanishes.
    #[error("Pade pole at z = {0}")]
    Pole(Complex64),
    /// Root finding failed the residual acceptance check.
    #[error("root finder failed residual check for N = {n}: |residual| = {residual:e}")]
    Convergence { n: usize, residual: f64 },
}

/// Dense polynomial with complex coefficients in ascending degree order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexPoly {
    coeffs: Vec<Complex64>,
}

impl ComplexPoly {
    /// Builds a polynomial, trimming trailing (near-)zero leading coefficients
    /// so that the leading coefficient is nonzero unless this is the zero
    /// polynomial.
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs.len() > 1 && coeffs.last().map_or(false, |c| c.norm() == 0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(Complex64::new(0.0, 0.0));
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Horner evaluation.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }

    pub fn derivative(&self) -> ComplexPoly {
        if self.coeffs.len() == 1 {
            return ComplexPoly::new(vec![Complex64::new(0.0, 0.0)]);
        }
        let d = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| c * k as f64)
            .collect();
        ComplexPoly::new(d)
    }
}

/// Evaluates the Jacobi polynomial `P_n^{(p,q)}` at `zeta` by the standard
/// three-term recurrence. Exact for `n = 0, 1` by construction.
pub fn jacobi_eval(n: usize, p: usize, q: usize, zeta: f64) -> f64 {
    let (p, q) = (p as f64, q as f64);
    if n == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = 0.5 * (p - q) + 0.5 * (p + q + 2.0) * zeta;
    for k in 2..=n {
        let k = k as f64;
        let c = 2.0 * k + p + q;
        let a1 = 2.0 * k * (k + p + q) * (c - 2.0);
        let a2 = (c - 1.0) * (p * p - q * q);
        let a3 = (c - 2.0) * (c - 1.0) * c;
        let a4 = 2.0 * (k + p - 1.0) * (k + q - 1.0) * c;
        let next = ((a2 + a3 * zeta) * cur - a4 * prev) / a1;
        prev = cur;
        cur = next;
    }
    cur
}

/// Term ratio of the series `1F1(-N;-2N;z)`: consecutive terms satisfy
/// `t_{n+1} = t_n * z * (N-n) / ((2N-n)(n+1))`, which keeps the accumulation
/// well scaled for N up to 16.
#[inline]
fn term_step(n_deg: usize, n: usize, t: Complex64, z: Complex64) -> Complex64 {
    t * z * ((n_deg - n) as f64 / (((2 * n_deg - n) * (n + 1)) as f64))
}

/// The terminating series `1F1(-N;-2N;z)` summed exactly over its N+1 terms.
pub fn hyp1f1_trunc(n_deg: usize, z: Complex64) -> Complex64 {
    assert!(n_deg >= 1, "degree must be positive");
    let mut sum = Complex64::new(0.0, 0.0);
    let mut t = Complex64::new(1.0, 0.0);
    for n in 0..=n_deg {
        sum += t;
        if n < n_deg {
            t = term_step(n_deg, n, t, z);
        }
    }
    sum
}

/// Even-index part of the `1F1(-N;-2N;alpha)` series:
/// `sum over even n of (alpha^n/n!) (N!/(N-n)!)/((2N)!/(2N-n)!)`.
pub fn s_even(n_deg: usize, alpha: Complex64) -> Complex64 {
    s_parity(n_deg, alpha, 0)
}

/// Odd-index part of the same series.
pub fn s_odd(n_deg: usize, alpha: Complex64) -> Complex64 {
    s_parity(n_deg, alpha, 1)
}

fn s_parity(n_deg: usize, alpha: Complex64, parity: usize) -> Complex64 {
    assert!(n_deg >= 1, "degree must be positive");
    let mut sum = Complex64::new(0.0, 0.0);
    let mut t = Complex64::new(1.0, 0.0);
    for n in 0..=n_deg {
        if n % 2 == parity {
            sum += t;
        }
        if n < n_deg {
            t = term_step(n_deg, n, t, alpha);
        }
    }
    sum
}

/// The `[N/N]` Pade approximant of `exp(-z)`:
/// `1F1(-N;-2N;-z) / 1F1(-N;-2N;+z)`.
pub fn pade_exp_neg(n_deg: usize, z: Complex64) -> Result<Complex64, SpecialFuncError> {
    let den = hyp1f1_trunc(n_deg, z);
    if den.norm() < 1e-300 {
        return Err(SpecialFuncError::Pole(z));
    }
    Ok(hyp1f1_trunc(n_deg, -z) / den)
}

/// Coefficients (ascending) of `1F1(-N;-2N;-z)` as a polynomial in `z`,
/// the numerator of `[N/N]_{exp(-z)}`.
pub fn pade_numerator_poly(n_deg: usize) -> ComplexPoly {
    let mut coeffs = Vec::with_capacity(n_deg + 1);
    let mut t = Complex64::new(1.0, 0.0);
    for n in 0..=n_deg {
        coeffs.push(t);
        if n < n_deg {
            t = term_step(n_deg, n, t, Complex64::new(-1.0, 0.0));
        }
    }
    ComplexPoly::new(coeffs)
}

/// Zeros of `[N/N]_{exp(-z)}`, i.e. the N roots of `1F1(-N;-2N;-z)`,
/// sorted by (real part, imaginary part).
///
/// Roots come from the companion matrix of the monic normalised polynomial,
/// polished with two Newton steps; a residual gate rejects inaccurate roots.
/// All roots lie in the open right half plane and non-real ones come in
/// conjugate pairs.
pub fn pade_zeros(n_deg: usize) -> Result<Vec<Complex64>, SpecialFuncError> {
    assert!(
        (1..=16).contains(&n_deg),
        "degree must be in 1..=16 for well-conditioned root finding"
    );
    let poly = pade_numerator_poly(n_deg);
    let dpoly = poly.derivative();
    let lead = poly.coeffs()[n_deg];

    // Companion matrix of the monic polynomial. Coefficients are real, so a
    // real Schur decomposition supplies the eigenvalues.
    let monic: Vec<f64> = poly.coeffs()[..n_deg].iter().map(|c| (c / lead).re).collect();
    let companion = nalgebra::DMatrix::<f64>::from_fn(n_deg, n_deg, |i, j| {
        if j == n_deg - 1 {
            -monic[i]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let mut roots: Vec<Complex64> = companion
        .complex_eigenvalues()
        .iter()
        .map(|e| Complex64::new(e.re, e.im))
        .collect();

    // Two Newton polish steps on the original polynomial.
    for z in roots.iter_mut() {
        for _ in 0..2 {
            let d = dpoly.eval(*z);
            if d.norm() > 0.0 {
                *z -= poly.eval(*z) / d;
            }
        }
    }

    // Residual acceptance relative to the polynomial scale at the root.
    for &z in &roots {
        let scale: f64 = poly
            .coeffs()
            .iter()
            .enumerate()
            .map(|(k, c)| c.norm() * z.norm().powi(k as i32))
            .sum();
        let residual = poly.eval(z).norm();
        if residual >= 1e-10 * scale.max(1.0) || z.re <= 0.0 {
            return Err(SpecialFuncError::Convergence { n: n_deg, residual });
        }
    }

    // Force exact conjugate symmetry before sorting: collapse tiny imaginary
    // parts, then average each root with its mirror partner.
    let tol = 1e-8;
    for z in roots.iter_mut() {
        if z.im.abs() < tol {
            z.im = 0.0;
        }
    }
    let snapshot = roots.clone();
    for z in roots.iter_mut() {
        if z.im != 0.0 {
            if let Some(m) = snapshot
                .iter()
                .find(|m| (m.re - z.re).abs() < tol && (m.im + z.im).abs() < tol)
            {
                let re = 0.5 * (z.re + m.re);
                let im = 0.5 * (z.im - m.im);
                z.re = re;
                z.im = im.copysign(z.im);
            }
        }
    }
    roots.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    Ok(roots)
}
