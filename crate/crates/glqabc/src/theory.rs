//! Closed-form reflection and impedance theory for layered absorbing
//! boundary conditions.
//!
//! The continuous PML, the layerwise-constant PML and the discrete ABC of
//! type (L,N) all share the same algebraic skeleton: a per-layer attenuation
//! factor (an exponential, or its `[N/N]` Pade approximant), a diagonal 2x2
//! transfer recursion for the incoming/outgoing amplitude pair, and a
//! termination row. The functions here evaluate those closed forms; the
//! `fem1d` module measures the same quantities from actual discrete solves.

use num_complex::Complex64;
use thiserror::Error;

use crate::quadrature::gauss_legendre;
use crate::specialfuncs::{hyp1f1_trunc, pade_exp_neg, SpecialFuncError};

#[derive(Debug, Error)]
pub enum TheoryError {
    /// `s = +/- i k` sits on the branch cut endpoints of `sqrt(s^2 + k^2)`.
    #[error("branch point: s = {s} with k = {k}")]
    BranchPoint { s: Complex64, k: f64 },
    /// `|1 - P|` fell below the meaningful double-precision threshold.
    #[error("degenerate impedance: |1 - P| = {0:e} < 1e-14")]
    Degenerate(f64),
    #[error(transparent)]
    SpecialFunc(#[from] SpecialFuncError),
}

/// Branch-resolved square root `gamma = sqrt(s^2 + k^2)`.
///
/// The branch is fixed by `gamma = +k` at `s = 0`; for purely imaginary `s`
/// the value is the limit along `s = i w + eps`, `eps -> 0+`. On the open
/// right half plane this coincides with the principal square root, which is
/// analytic there.
pub fn gamma_branch(s: Complex64, k: f64) -> Result<Complex64, TheoryError> {
    assert!(s.re >= 0.0, "gamma_branch requires Re s >= 0");
    assert!(k >= 0.0, "transverse wavenumber magnitude must be nonnegative");
    if s.re > 0.0 {
        return Ok((s * s + k * k).sqrt());
    }
    let w = s.im;
    if (w.abs() - k).abs() == 0.0 {
        return Err(TheoryError::BranchPoint { s, k });
    }
    if w.abs() < k {
        Ok(Complex64::new((k * k - w * w).sqrt(), 0.0))
    } else {
        Ok(Complex64::new(0.0, w.signum() * (w * w - k * k).sqrt()))
    }
}

/// The Laplace parameter `s`, the transverse wavenumber magnitude `k` and
/// the branch-resolved `gamma = sqrt(s^2 + k^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frequency {
    pub s: Complex64,
    pub k: f64,
    pub gamma: Complex64,
}

impl Frequency {
    pub fn new(s: Complex64, k: f64) -> Result<Self, TheoryError> {
        Ok(Self {
            s,
            k,
            gamma: gamma_branch(s, k)?,
        })
    }

    /// Treats a given `gamma` directly as the frequency content, as in the
    /// one-dimensional sweeps where `gamma` is the loop variable.
    pub fn from_gamma(gamma: Complex64) -> Self {
        Self {
            s: gamma,
            k: 0.0,
            gamma,
        }
    }
}

/// Geometry and stretch parameters of an L-layer artificial region behind a
/// reference physical cell of width `h0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    /// Element degree N.
    pub degree: usize,
    /// Width of the reference physical cell (layer 0, stretch 1).
    pub h0: f64,
    /// Widths `h_l` of the L artificial layers.
    pub widths: Vec<f64>,
    /// Stretches `gamma_l` of the L artificial layers.
    pub stretches: Vec<Complex64>,
}

impl LayerSpec {
    pub fn new(degree: usize, h0: f64, widths: Vec<f64>, stretches: Vec<Complex64>) -> Self {
        assert!(degree >= 1);
        assert!(h0 > 0.0);
        assert_eq!(widths.len(), stretches.len());
        assert!(!widths.is_empty(), "at least one layer");
        assert!(widths.iter().all(|h| *h > 0.0));
        Self {
            degree,
            h0,
            widths,
            stretches,
        }
    }

    /// Uniform unit-width layers, the geometry of the 1D experiments.
    pub fn uniform(degree: usize, stretches: Vec<Complex64>) -> Self {
        let widths = vec![1.0; stretches.len()];
        Self::new(degree, 1.0, widths, stretches)
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len()
    }
}

/// Layer parameter `alpha_l = gamma h_l / gamma_l`, with `gamma_0 = 1` and
/// width `h0` for `l = 0`.
pub fn alpha(freq: &Frequency, l: usize, spec: &LayerSpec) -> Complex64 {
    assert!(l <= spec.layer_count());
    if l == 0 {
        freq.gamma * spec.h0
    } else {
        freq.gamma * spec.widths[l - 1] / spec.stretches[l - 1]
    }
}

/// Reflection coefficient of a continuous PML truncated at `x_L`:
/// `-(exp(-gamma chi(x_L)))^2`.
pub fn reflection_continuous_pml(gamma: Complex64, chi_end: Complex64) -> Complex64 {
    let factor = (-gamma * chi_end).exp();
    -factor * factor
}

/// Impedance of the approximate Sommerfeld condition provided by a continuous
/// PML: `gamma (1+P)/(1-P)` with `P = (exp(-gamma chi(x_L)))^2`.
pub fn sommerfeld_impedance_continuous_pml(
    gamma: Complex64,
    chi_end: Complex64,
) -> Result<Complex64, TheoryError> {
    let factor = (-gamma * chi_end).exp();
    impedance_from_product(gamma, factor * factor)
}

fn impedance_from_product(gamma: Complex64, p: Complex64) -> Result<Complex64, TheoryError> {
    let one = Complex64::new(1.0, 0.0);
    let denom = one - p;
    if denom.norm() < 1e-14 {
        return Err(TheoryError::Degenerate(denom.norm()));
    }
    Ok(gamma * (one + p) / denom)
}

/// Reflection coefficient of the layerwise-constant PML with termination:
/// `-exp(-alpha_0) prod_l exp(-alpha_l)^2`.
pub fn reflection_lwc(freq: &Frequency, spec: &LayerSpec) -> Complex64 {
    let mut r = -(-alpha(freq, 0, spec)).exp();
    for l in 1..=spec.layer_count() {
        let f = (-alpha(freq, l, spec)).exp();
        r *= f * f;
    }
    r
}

/// Impedance of the approximate Sommerfeld condition provided by the
/// layerwise-constant PML: `gamma (1+P)/(1-P)`, `P = prod_l exp(-alpha_l)^2`.
pub fn sommerfeld_impedance_lwc(
    freq: &Frequency,
    spec: &LayerSpec,
) -> Result<Complex64, TheoryError> {
    let mut p = Complex64::new(1.0, 0.0);
    for l in 1..=spec.layer_count() {
        let f = (-alpha(freq, l, spec)).exp();
        p *= f * f;
    }
    impedance_from_product(freq.gamma, p)
}

/// Reflection coefficient of the type (L,N) ABC:
/// `-[N/N]_{exp(-alpha_0)} prod_l ([N/N]_{exp(-alpha_l)})^2`.
pub fn reflection_abc(freq: &Frequency, spec: &LayerSpec) -> Result<Complex64, TheoryError> {
    let n = spec.degree;
    let mut r = -pade_exp_neg(n, alpha(freq, 0, spec))?;
    for l in 1..=spec.layer_count() {
        let f = pade_exp_neg(n, alpha(freq, l, spec))?;
        r *= f * f;
    }
    Ok(r)
}

/// Impedance of the approximate Sommerfeld condition provided by the type
/// (L,N) ABC: `gamma (1+P)/(1-P)`, `P = prod_l ([N/N]_{exp(-alpha_l)})^2`.
pub fn sommerfeld_impedance_abc(
    freq: &Frequency,
    spec: &LayerSpec,
) -> Result<Complex64, TheoryError> {
    let n = spec.degree;
    let mut p = Complex64::new(1.0, 0.0);
    for l in 1..=spec.layer_count() {
        let f = pade_exp_neg(n, alpha(freq, l, spec))?;
        p *= f * f;
    }
    impedance_from_product(freq.gamma, p)
}

/// Diagonal transfer matrix mapping the amplitude pair `(c_{l,-}, c_{l,+})`
/// across the interface to `(c_{l+1,-}, c_{l+1,+})`:
/// `diag(F(+a_l)/F(-a_{l+1}), F(-a_l)/F(+a_{l+1}))` with `F = 1F1(-N;-2N;.)`.
pub fn transfer_matrix_abc(
    n: usize,
    alpha_l: Complex64,
    alpha_next: Complex64,
) -> Result<[[Complex64; 2]; 2], TheoryError> {
    let zero = Complex64::new(0.0, 0.0);
    let d0_den = hyp1f1_trunc(n, -alpha_next);
    let d1_den = hyp1f1_trunc(n, alpha_next);
    if d0_den.norm() < 1e-300 {
        return Err(SpecialFuncError::Pole(-alpha_next).into());
    }
    if d1_den.norm() < 1e-300 {
        return Err(SpecialFuncError::Pole(alpha_next).into());
    }
    Ok([
        [hyp1f1_trunc(n, alpha_l) / d0_den, zero],
        [zero, hyp1f1_trunc(n, -alpha_l) / d1_den],
    ])
}

/// Layer stretches for the 3D experiments:
/// `gamma_l = (cos(phi_l) s + sin^2(phi_l)/cos(phi_l)) h/(N+1)` with the
/// `phi_l` the L-point Gauss-Legendre nodes mapped affinely onto [0, pi/2).
pub fn make_gamma_l_3d(s: Complex64, n: usize, layers: usize, h: f64) -> Vec<Complex64> {
    assert!(layers >= 1 && n >= 1 && h > 0.0);
    let rule = gauss_legendre(layers).expect("Gauss-Legendre rule for layer count");
    let scale = h / (n as f64 + 1.0);
    rule.nodes()
        .iter()
        .map(|&xi| {
            let phi = std::f64::consts::FRAC_PI_4 * (xi + 1.0);
            let (sin, cos) = phi.sin_cos();
            (s * cos + sin * sin / cos) * scale
        })
        .collect()
}
