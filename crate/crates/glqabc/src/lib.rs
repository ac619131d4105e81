//! Helmholtz absorbing boundary conditions of type (L,N).
//!
//! The library implements the closed-form theory of absorbing boundary
//! conditions obtained from layerwise-constant perfectly matched layers
//! discretised with `Q_N` Lagrange elements and N-point Gauss-Legendre
//! reduced integration, together with the 1D and 3D finite element
//! experiment engines used to verify the theory numerically.
//!
//! Module map:
//! - [`specialfuncs`]: Jacobi polynomials, the terminating series
//!   `1F1(-N;-2N;z)`, the `[N/N]` Pade approximant of `exp` and its zeros.
//! - [`quadrature`]: Gauss-Legendre rules, Gauss-Lobatto node sets and
//!   Lagrange bases on the reference interval.
//! - [`theory`]: branch-resolved wavenumbers, layer parameters, reflection
//!   coefficients, approximate Sommerfeld impedances and transfer matrices.
//! - [`sparse`]: complex sparse assembly, direct LU and restarted GMRES.
//! - [`fem1d`]: the two-cell (and many-cell) 1D experiment with discrete
//!   reflection extraction.
//! - [`fem3d`]: the box-with-hole 3D experiment with tensor-product
//!   assembly and convergence studies.

pub mod fem1d;
pub mod fem3d;
pub mod quadrature;
pub mod sparse;
pub mod specialfuncs;
pub mod theory;
