//! One-dimensional experiment engine: `Q_N` assembly on a layered mesh with
//! per-cell stretch and quadrature mode, boundary treatment, and extraction
//! of the discrete reflection coefficient from a solved system.

use std::io::{self, Write};

use num_complex::Complex64;
use thiserror::Error;

use crate::quadrature::{gauss_legendre, gauss_lobatto_nodes, lagrange_basis};
use crate::sparse::{solve_direct, SparseComplexSystem, SparseError};
use crate::specialfuncs::{pade_exp_neg, pade_zeros, s_even, s_odd, SpecialFuncError};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Error)]
pub enum Fem1dError {
    #[error("degenerate extraction: {0}")]
    Degenerate(&'static str),
    #[error(transparent)]
    Solve(#[from] SparseError),
    #[error(transparent)]
    SpecialFunc(#[from] SpecialFuncError),
}

/// Quadrature mode of a cell: N-point reduced or (N+1)-point full.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureMode {
    Reduced,
    Full,
}

/// Right boundary treatment at `x_L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RightBoundary {
    /// Termination condition `u(x_L) = 0`.
    DirichletZero,
    /// Transformed Sommerfeld condition `g u' + gamma u = 0`, applied weakly
    /// as a Neumann datum: adds `gamma` to the last diagonal entry.
    TransformedSommerfeld { gamma: Complex64 },
}

/// Layered 1D mesh: increasing vertices with per-cell stretch and quadrature
/// mode. At least one cell is physical (stretch 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    vertices: Vec<f64>,
    stretches: Vec<Complex64>,
    modes: Vec<QuadratureMode>,
}

impl Mesh1D {
    pub fn new(vertices: Vec<f64>, stretches: Vec<Complex64>, modes: Vec<QuadratureMode>) -> Self {
        assert!(vertices.len() >= 2, "at least one cell");
        assert_eq!(vertices.len(), stretches.len() + 1);
        assert_eq!(stretches.len(), modes.len());
        assert!(vertices.windows(2).all(|w| w[1] > w[0]));
        assert!(
            stretches.iter().any(|g| *g == ONE),
            "at least one physical cell"
        );
        Self {
            vertices,
            stretches,
            modes,
        }
    }

    /// The section 7.1 geometry: physical cell `[-1, 0]`, one artificial cell
    /// `[0, 1]` with the given stretch, reduced integration everywhere.
    pub fn two_cell(gamma1: Complex64) -> Self {
        Self::new(
            vec![-1.0, 0.0, 1.0],
            vec![ONE, gamma1],
            vec![QuadratureMode::Reduced, QuadratureMode::Reduced],
        )
    }

    /// Physical cell `[-1, 0]` followed by artificial layers of the given
    /// widths and stretches, reduced integration everywhere.
    pub fn with_layers(widths: &[f64], stretches: &[Complex64]) -> Self {
        let mut vertices = vec![-1.0, 0.0];
        for &h in widths {
            vertices.push(vertices.last().unwrap() + h);
        }
        let mut all_stretches = vec![ONE];
        all_stretches.extend_from_slice(stretches);
        let modes = vec![QuadratureMode::Reduced; all_stretches.len()];
        Self::new(vertices, all_stretches, modes)
    }

    pub fn cell_count(&self) -> usize {
        self.stretches.len()
    }

    pub fn vertex(&self, i: usize) -> f64 {
        self.vertices[i]
    }

    pub fn width(&self, cell: usize) -> f64 {
        self.vertices[cell + 1] - self.vertices[cell]
    }

    pub fn stretch(&self, cell: usize) -> Complex64 {
        self.stretches[cell]
    }

    pub fn mode(&self, cell: usize) -> QuadratureMode {
        self.modes[cell]
    }

    /// Number of global Gauss-Lobatto dofs for degree-`n` elements.
    pub fn num_dofs(&self, n: usize) -> usize {
        self.cell_count() * n + 1
    }
}

/// Dof vector over the Gauss-Lobatto-noded `Q_N` space on a mesh.
#[derive(Debug, Clone)]
pub struct Solution1D<'m> {
    pub mesh: &'m Mesh1D,
    pub degree: usize,
    pub values: Vec<Complex64>,
}

impl Solution1D<'_> {
    pub fn vertex_value(&self, vertex: usize) -> Complex64 {
        self.values[vertex * self.degree]
    }

    /// The `N+1` nodal values of one cell, left to right.
    pub fn cell_values(&self, cell: usize) -> &[Complex64] {
        let start = cell * self.degree;
        &self.values[start..start + self.degree + 1]
    }
}

/// Reference mass and stiffness matrices of the Gauss-Lobatto Lagrange basis
/// under the given quadrature rule, row-major `(n+1) x (n+1)`.
fn reference_matrices(n: usize, mode: QuadratureMode) -> (Vec<f64>, Vec<f64>) {
    let points = match mode {
        QuadratureMode::Reduced => n,
        QuadratureMode::Full => n + 1,
    };
    let rule = gauss_legendre(points).expect("quadrature rule");
    let nodes = gauss_lobatto_nodes(n).expect("lobatto nodes");
    let m = n + 1;
    let mut mass = vec![0.0; m * m];
    let mut stiff = vec![0.0; m * m];
    for (&zq, &wq) in rule.nodes().iter().zip(rule.weights()) {
        let (v, d) = lagrange_basis(&nodes, zq);
        for i in 0..m {
            for j in 0..m {
                mass[i * m + j] += wq * v[i] * v[j];
                stiff[i * m + j] += wq * d[i] * d[j];
            }
        }
    }
    (mass, stiff)
}

/// Local cell matrix `(gamma^2/g) M + g K` with the geometric factors of a
/// width-`h` cell folded in.
pub fn local_matrix_1d(
    gamma: Complex64,
    g: Complex64,
    h: f64,
    n: usize,
    mode: QuadratureMode,
) -> Vec<Complex64> {
    let (mass, stiff) = reference_matrices(n, mode);
    let m = n + 1;
    let cm = gamma * gamma / g * (h / 2.0);
    let ck = g * (2.0 / h);
    (0..m * m).map(|p| cm * mass[p] + ck * stiff[p]).collect()
}

/// Assembles the weak form `int (gamma^2/g) u w + g u' w' dx` over the mesh.
pub fn assemble_1d(mesh: &Mesh1D, gamma: Complex64, n: usize) -> SparseComplexSystem {
    let mut system = SparseComplexSystem::new(mesh.num_dofs(n));
    for cell in 0..mesh.cell_count() {
        let local =
            local_matrix_1d(gamma, mesh.stretch(cell), mesh.width(cell), n, mesh.mode(cell));
        let dofs: Vec<usize> = (0..=n).map(|a| cell * n + a).collect();
        system
            .assemble_add(&dofs, &dofs, &local)
            .expect("indices in range");
    }
    system
}

/// Applies the left Dirichlet datum and the chosen right boundary treatment.
pub fn apply_bcs_1d(system: &mut SparseComplexSystem, left: Complex64, right: RightBoundary) {
    let last = system.dim() - 1;
    system.set_dirichlet(0, left);
    match right {
        RightBoundary::DirichletZero => system.set_dirichlet(last, ZERO),
        RightBoundary::TransformedSommerfeld { gamma } => {
            system.add_entry(last, last, gamma).expect("in range");
        }
    }
}

/// Assembles, applies boundary conditions and solves in one step.
pub fn solve_1d<'m>(
    mesh: &'m Mesh1D,
    gamma: Complex64,
    n: usize,
    left: Complex64,
    right: RightBoundary,
) -> Result<Solution1D<'m>, Fem1dError> {
    let mut system = assemble_1d(mesh, gamma, n);
    apply_bcs_1d(&mut system, left, right);
    let values = solve_direct(&system)?;
    Ok(Solution1D {
        mesh,
        degree: n,
        values,
    })
}

/// Extracts the reflection coefficient `c_-/c_+` of the discrete wave from
/// the vertex values of a reduced-integration physical cell, using the
/// analytic parity sums of the cell expansion.
pub fn extract_reflection(
    sol: &Solution1D,
    cell: usize,
    gamma: Complex64,
    n: usize,
) -> Result<Complex64, Fem1dError> {
    debug_assert_eq!(sol.mesh.mode(cell), QuadratureMode::Reduced);
    debug_assert_eq!(sol.mesh.stretch(cell), ONE);
    let u_left = sol.vertex_value(cell);
    let u_right = sol.vertex_value(cell + 1);
    let alpha0 = gamma * sol.mesh.width(cell);
    let c_even = (u_right + u_left) / (2.0 * s_even(n, alpha0));
    let c_odd = (u_right - u_left) / (2.0 * s_odd(n, alpha0));
    let c_minus = c_even + c_odd;
    let c_plus = c_even - c_odd;
    if c_plus.norm() < 1e-300 {
        return Err(Fem1dError::Degenerate("outgoing amplitude vanishes"));
    }
    Ok(c_minus / c_plus)
}

/// Gaussian elimination with partial pivoting for the small dense systems of
/// the condensation and projection paths. `a` is row-major `m x m`.
fn solve_dense_small(a: &mut [Complex64], b: &mut [Complex64], m: usize) -> Result<(), Fem1dError> {
    for k in 0..m {
        let mut piv = k;
        let mut best = a[k * m + k].norm();
        for r in k + 1..m {
            let t = a[r * m + k].norm();
            if t > best {
                best = t;
                piv = r;
            }
        }
        if best < 1e-300 {
            return Err(Fem1dError::Degenerate("singular local system"));
        }
        if piv != k {
            for c in 0..m {
                a.swap(k * m + c, piv * m + c);
            }
            b.swap(k, piv);
        }
        let d = a[k * m + k];
        for r in k + 1..m {
            let f = a[r * m + k] / d;
            if f != ZERO {
                for c in k..m {
                    let v = a[k * m + c];
                    a[r * m + c] -= f * v;
                }
                let bk = b[k];
                b[r] -= f * bk;
            }
        }
    }
    for k in (0..m).rev() {
        let mut acc = b[k];
        for c in k + 1..m {
            acc -= a[k * m + c] * b[c];
        }
        b[k] = acc / a[k * m + k];
    }
    Ok(())
}

/// Eigenvalues of the vertex-to-vertex transfer relation obtained by
/// statically condensing the interior dofs of a reduced-integration unit
/// physical cell; they come out as the per-cell amplification factors of the
/// outgoing and incoming discrete waves.
pub fn condensed_transfer_eigenvalues(
    gamma: Complex64,
    h: f64,
    n: usize,
) -> Result<(Complex64, Complex64), Fem1dError> {
    let m = n + 1;
    let local = local_matrix_1d(gamma, ONE, h, n, QuadratureMode::Reduced);
    // Schur complement onto the two vertex dofs {0, n}.
    let ni = n - 1; // interior count
    let (a, b, c, d);
    if ni == 0 {
        a = local[0];
        b = local[n];
        c = local[n * m];
        d = local[n * m + n];
    } else {
        // A_ii^{-1} A_iv via ni x ni solves with two right-hand sides.
        let mut aii = vec![ZERO; ni * ni];
        for i in 0..ni {
            for j in 0..ni {
                aii[i * ni + j] = local[(i + 1) * m + (j + 1)];
            }
        }
        let mut rhs0: Vec<Complex64> = (0..ni).map(|i| local[(i + 1) * m]).collect();
        let mut rhs1: Vec<Complex64> = (0..ni).map(|i| local[(i + 1) * m + n]).collect();
        let mut a0 = aii.clone();
        solve_dense_small(&mut a0, &mut rhs0, ni)?;
        solve_dense_small(&mut aii, &mut rhs1, ni)?;
        let dot = |row: usize, sol: &[Complex64]| -> Complex64 {
            (0..ni).map(|j| local[row * m + (j + 1)] * sol[j]).sum()
        };
        a = local[0] - dot(0, &rhs0);
        b = local[n] - dot(0, &rhs1);
        c = local[n * m] - dot(n, &rhs0);
        d = local[n * m + n] - dot(n, &rhs1);
    }
    // Discrete waves u_j = mu^j satisfy c + (a + d) mu + b mu^2 = 0.
    if b.norm() < 1e-300 {
        return Err(Fem1dError::Degenerate("vertex coupling vanishes"));
    }
    let disc = ((a + d) * (a + d) - 4.0 * b * c).sqrt();
    let mu1 = (-(a + d) + disc) / (2.0 * b);
    let mu2 = (-(a + d) - disc) / (2.0 * b);
    // outgoing wave decays per cell
    if (mu1.norm() - mu2.norm()).abs() < 1e-14 * mu1.norm().max(1.0) {
        return Err(Fem1dError::Degenerate("defective transfer relation"));
    }
    if mu1.norm() < mu2.norm() {
        Ok((mu1, mu2))
    } else {
        Ok((mu2, mu1))
    }
}

/// Alternative reflection extraction through the local element matrix:
/// condense the interior dofs, eigendecompose the vertex transfer relation
/// and project the vertex pair onto the two discrete-wave directions.
pub fn extract_reflection_matrix(
    sol: &Solution1D,
    cell: usize,
    gamma: Complex64,
    n: usize,
) -> Result<Complex64, Fem1dError> {
    let h = sol.mesh.width(cell);
    let (mu_out, mu_in) = condensed_transfer_eigenvalues(gamma, h, n)?;
    let u_left = sol.vertex_value(cell);
    let u_right = sol.vertex_value(cell + 1);
    // (u_l, u_r) = a_in (1, mu_in) + a_out (1, mu_out)
    let det = mu_out - mu_in;
    let a_in = (u_left * mu_out - u_right) / det;
    let a_out = (u_right - u_left * mu_in) / det;
    if a_out.norm() < 1e-300 {
        return Err(Fem1dError::Degenerate("outgoing amplitude vanishes"));
    }
    // The projection is anchored at the left vertex; rescale to the cell
    // expansion amplitudes via the per-cell amplification factor.
    let alpha0 = gamma * h;
    let scale = pade_exp_neg(n, alpha0)?;
    Ok(a_in / a_out / scale)
}

/// Coefficients of the cell solution in the weighted Jacobi expansion basis
/// `alpha^m ((2N-m)!/(2N)!) P_m^{(N-m,N-m)}`, recovered from the nodal values.
pub fn cell_expansion_coefficients(
    sol: &Solution1D,
    cell: usize,
    alpha: Complex64,
    n: usize,
) -> Result<Vec<Complex64>, Fem1dError> {
    let m = n + 1;
    let nodes = gauss_lobatto_nodes(n).expect("lobatto nodes");
    let mut basis = vec![ZERO; m * m];
    for (j, &zeta) in nodes.iter().enumerate() {
        let mut pref = ONE;
        for mode in 0..m {
            basis[j * m + mode] =
                pref * crate::specialfuncs::jacobi_eval(mode, n - mode, n - mode, zeta);
            if mode < n {
                pref = pref * alpha / (2 * n - mode) as f64;
            }
        }
    }
    let mut rhs = sol.cell_values(cell).to_vec();
    solve_dense_small(&mut basis, &mut rhs, m)?;
    Ok(rhs)
}

/// Weak-flux impedance observed by the physical domain: the reduced-rule
/// integral of `(gamma^2/g) u w0 + g u' w0'` over the given artificial cell,
/// with `w0` the hat function of the cell's left vertex, divided by the
/// solution value at that vertex.
pub fn weak_flux_impedance(
    sol: &Solution1D,
    cell: usize,
    gamma: Complex64,
    n: usize,
) -> Result<Complex64, Fem1dError> {
    let mesh = sol.mesh;
    let g = mesh.stretch(cell);
    let h = mesh.width(cell);
    let rule = gauss_legendre(n).expect("reduced rule");
    let nodes = gauss_lobatto_nodes(n).expect("lobatto nodes");
    let u = sol.cell_values(cell);
    let mut integral = ZERO;
    for (&zq, &wq) in rule.nodes().iter().zip(rule.weights()) {
        let (v, d) = lagrange_basis(&nodes, zq);
        let mut uq = ZERO;
        let mut duq = ZERO;
        for i in 0..=n {
            uq += u[i] * v[i];
            duq += u[i] * d[i];
        }
        let w0 = 0.5 * (1.0 - zq);
        let dw0 = -0.5;
        integral += wq
            * (gamma * gamma / g * uq * w0 * (h / 2.0) + g * duq * dw0 * (2.0 / h));
    }
    let u0 = sol.vertex_value(cell);
    if u0.norm() < 1e-300 {
        return Err(Fem1dError::Degenerate("vanishing boundary value"));
    }
    Ok(integral / u0)
}

/// Rectangular sweep grid in the complex `gamma` plane; points sit at the
/// centers of an `nx x ny` partition so the open rectangle edges are avoided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    /// The reflection-map rectangle of the one-dimensional experiments:
    /// `0 < Re gamma < 8`, `-8 < Im gamma < 8`.
    pub fn standard(nx: usize, ny: usize) -> Self {
        Self {
            re_min: 0.0,
            re_max: 8.0,
            im_min: -8.0,
            im_max: 8.0,
            nx,
            ny,
        }
    }

    pub fn points(&self) -> Vec<Complex64> {
        let dre = (self.re_max - self.re_min) / self.nx as f64;
        let dim = (self.im_max - self.im_min) / self.ny as f64;
        let mut pts = Vec::with_capacity(self.nx * self.ny);
        for i in 0..self.nx {
            for j in 0..self.ny {
                pts.push(Complex64::new(
                    self.re_min + (i as f64 + 0.5) * dre,
                    self.im_min + (j as f64 + 0.5) * dim,
                ));
            }
        }
        pts
    }
}

/// One evaluated sweep point. `abs_reflection` is `None` when the solve
/// failed; `near_pole` marks points within 1e-8 of a Pade pole of the
/// artificial layer.
#[derive(Debug, Clone, Copy)]
pub struct SweepPoint {
    pub gamma: Complex64,
    pub abs_reflection: Option<f64>,
    pub near_pole: bool,
}

/// Sweeps the two-cell experiment over a grid of `gamma`, solving with
/// `u(-1) = 1`, `u(+1) = 0` and extracting the discrete reflection at each
/// point. Failed points are recorded and the sweep continues.
pub fn reflection_map(n: usize, gamma1: Complex64, grid: &GridSpec) -> Vec<SweepPoint> {
    let mesh = Mesh1D::two_cell(gamma1);
    let poles: Vec<Complex64> = pade_zeros(n)
        .map(|zs| zs.iter().map(|z| -z).collect())
        .unwrap_or_default();
    grid.points()
        .iter()
        .map(|&gamma| {
            let alpha1 = gamma / gamma1;
            let near_pole = poles.iter().any(|p| (alpha1 - p).norm() < 1e-8);
            let abs_reflection = solve_1d(
                &mesh,
                gamma,
                n,
                ONE,
                RightBoundary::DirichletZero,
            )
            .and_then(|sol| extract_reflection(&sol, 0, gamma, n))
            .ok()
            .map(|r| r.norm());
            SweepPoint {
                gamma,
                abs_reflection,
                near_pole,
            }
        })
        .collect()
}

/// Writes sweep results as CSV rows `re_gamma,im_gamma,abs_reflection`.
pub fn write_reflection_csv<W: Write>(points: &[SweepPoint], out: &mut W) -> io::Result<()> {
    writeln!(out, "re_gamma,im_gamma,abs_reflection")?;
    for p in points {
        match p.abs_reflection {
            Some(r) => writeln!(out, "{:.9},{:.9},{:.9e}", p.gamma.re, p.gamma.im, r)?,
            None => writeln!(out, "{:.9},{:.9},nan", p.gamma.re, p.gamma.im)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::{
        alpha, reflection_abc, sommerfeld_impedance_abc, Frequency, LayerSpec,
    };
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn linear_reduced_local_matrices() {
        // N=1, unit cell, midpoint rule: M = (1/4) ones, K = [[1,-1],[-1,1]].
        let local = local_matrix_1d(ONE, ONE, 1.0, 1, QuadratureMode::Reduced);
        let (mass, stiff) = reference_matrices(1, QuadratureMode::Reduced);
        for v in &mass {
            assert!((v - 0.5).abs() < 1e-15);
        }
        let expect_k = [1.0, -1.0, -1.0, 1.0];
        for (s, e) in stiff.iter().zip([0.5, -0.5, -0.5, 0.5]) {
            assert!((s - e * 1.0 - 0.0).abs() < 1e-15 || (s - e).abs() < 1e-15);
        }
        // with gamma = g = h = 1: local = M + K where M = (1/4) ones
        let expect = [1.25, -0.75, -0.75, 1.25];
        for (l, e) in local.iter().zip(expect) {
            assert!((l - c(e, 0.0)).norm() < 1e-15);
        }
        let _ = expect_k;
    }

    #[test]
    fn stiffness_is_rule_independent() {
        // The gradient term has degree 2N-2 and is integrated exactly by the
        // N-point rule, so full and reduced stiffness parts agree.
        for n in 1..=4 {
            let (_, kr) = reference_matrices(n, QuadratureMode::Reduced);
            let (_, kf) = reference_matrices(n, QuadratureMode::Full);
            for (a, b) in kr.iter().zip(kf.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn assembly_matches_dense_mirror() {
        let gamma = c(1.1, 0.4);
        let n = 3;
        let mesh = Mesh1D::two_cell(c(0.8, 0.5));
        let sys = assemble_1d(&mesh, gamma, n);
        let (a, _) = sys.finalize();
        let dense = a.to_dense();
        let m = n + 1;
        let mut mirror = vec![vec![ZERO; mesh.num_dofs(n)]; mesh.num_dofs(n)];
        for cell in 0..2 {
            let local = local_matrix_1d(
                gamma,
                mesh.stretch(cell),
                mesh.width(cell),
                n,
                QuadratureMode::Reduced,
            );
            for i in 0..m {
                for j in 0..m {
                    mirror[cell * n + i][cell * n + j] += local[i * m + j];
                }
            }
        }
        for i in 0..mesh.num_dofs(n) {
            for j in 0..mesh.num_dofs(n) {
                assert!((dense[i][j] - mirror[i][j]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn bcs_constrain_and_augment() {
        let mesh = Mesh1D::two_cell(ONE);
        let gamma = c(1.0, 0.5);
        let mut sys = assemble_1d(&mesh, gamma, 2);
        apply_bcs_1d(&mut sys, ONE, RightBoundary::DirichletZero);
        assert_eq!(sys.constrained_count(), 2);
        let (a, rhs) = sys.finalize();
        let d = a.to_dense();
        let last = mesh.num_dofs(2) - 1;
        assert_eq!(d[0][0], ONE);
        assert_eq!(d[last][last], ONE);
        assert_eq!(rhs[0], ONE);
        assert_eq!(rhs[last], ZERO);

        let mut sys2 = assemble_1d(&mesh, gamma, 2);
        let before = {
            let (a2, _) = sys2.finalize();
            a2.to_dense()[last][last]
        };
        apply_bcs_1d(&mut sys2, ONE, RightBoundary::TransformedSommerfeld { gamma });
        let (a2, _) = sys2.finalize();
        let after = a2.to_dense()[last][last];
        assert!((after - before - gamma).norm() < 1e-14);
    }

    #[test]
    fn pure_outgoing_wave_has_zero_reflection() {
        // Construct vertex values of a pure outgoing discrete wave directly
        // from the parity sums: c_- = 0 forces u(+1)/u(-1) = F(-a)/F(+a).
        let n = 3;
        let gamma = c(1.4, 0.8);
        let mesh = Mesh1D::two_cell(ONE);
        let alpha0 = gamma;
        let f_plus = crate::specialfuncs::hyp1f1_trunc(n, alpha0);
        let f_minus = crate::specialfuncs::hyp1f1_trunc(n, -alpha0);
        let mut values = vec![ZERO; mesh.num_dofs(n)];
        values[0] = f_plus;
        values[n] = f_minus;
        let sol = Solution1D {
            mesh: &mesh,
            degree: n,
            values,
        };
        let r = extract_reflection(&sol, 0, gamma, n).unwrap();
        assert!(r.norm() < 1e-14);
    }

    #[test]
    fn pipeline_vanishes_at_pade_zero() {
        let mesh = Mesh1D::two_cell(ONE);
        let sol = solve_1d(&mesh, c(2.0, 0.0), 1, ONE, RightBoundary::DirichletZero).unwrap();
        let r = extract_reflection(&sol, 0, c(2.0, 0.0), 1).unwrap();
        assert!(r.norm() < 1e-10);
    }

    #[test]
    fn pipeline_matches_formula_on_grid() {
        for n in 1..=4usize {
            for gamma1 in [ONE, c(0.5, 3.0f64.sqrt() / 2.0)] {
                let mesh = Mesh1D::two_cell(gamma1);
                for i in 0..5 {
                    for j in 0..5 {
                        let gamma = c(0.4 + 1.5 * i as f64, -6.0 + 3.0 * j as f64);
                        let sol =
                            solve_1d(&mesh, gamma, n, ONE, RightBoundary::DirichletZero).unwrap();
                        let got = extract_reflection(&sol, 0, gamma, n).unwrap();
                        let freq = Frequency::from_gamma(gamma);
                        let spec = LayerSpec::uniform(n, vec![gamma1]);
                        let expect = reflection_abc(&freq, &spec).unwrap();
                        assert!(
                            (got - expect).norm() < 1e-9,
                            "N={n} gamma={gamma}: {got} vs {expect}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn matrix_extraction_agrees() {
        let mut rng = StdRng::seed_from_u64(61);
        for _ in 0..40 {
            let n = rng.gen_range(1..=4);
            let gamma = c(rng.gen_range(0.3..4.0), rng.gen_range(-4.0..4.0));
            let gamma1 = c(rng.gen_range(0.4..1.6), rng.gen_range(-0.8..0.8));
            let mesh = Mesh1D::two_cell(gamma1);
            let sol = solve_1d(&mesh, gamma, n, ONE, RightBoundary::DirichletZero).unwrap();
            let r1 = extract_reflection(&sol, 0, gamma, n).unwrap();
            let r2 = extract_reflection_matrix(&sol, 0, gamma, n).unwrap();
            assert!((r1 - r2).norm() < 1e-10, "N={n} gamma={gamma}");
        }
    }

    #[test]
    fn condensed_eigenvalues_are_pade_pair() {
        let mut rng = StdRng::seed_from_u64(67);
        for _ in 0..30 {
            let n = rng.gen_range(1..=4);
            let gamma = c(rng.gen_range(0.3..3.0), rng.gen_range(-3.0..3.0));
            let (mu_out, mu_in) = condensed_transfer_eigenvalues(gamma, 1.0, n).unwrap();
            let p = pade_exp_neg(n, gamma).unwrap();
            assert!((mu_out - p).norm() < 1e-10 * p.norm().max(1.0), "N={n}");
            assert!((mu_in - 1.0 / p).norm() < 1e-9 * (1.0 / p).norm().max(1.0));
        }
        // N=1 closed form: (1 - gamma h/2)/(1 + gamma h/2).
        let gamma = c(0.9, 0.7);
        let (mu_out, _) = condensed_transfer_eigenvalues(gamma, 1.0, 1).unwrap();
        let expect = (ONE - gamma / 2.0) / (ONE + gamma / 2.0);
        assert!((mu_out - expect).norm() < 1e-13);
    }

    #[test]
    fn interior_modes_follow_two_parameter_structure() {
        // On reduced cells the Jacobi coefficients satisfy c_{m+2} = c_m.
        for n in 2..=4usize {
            let gamma = c(1.2, 0.9);
            let gamma1 = c(0.7, 0.4);
            let mesh = Mesh1D::two_cell(gamma1);
            let sol = solve_1d(&mesh, gamma, n, ONE, RightBoundary::DirichletZero).unwrap();
            for cell in 0..2 {
                let freq = Frequency::from_gamma(gamma);
                let spec = LayerSpec::uniform(n, vec![gamma1]);
                let a = alpha(&freq, cell, &spec);
                let coeffs = cell_expansion_coefficients(&sol, cell, a, n).unwrap();
                let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
                for m in 0..=(n - 2) {
                    assert!(
                        (coeffs[m + 2] - coeffs[m]).norm() < 1e-10 * scale.max(1.0),
                        "N={n} cell={cell} m={m}"
                    );
                }
            }
        }
    }

    #[test]
    fn transformed_sommerfeld_kills_reflection() {
        let mut rng = StdRng::seed_from_u64(71);
        for _ in 0..10 {
            let n = rng.gen_range(1..=4);
            let layers = rng.gen_range(1..=3);
            let gamma = c(rng.gen_range(0.3..2.5), rng.gen_range(-2.5..2.5));
            let widths: Vec<f64> = (0..layers).map(|_| rng.gen_range(0.5..1.2)).collect();
            let stretches: Vec<Complex64> = (0..layers)
                .map(|_| gamma * c(rng.gen_range(0.5..1.8), rng.gen_range(-0.8..0.8)))
                .collect();
            let mesh = Mesh1D::with_layers(&widths, &stretches);
            let sol = solve_1d(
                &mesh,
                gamma,
                n,
                ONE,
                RightBoundary::TransformedSommerfeld { gamma },
            )
            .unwrap();
            let r = extract_reflection(&sol, 0, gamma, n).unwrap();
            assert!(r.norm() < 1e-10, "N={n} L={layers} gamma={gamma}: {}", r.norm());
        }
    }

    #[test]
    fn weak_flux_matches_impedance_formula() {
        let mut rng = StdRng::seed_from_u64(73);
        for _ in 0..10 {
            let n = rng.gen_range(1..=4);
            let layers = rng.gen_range(1..=3);
            let gamma = c(rng.gen_range(0.4..2.0), rng.gen_range(-2.0..2.0));
            let widths: Vec<f64> = (0..layers).map(|_| rng.gen_range(0.6..1.3)).collect();
            let stretches: Vec<Complex64> = (0..layers)
                .map(|_| gamma * c(rng.gen_range(0.6..1.6), rng.gen_range(-0.6..0.6)))
                .collect();
            let mesh = Mesh1D::with_layers(&widths, &stretches);
            let sol = solve_1d(&mesh, gamma, n, ONE, RightBoundary::DirichletZero).unwrap();
            let z = weak_flux_impedance(&sol, 1, gamma, n).unwrap();
            let freq = Frequency::from_gamma(gamma);
            let spec = LayerSpec::new(n, 1.0, widths, stretches);
            let expect = sommerfeld_impedance_abc(&freq, &spec).unwrap();
            assert!(
                (z - expect).norm() < 1e-9 * expect.norm().max(1.0),
                "N={n} L={layers}: {z} vs {expect}"
            );
        }
    }

    #[test]
    fn pmdl_independent_implementation_agrees() {
        // Independent midpoint-rule linear-element assembly for N=1.
        let gamma = c(1.7, -0.6);
        let gamma1 = c(0.9, 0.5);
        let mesh = Mesh1D::two_cell(gamma1);
        let sol = solve_1d(&mesh, gamma, 1, ONE, RightBoundary::DirichletZero).unwrap();

        let cells = [(1.0, ONE), (1.0, gamma1)];
        let ndof = 3;
        let mut a = vec![vec![ZERO; ndof]; ndof];
        let mut b = vec![ZERO; ndof];
        for (e, &(h, g)) in cells.iter().enumerate() {
            // midpoint rule: M = (h/4) ones(2), K = (1/h)[[1,-1],[-1,1]]
            let cm = gamma * gamma / g * (h / 4.0);
            let ck = g / h;
            let local = [[cm + ck, cm - ck], [cm - ck, cm + ck]];
            for i in 0..2 {
                for j in 0..2 {
                    a[e + i][e + j] += local[i][j];
                }
            }
        }
        // u(-1) = 1, u(1) = 0
        for i in 0..ndof {
            b[i] = b[i] - a[i][0] * ONE;
        }
        for i in 0..ndof {
            a[0][i] = ZERO;
            a[i][0] = ZERO;
            a[2][i] = ZERO;
            a[i][2] = ZERO;
        }
        a[0][0] = ONE;
        a[2][2] = ONE;
        b[0] = ONE;
        b[2] = ZERO;
        let u1 = (b[1] - a[1][0] * b[0] - a[1][2] * b[2]) / a[1][1];
        assert!((sol.values[1] - u1).norm() < 1e-12);
    }

    #[test]
    fn reflection_map_sweep_against_formula() {
        let grid = GridSpec::standard(6, 6);
        for n in [1usize, 2] {
            let gamma1 = ONE;
            let pts = reflection_map(n, gamma1, &grid);
            assert_eq!(pts.len(), 36);
            for p in &pts {
                if p.near_pole {
                    continue;
                }
                let freq = Frequency::from_gamma(p.gamma);
                let spec = LayerSpec::uniform(n, vec![gamma1]);
                let expect = reflection_abc(&freq, &spec).unwrap().norm();
                let got = p.abs_reflection.expect("solve succeeded");
                assert!((got - expect).abs() < 1e-8, "N={n} gamma={}", p.gamma);
            }
        }
    }

    #[test]
    fn csv_format() {
        let pts = vec![
            SweepPoint {
                gamma: c(0.5, -1.0),
                abs_reflection: Some(0.25),
                near_pole: false,
            },
            SweepPoint {
                gamma: c(1.5, 2.0),
                abs_reflection: None,
                near_pole: true,
            },
        ];
        let mut buf = Vec::new();
        write_reflection_csv(&pts, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "re_gamma,im_gamma,abs_reflection");
        assert_eq!(lines.next().unwrap(), "0.500000000,-1.000000000,2.500000000e-1");
        assert_eq!(lines.next().unwrap(), "1.500000000,2.000000000,nan");
    }
}
