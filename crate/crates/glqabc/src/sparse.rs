//! Complex sparse linear algebra for the finite element systems.
//!
//! Assembly accumulates triplets; duplicates sum on conversion to CSR.
//! Dirichlet constraints are applied during conversion: constrained rows
//! become identity rows with the prescribed value on the right-hand side,
//! and constrained columns are eliminated into the right-hand side, which
//! keeps the unconstrained block pattern symmetric.
//!
//! The direct solver is a left-looking sparse LU with threshold partial
//! pivoting (threshold 0.1) over a minimum-degree fill-reducing column
//! ordering. The iterative solver is restarted GMRES with optional Jacobi
//! or ILU(0) right preconditioning.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("index ({row}, {col}) out of bounds for system of dimension {n}")]
    Index { row: usize, col: usize, n: usize },
    #[error("matrix is singular: no acceptable pivot in column {col}")]
    SingularMatrix { col: usize },
    #[error("iteration limit reached: relative residual {residual:e} after {iterations} iterations")]
    MaxIter { iterations: usize, residual: f64 },
    #[error("GMRES breakdown with relative residual {residual:e}")]
    Breakdown { residual: f64 },
    #[error("direct solve residual {residual:e} exceeds 1e-10")]
    Residual { residual: f64 },
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A complex sparse system under assembly: triplet matrix, right-hand side
/// and Dirichlet constraint set.
#[derive(Debug, Clone)]
pub struct SparseComplexSystem {
    n: usize,
    triplets: Vec<(u32, u32, Complex64)>,
    pub rhs: Vec<Complex64>,
    dirichlet: Vec<Option<Complex64>>,
}

impl SparseComplexSystem {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            triplets: Vec::new(),
            rhs: vec![ZERO; n],
            dirichlet: vec![None; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Accumulates a dense local block (row-major over `rows` x `cols`).
    pub fn assemble_add(
        &mut self,
        rows: &[usize],
        cols: &[usize],
        local: &[Complex64],
    ) -> Result<(), SparseError> {
        assert_eq!(local.len(), rows.len() * cols.len());
        for (&r, _) in rows.iter().zip(rows.iter()) {
            if r >= self.n {
                return Err(SparseError::Index {
                    row: r,
                    col: 0,
                    n: self.n,
                });
            }
        }
        for &c in cols {
            if c >= self.n {
                return Err(SparseError::Index {
                    row: 0,
                    col: c,
                    n: self.n,
                });
            }
        }
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                let v = local[i * cols.len() + j];
                if v != ZERO {
                    self.triplets.push((r as u32, c as u32, v));
                }
            }
        }
        Ok(())
    }

    pub fn add_entry(&mut self, row: usize, col: usize, v: Complex64) -> Result<(), SparseError> {
        if row >= self.n || col >= self.n {
            return Err(SparseError::Index {
                row,
                col,
                n: self.n,
            });
        }
        self.triplets.push((row as u32, col as u32, v));
        Ok(())
    }

    /// Prescribes `u[dof] = value`.
    pub fn set_dirichlet(&mut self, dof: usize, value: Complex64) {
        self.dirichlet[dof] = Some(value);
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.dirichlet[dof].is_some()
    }

    pub fn constrained_count(&self) -> usize {
        self.dirichlet.iter().filter(|d| d.is_some()).count()
    }

    /// Builds the constrained CSR matrix and right-hand side.
    pub fn finalize(&self) -> (Csr, Vec<Complex64>) {
        let mut rhs = self.rhs.clone();
        let mut kept: Vec<(u32, u32, Complex64)> = Vec::with_capacity(self.triplets.len());
        for &(r, c, v) in &self.triplets {
            let rc = self.dirichlet[r as usize].is_some();
            match self.dirichlet[c as usize] {
                Some(val) => {
                    if !rc {
                        rhs[r as usize] -= v * val;
                    }
                }
                None => {
                    if !rc {
                        kept.push((r, c, v));
                    }
                }
            }
        }
        for (dof, d) in self.dirichlet.iter().enumerate() {
            if let Some(val) = d {
                kept.push((dof as u32, dof as u32, ONE));
                rhs[dof] = *val;
            }
        }
        (Csr::from_triplets(self.n, &kept), rhs)
    }
}

/// Compressed sparse row matrix with sorted, unique column indices per row.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<Complex64>,
}

impl Csr {
    pub fn from_triplets(n: usize, triplets: &[(u32, u32, Complex64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in triplets {
            counts[r as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0u32; triplets.len()];
        let mut vals = vec![ZERO; triplets.len()];
        let mut next = counts.clone();
        for &(r, c, v) in triplets {
            let p = next[r as usize];
            cols[p] = c;
            vals[p] = v;
            next[r as usize] += 1;
        }
        // sort each row and combine duplicates
        let mut out_cols = Vec::with_capacity(triplets.len());
        let mut out_vals = Vec::with_capacity(triplets.len());
        let mut row_ptr = vec![0usize; n + 1];
        let mut scratch: Vec<(u32, Complex64)> = Vec::new();
        for i in 0..n {
            scratch.clear();
            for p in counts[i]..counts[i + 1] {
                scratch.push((cols[p], vals[p]));
            }
            scratch.sort_unstable_by_key(|e| e.0);
            let mut j = 0;
            while j < scratch.len() {
                let col = scratch[j].0;
                let mut v = scratch[j].1;
                j += 1;
                while j < scratch.len() && scratch[j].0 == col {
                    v += scratch[j].1;
                    j += 1;
                }
                out_cols.push(col);
                out_vals.push(v);
            }
            row_ptr[i + 1] = out_cols.len();
        }
        Csr {
            n,
            row_ptr,
            cols: out_cols,
            vals: out_vals,
        }
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        for i in 0..self.n {
            let mut acc = ZERO;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[p] * x[self.cols[p] as usize];
            }
            y[i] = acc;
        }
    }

    /// Transpose, yielding the CSC view of this matrix as another CSR.
    pub fn transpose(&self) -> Csr {
        let n = self.n;
        let mut counts = vec![0usize; n + 1];
        for &c in &self.cols {
            counts[c as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0u32; self.nnz()];
        let mut vals = vec![ZERO; self.nnz()];
        for i in 0..n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let c = self.cols[p] as usize;
                let q = next[c];
                cols[q] = i as u32;
                vals[q] = self.vals[p];
                next[c] += 1;
            }
        }
        Csr {
            n,
            row_ptr: counts,
            cols,
            vals,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let mut d = vec![vec![ZERO; self.n]; self.n];
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[i][self.cols[p] as usize] = self.vals[p];
            }
        }
        d
    }
}

fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// Minimum-degree ordering
// ---------------------------------------------------------------------------

/// Approximate-minimum-degree ordering on the pattern of `A + A^T`.
///
/// Quotient-graph formulation: eliminated pivots become elements whose
/// boundaries stand in for the fill cliques; variable degrees are the AMD
/// upper bound `|A_v| + |Lp| - 1 + sum_e |L_e \ Lp|`.
fn minimum_degree(a: &Csr) -> Vec<usize> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    let n = a.n;
    let at = a.transpose();
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for i in 0..n {
        for p in a.row_ptr[i]..a.row_ptr[i + 1] {
            let j = a.cols[p] as usize;
            if j != i {
                adj[i].push(j as u32);
            }
        }
        for p in at.row_ptr[i]..at.row_ptr[i + 1] {
            let j = at.cols[p] as usize;
            if j != i {
                adj[i].push(j as u32);
            }
        }
        adj[i].sort_unstable();
        adj[i].dedup();
    }

    let mut elements: Vec<Vec<u32>> = Vec::new();
    let mut evec: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut eliminated = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n).map(|v| Reverse((degree[v], v))).collect();

    let mut mark = vec![0u32; n];
    let mut stamp = 0u32;
    let mut esize: Vec<i64> = Vec::new(); // |L_e \ Lp| workspace, stamped
    let mut estamp: Vec<u32> = Vec::new();
    let mut order = Vec::with_capacity(n);

    while let Some(Reverse((d, v))) = heap.pop() {
        if eliminated[v] || d != degree[v] {
            continue;
        }
        eliminated[v] = true;
        order.push(v);

        // Pivot element boundary Lp = (adj[v] union all element boundaries) \ eliminated.
        stamp += 1;
        mark[v] = stamp;
        let mut lp: Vec<u32> = Vec::new();
        for &u in &adj[v] {
            let u = u as usize;
            if !eliminated[u] && mark[u] != stamp {
                mark[u] = stamp;
                lp.push(u as u32);
            }
        }
        for &e in &evec[v] {
            for &u in &elements[e as usize] {
                let u = u as usize;
                if !eliminated[u] && mark[u] != stamp {
                    mark[u] = stamp;
                    lp.push(u as u32);
                }
            }
        }
        // Absorb the elements adjacent to the pivot.
        for &e in &evec[v] {
            elements[e as usize] = Vec::new();
        }
        let ep = elements.len() as u32;
        elements.push(lp.clone());
        esize.push(0);
        estamp.push(0);

        // |L_e \ Lp| for every live element seen from Lp.
        for &u in &lp {
            for &e in &evec[u as usize] {
                let e = e as usize;
                if elements[e].is_empty() {
                    continue;
                }
                if estamp[e] != stamp {
                    estamp[e] = stamp;
                    esize[e] = elements[e].len() as i64;
                }
                esize[e] -= 1;
            }
        }

        let lp_len = lp.len();
        for &u in &lp {
            let u = u as usize;
            // Prune direct neighbours covered by the new element.
            adj[u].retain(|&w| {
                let w = w as usize;
                !eliminated[w] && mark[w] != stamp
            });
            // Drop absorbed elements, attach the new one.
            evec[u].retain(|&e| !elements[e as usize].is_empty());
            evec[u].push(ep);
            // Approximate external degree.
            let mut dd = adj[u].len() + (lp_len - 1);
            for &e in &evec[u] {
                let e = e as usize;
                if e as u32 == ep {
                    continue;
                }
                dd += if estamp[e] == stamp {
                    esize[e].max(0) as usize
                } else {
                    elements[e].len()
                };
            }
            let bound = n - order.len();
            let dd = dd.min(bound).min(degree[u] + lp_len - 1);
            degree[u] = dd;
            heap.push(Reverse((dd, u)));
        }
    }
    order
}

// ---------------------------------------------------------------------------
// Sparse LU (left-looking, threshold partial pivoting)
// ---------------------------------------------------------------------------

struct LuFactors {
    n: usize,
    // L: unit lower triangular, diagonal stored first in each column.
    lp: Vec<usize>,
    li: Vec<u32>,
    lx: Vec<Complex64>,
    // U: upper triangular, diagonal stored last in each column.
    up: Vec<usize>,
    ui: Vec<u32>,
    ux: Vec<Complex64>,
    pinv: Vec<i32>,
    q: Vec<usize>,
}

/// Topological reach of the sparsity pattern of `A(:, col)` through the graph
/// of the partially built `L`. Returns the reach in postorder; callers walk
/// it in reverse for the numeric solve.
fn lu_reach(
    lp: &[usize],
    li: &[u32],
    pinv: &[i32],
    col_rows: &[u32],
    visited: &mut [bool],
    post: &mut Vec<usize>,
    work: &mut Vec<(usize, usize)>,
) {
    post.clear();
    for &start in col_rows {
        let start = start as usize;
        if visited[start] {
            continue;
        }
        visited[start] = true;
        work.push((start, 0));
        while let Some((node, mut pos)) = work.pop() {
            let pcol = pinv[node];
            let (lo, hi) = if pcol >= 0 {
                (lp[pcol as usize], lp[pcol as usize + 1])
            } else {
                (0, 0)
            };
            let mut descended = false;
            while lo + pos < hi {
                let child = li[lo + pos] as usize;
                pos += 1;
                if !visited[child] {
                    visited[child] = true;
                    work.push((node, pos));
                    work.push((child, 0));
                    descended = true;
                    break;
                }
            }
            if !descended {
                post.push(node);
            }
        }
    }
}

fn lu_factor(a_csc: &Csr, q: Vec<usize>, tol: f64) -> Result<LuFactors, SparseError> {
    let n = a_csc.n;
    let max_abs = a_csc.vals.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    let singular_floor = 1e-14 * max_abs;

    let mut lp = vec![0usize; n + 1];
    let mut li: Vec<u32> = Vec::with_capacity(4 * a_csc.nnz());
    let mut lx: Vec<Complex64> = Vec::with_capacity(4 * a_csc.nnz());
    let mut up = vec![0usize; n + 1];
    let mut ui: Vec<u32> = Vec::with_capacity(4 * a_csc.nnz());
    let mut ux: Vec<Complex64> = Vec::with_capacity(4 * a_csc.nnz());
    let mut pinv = vec![-1i32; n];
    let mut x = vec![ZERO; n];
    let mut visited = vec![false; n];
    let mut post: Vec<usize> = Vec::new();
    let mut work: Vec<(usize, usize)> = Vec::new();

    for k in 0..n {
        let col = q[k];
        let (cs, ce) = (a_csc.row_ptr[col], a_csc.row_ptr[col + 1]);
        let col_rows = &a_csc.cols[cs..ce];
        lu_reach(&lp, &li, &pinv, col_rows, &mut visited, &mut post, &mut work);

        // Numeric sparse triangular solve x = L \ A(:, col).
        for &j in post.iter() {
            x[j] = ZERO;
        }
        for p in cs..ce {
            x[a_csc.cols[p] as usize] = a_csc.vals[p];
        }
        for &j in post.iter().rev() {
            let pcol = pinv[j];
            if pcol < 0 {
                continue;
            }
            let pcol = pcol as usize;
            let xj = x[j]; // L diagonal is 1, stored first
            for p in lp[pcol] + 1..lp[pcol + 1] {
                x[li[p] as usize] -= lx[p] * xj;
            }
        }

        // Pivot search among rows not yet pivotal; emit U entries for the rest.
        let mut ipiv: Option<usize> = None;
        let mut best = -1.0f64;
        for &j in post.iter() {
            if pinv[j] < 0 {
                let t = x[j].norm();
                if t > best {
                    best = t;
                    ipiv = Some(j);
                }
            } else {
                ui.push(pinv[j] as u32);
                ux.push(x[j]);
            }
        }
        let mut ipiv = match ipiv {
            Some(i) if best > singular_floor && best > 0.0 => i,
            _ => return Err(SparseError::SingularMatrix { col }),
        };
        // Prefer the diagonal entry when it is within the threshold.
        if pinv[col] < 0 && x[col].norm() >= tol * best {
            ipiv = col;
        }
        let pivot = x[ipiv];
        ui.push(k as u32);
        ux.push(pivot);
        up[k + 1] = ui.len();

        pinv[ipiv] = k as i32;
        li.push(ipiv as u32);
        lx.push(ONE);
        for &j in post.iter() {
            if pinv[j] < 0 {
                li.push(j as u32);
                lx.push(x[j] / pivot);
            }
            x[j] = ZERO;
            visited[j] = false;
        }
        lp[k + 1] = li.len();
    }

    // Remap L row indices into pivot order.
    for r in li.iter_mut() {
        *r = pinv[*r as usize] as u32;
    }
    Ok(LuFactors {
        n,
        lp,
        li,
        lx,
        up,
        ui,
        ux,
        pinv,
        q,
    })
}

impl LuFactors {
    fn solve(&self, b: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        let mut x = vec![ZERO; n];
        for j in 0..n {
            x[self.pinv[j] as usize] = b[j];
        }
        // L solve (unit diagonal first in each column).
        for j in 0..n {
            let xj = x[j];
            if xj != ZERO {
                for p in self.lp[j] + 1..self.lp[j + 1] {
                    x[self.li[p] as usize] -= self.lx[p] * xj;
                }
            }
        }
        // U solve (diagonal last in each column).
        for j in (0..n).rev() {
            let d = self.ux[self.up[j + 1] - 1];
            x[j] /= d;
            let xj = x[j];
            if xj != ZERO {
                for p in self.up[j]..self.up[j + 1] - 1 {
                    x[self.ui[p] as usize] -= self.ux[p] * xj;
                }
            }
        }
        for k in 0..n {
            out[self.q[k]] = x[k];
        }
    }
}

/// Direct sparse solve with a post-hoc residual guarantee of 1e-10 relative
/// (one step of iterative refinement is applied if needed).
pub fn solve_direct(system: &SparseComplexSystem) -> Result<Vec<Complex64>, SparseError> {
    let (a, b) = system.finalize();
    solve_direct_csr(&a, &b)
}

pub fn solve_direct_csr(a: &Csr, b: &[Complex64]) -> Result<Vec<Complex64>, SparseError> {
    let n = a.n;
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(vec![ZERO; n]);
    }
    let a_csc = a.transpose();
    let order = minimum_degree(a);
    let lu = lu_factor(&a_csc, order, 0.1)?;
    let mut x = vec![ZERO; n];
    lu.solve(b, &mut x);
    let mut r = vec![ZERO; n];
    let mut dx = vec![ZERO; n];
    for _ in 0..2 {
        a.matvec(&x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let res = norm2(&r) / b_norm;
        if res < 1e-12 {
            break;
        }
        lu.solve(&r, &mut dx);
        for i in 0..n {
            x[i] += dx[i];
        }
    }
    a.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let res = norm2(&r) / b_norm;
    if res >= 1e-10 {
        return Err(SparseError::Residual { residual: res });
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// GMRES with Jacobi / ILU(0) preconditioning
// ---------------------------------------------------------------------------

/// Preconditioner selection for [`solve_gmres`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    Jacobi,
    Ilu0,
}

pub const GMRES_DEFAULT_RESTART: usize = 200;
pub const GMRES_DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct GmresResult {
    pub x: Vec<Complex64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Zero-fill incomplete LU on the sparsity pattern of `A`.
struct Ilu0 {
    a: Csr,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    fn factor(src: &Csr) -> Result<Self, SparseError> {
        let mut a = src.clone();
        let n = a.n;
        let mut diag_pos = vec![usize::MAX; n];
        for i in 0..n {
            for p in a.row_ptr[i]..a.row_ptr[i + 1] {
                if a.cols[p] as usize == i {
                    diag_pos[i] = p;
                }
            }
            if diag_pos[i] == usize::MAX {
                return Err(SparseError::SingularMatrix { col: i });
            }
        }
        let mut pos_of_col = vec![usize::MAX; n];
        for i in 0..n {
            let (rs, re) = (a.row_ptr[i], a.row_ptr[i + 1]);
            for p in rs..re {
                pos_of_col[a.cols[p] as usize] = p;
            }
            for p in rs..re {
                let k = a.cols[p] as usize;
                if k >= i {
                    break;
                }
                let ukk = a.vals[diag_pos[k]];
                if ukk.norm() < 1e-300 {
                    return Err(SparseError::SingularMatrix { col: k });
                }
                let factor = a.vals[p] / ukk;
                a.vals[p] = factor;
                for pk in diag_pos[k] + 1..a.row_ptr[k + 1] {
                    let j = a.cols[pk] as usize;
                    let pj = pos_of_col[j];
                    if pj != usize::MAX && pj >= rs && pj < re {
                        let upd = factor * a.vals[pk];
                        a.vals[pj] -= upd;
                    }
                }
            }
            for p in rs..re {
                pos_of_col[a.cols[p] as usize] = usize::MAX;
            }
        }
        Ok(Self { a, diag_pos })
    }

    fn apply(&self, b: &[Complex64], y: &mut [Complex64]) {
        let n = self.a.n;
        // forward: L y = b (unit diagonal, strictly lower entries precede diag)
        for i in 0..n {
            let mut acc = b[i];
            for p in self.a.row_ptr[i]..self.diag_pos[i] {
                acc -= self.a.vals[p] * y[self.a.cols[p] as usize];
            }
            y[i] = acc;
        }
        // backward: U y = y
        for i in (0..n).rev() {
            let mut acc = y[i];
            for p in self.diag_pos[i] + 1..self.a.row_ptr[i + 1] {
                acc -= self.a.vals[p] * y[self.a.cols[p] as usize];
            }
            y[i] = acc / self.a.vals[self.diag_pos[i]];
        }
    }
}

enum Precond {
    None,
    Jacobi(Vec<Complex64>),
    Ilu0(Box<Ilu0>),
}

impl Precond {
    fn apply(&self, b: &[Complex64], y: &mut [Complex64]) {
        match self {
            Precond::None => y.copy_from_slice(b),
            Precond::Jacobi(d) => {
                for i in 0..b.len() {
                    y[i] = b[i] * d[i];
                }
            }
            Precond::Ilu0(f) => f.apply(b, y),
        }
    }
}

/// Restarted GMRES on the constrained system, right-preconditioned.
/// Iterates until the relative residual drops below `tol`; reports the
/// iteration count alongside the solution.
pub fn solve_gmres(
    system: &SparseComplexSystem,
    restart: usize,
    tol: f64,
    precond: Preconditioner,
) -> Result<GmresResult, SparseError> {
    let (a, b) = system.finalize();
    solve_gmres_csr(&a, &b, restart, tol, precond)
}

pub fn solve_gmres_csr(
    a: &Csr,
    b: &[Complex64],
    restart: usize,
    tol: f64,
    precond: Preconditioner,
) -> Result<GmresResult, SparseError> {
    let n = a.n;
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(GmresResult {
            x: vec![ZERO; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let prec = match precond {
        Preconditioner::None => Precond::None,
        Preconditioner::Jacobi => {
            let mut d = vec![ONE; n];
            for i in 0..n {
                for p in a.row_ptr[i]..a.row_ptr[i + 1] {
                    if a.cols[p] as usize == i && a.vals[p].norm() > 1e-300 {
                        d[i] = ONE / a.vals[p];
                    }
                }
            }
            Precond::Jacobi(d)
        }
        Preconditioner::Ilu0 => Precond::Ilu0(Box::new(Ilu0::factor(a)?)),
    };

    let m = restart.max(1).min(n);
    let max_total = 40 * m.max(50);
    let mut x = vec![ZERO; n];
    let mut total_iter = 0usize;
    let mut work = vec![ZERO; n];
    let mut last_res = f64::INFINITY;

    loop {
        // r = b - A x
        let mut r = vec![ZERO; n];
        a.matvec(&x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let r_norm = norm2(&r);
        let rel = r_norm / b_norm;
        if rel < tol {
            return Ok(GmresResult {
                x,
                iterations: total_iter,
                residual: rel,
            });
        }
        if total_iter >= max_total {
            return Err(SparseError::MaxIter {
                iterations: total_iter,
                residual: rel,
            });
        }
        last_res = last_res.min(rel);

        let mut v: Vec<Vec<Complex64>> = Vec::with_capacity(m + 1);
        let mut z: Vec<Vec<Complex64>> = Vec::with_capacity(m);
        let inv = 1.0 / r_norm;
        v.push(r.iter().map(|&ri| ri * inv).collect());
        let mut h = vec![vec![ZERO; m + 1]; m];
        let mut g = vec![ZERO; m + 1];
        g[0] = Complex64::new(r_norm, 0.0);
        let mut cs = vec![ZERO; m];
        let mut sn = vec![ZERO; m];

        let mut k = 0;
        let mut breakdown = false;
        while k < m && total_iter < max_total {
            total_iter += 1;
            prec.apply(&v[k], &mut work);
            z.push(work.clone());
            let mut w = vec![ZERO; n];
            a.matvec(&z[k], &mut w);
            for j in 0..=k {
                let mut hjk = ZERO;
                for i in 0..n {
                    hjk += v[j][i].conj() * w[i];
                }
                h[k][j] = hjk;
                for i in 0..n {
                    w[i] -= hjk * v[j][i];
                }
            }
            let w_norm = norm2(&w);
            h[k][k + 1] = Complex64::new(w_norm, 0.0);
            if w_norm < 1e-300 {
                breakdown = true;
                k += 1;
                break;
            }
            let winv = 1.0 / w_norm;
            v.push(w.iter().map(|&wi| wi * winv).collect());

            for j in 0..k {
                let t = cs[j].conj() * h[k][j] + sn[j].conj() * h[k][j + 1];
                h[k][j + 1] = -sn[j] * h[k][j] + cs[j] * h[k][j + 1];
                h[k][j] = t;
            }
            let (c, s) = {
                let (ha, hb) = (h[k][k], h[k][k + 1]);
                if hb.norm() < 1e-300 {
                    (ONE, ZERO)
                } else {
                    let denom = (ha.norm_sqr() + hb.norm_sqr()).sqrt();
                    (ha / denom, hb / denom)
                }
            };
            cs[k] = c;
            sn[k] = s;
            h[k][k] = c.conj() * h[k][k] + s.conj() * h[k][k + 1];
            h[k][k + 1] = ZERO;
            let t = c.conj() * g[k] + s.conj() * g[k + 1];
            g[k + 1] = -s * g[k] + c * g[k + 1];
            g[k] = t;
            k += 1;
            if g[k].norm() / b_norm < tol {
                break;
            }
        }

        // y from the triangular system, x += Z y.
        let mut y = vec![ZERO; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in i + 1..k {
                acc -= h[j][i] * y[j];
            }
            if h[i][i].norm() > 1e-300 {
                y[i] = acc / h[i][i];
            }
        }
        for j in 0..k {
            let yj = y[j];
            for i in 0..n {
                x[i] += z[j][i] * yj;
            }
        }

        if breakdown {
            let mut r = vec![ZERO; n];
            a.matvec(&x, &mut r);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
            let rel = norm2(&r) / b_norm;
            if rel < tol {
                return Ok(GmresResult {
                    x,
                    iterations: total_iter,
                    residual: rel,
                });
            }
            return Err(SparseError::Breakdown { residual: rel });
        }
    }
}
