//! The single-diamond nonlinear solve.
//!
//! On the unit square a diamond couples `r²` internal stages `Z_i^j` through
//! three relations: Runge–Kutta sweeps along each row (`Z_i^j = z_ℓ^j +
//! Σ_k a_ik X_k^j`), sweeps along each column (`Z_i^j = z_b^i + Σ_k a_jk
//! T_i^k`), and collocation of the PDE at every stage
//! (`∇S(Z_i^j) = K̃ T_i^j + L̃ X_i^j`). Inverting the stage matrix turns the
//! first two into explicit expressions `X = A⁻¹(Z - z_ℓ)` per row and
//! `T = A⁻¹(Z - z_b)` per column, leaving `r²·n` unknowns `Z` solved here by
//! Newton iteration. The upper edges then follow from the quadrature updates
//! `z_r^i = z_ℓ^i + Σ_k b_k X_k^i` and `z_t^i = z_b^i + Σ_k b_k T_i^k`.
//!
//! Newton runs as a ladder: a factorization of the Jacobian frozen at the
//! zero state (exact for quadratic `S`, a cheap quasi-Newton matrix
//! otherwise), then a fresh analytic Jacobian per iteration, then one
//! finite-difference retry. Every rung is a pure function of the diamond's
//! own inputs, so results are independent of how diamonds are distributed
//! across workers.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};
use crate::pde::{
    EdgeData, JacobianMode, PDESystem, SolverConfig, StageBlock, TransformedCoeffs,
};
use crate::tableau::RKTableau;

/// Transformed PDE coefficients at every internal stage `(c_i, c_j)`.
///
/// Uniform diamonds share a single pair; initialization triangles get a
/// distinct pair per stage because their square map is nonlinear.
#[derive(Debug, Clone)]
pub struct StageCoeffs {
    pub r: usize,
    pub n: usize,
    /// Row-major `n×n` coefficient of `T` at stage `(i, j)`, `r²` blocks
    /// indexed `j*r + i`.
    k: Vec<f64>,
    /// Row-major `n×n` coefficient of `X`, same layout.
    l: Vec<f64>,
}

impl StageCoeffs {
    /// All stages share the uniform-diamond coefficients.
    pub fn uniform(tc: &TransformedCoeffs, r: usize) -> Self {
        let n = tc.k_tilde.nrows();
        let mut k = vec![0.0; r * r * n * n];
        let mut l = vec![0.0; r * r * n * n];
        for s in 0..r * r {
            for row in 0..n {
                for col in 0..n {
                    k[(s * n + row) * n + col] = tc.k_tilde[(row, col)];
                    l[(s * n + row) * n + col] = tc.l_tilde[(row, col)];
                }
            }
        }
        StageCoeffs { r, n, k, l }
    }

    /// Per-stage coefficients for the triangle map used by cold-start
    /// initialization: `x = (Δx/2)(x̃ - t̃) + x_c`, `t = (Δt/2) x̃ t̃` sends the
    /// unit square onto a base-`Δx` triangle, and the pulled-back PDE has
    /// `K̃(x̃,t̃) = 2(Δx K - t̃ Δt L)/(Δx Δt (x̃+t̃))`,
    /// `L̃(x̃,t̃) = 2(Δx K + x̃ Δt L)/(Δx Δt (x̃+t̃))`.
    pub fn triangle(pde: &PDESystem, dx: f64, dt: f64, tab: &RKTableau) -> Result<Self> {
        if !dx.is_finite() || !dt.is_finite() || dx <= 0.0 || dt <= 0.0 {
            return Err(Error::invalid("triangle dimensions must be positive"));
        }
        let r = tab.r;
        let n = pde.n;
        let mut k = vec![0.0; r * r * n * n];
        let mut l = vec![0.0; r * r * n * n];
        for j in 0..r {
            for i in 0..r {
                let s = j * r + i;
                let denom = dx * dt * (tab.c[i] + tab.c[j]);
                let scale = 2.0 / denom;
                for row in 0..n {
                    for col in 0..n {
                        let kk = pde.k_mat[(row, col)];
                        let ll = pde.l_mat[(row, col)];
                        k[(s * n + row) * n + col] = scale * (dx * kk - tab.c[j] * dt * ll);
                        l[(s * n + row) * n + col] = scale * (dx * kk + tab.c[i] * dt * ll);
                    }
                }
            }
        }
        Ok(StageCoeffs { r, n, k, l })
    }

    /// Coefficient of `T` at stage `(i, j)` as a row-major `n×n` slice.
    #[inline]
    pub fn k_at(&self, i: usize, j: usize) -> &[f64] {
        let s = (j * self.r + i) * self.n * self.n;
        &self.k[s..s + self.n * self.n]
    }

    /// Coefficient of `X` at stage `(i, j)`.
    #[inline]
    pub fn l_at(&self, i: usize, j: usize) -> &[f64] {
        let s = (j * self.r + i) * self.n * self.n;
        &self.l[s..s + self.n * self.n]
    }
}

/// The four edges of one diamond in square orientation.
#[derive(Debug, Clone)]
pub struct DiamondEdges {
    pub left: EdgeData,
    pub bottom: EdgeData,
    pub right: EdgeData,
    pub top: EdgeData,
}

/// Aggregate Newton statistics for a run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolverStats {
    pub solves: u64,
    pub total_iterations: u64,
    pub max_iterations: usize,
    pub fd_retries: u64,
}

impl SolverStats {
    pub fn absorb(&mut self, other: &SolverStats) {
        self.solves += other.solves;
        self.total_iterations += other.total_iterations;
        self.max_iterations = self.max_iterations.max(other.max_iterations);
        self.fd_retries += other.fd_retries;
    }

    fn record(&mut self, iterations: usize, used_fd_retry: bool) {
        self.solves += 1;
        self.total_iterations += iterations as u64;
        self.max_iterations = self.max_iterations.max(iterations);
        if used_fd_retry {
            self.fd_retries += 1;
        }
    }
}

/// Scratch buffers shared by residual and Jacobian evaluation.
pub(crate) struct Scratch {
    pub(crate) x: Vec<f64>,
    pub(crate) t: Vec<f64>,
    pub(crate) grad: Vec<f64>,
    pub(crate) hess: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(r: usize, n: usize) -> Self {
        Scratch {
            x: vec![0.0; r * r * n],
            t: vec![0.0; r * r * n],
            grad: vec![0.0; n],
            hess: vec![0.0; n * n],
        }
    }
}

/// Reusable Newton work arrays.
pub(crate) struct NewtonWorkspace {
    f: Vec<f64>,
    f_trial: Vec<f64>,
    u_trial: Vec<f64>,
    u_saved: Vec<f64>,
    rhs: DVector<f64>,
    jac: DMatrix<f64>,
    scratch: Scratch,
}

impl NewtonWorkspace {
    pub(crate) fn new(dim: usize, r: usize, n: usize) -> Self {
        NewtonWorkspace {
            f: vec![0.0; dim],
            f_trial: vec![0.0; dim],
            u_trial: vec![0.0; dim],
            u_saved: vec![0.0; dim],
            rhs: DVector::zeros(dim),
            jac: DMatrix::zeros(dim, dim),
            scratch: Scratch::new(r, n),
        }
    }
}

/// A square nonlinear system `F(u) = 0` solvable by the Newton ladder.
pub(crate) trait NewtonSystem {
    fn dim(&self) -> usize;
    fn residual(&self, u: &[f64], out: &mut [f64], scratch: &mut Scratch);
    fn jacobian(&self, u: &[f64], out: &mut DMatrix<f64>, scratch: &mut Scratch);
    fn context(&self) -> &'static str;
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

enum PhaseEnd {
    Converged,
    Escalate,
}

/// One Newton phase with a fixed Jacobian policy. Returns the iterations
/// spent and how the phase ended.
#[allow(clippy::too_many_arguments)]
fn newton_phase<S: NewtonSystem>(
    sys: &S,
    u: &mut [f64],
    norm: &mut f64,
    ws: &mut NewtonWorkspace,
    frozen: Option<&LU<f64, Dyn, Dyn>>,
    finite_difference: bool,
    tol: f64,
    budget: usize,
) -> Result<(usize, PhaseEnd)> {
    let norm_start = *norm;
    for iter in 0..budget {
        let owned_lu;
        let lu = match frozen {
            Some(lu) => lu,
            None => {
                if finite_difference {
                    fd_jacobian(sys, u, ws);
                } else {
                    // Split borrows: the Jacobian writes into ws.jac while
                    // reading through ws.scratch.
                    let NewtonWorkspace { jac, scratch, .. } = ws;
                    sys.jacobian(u, jac, scratch);
                }
                owned_lu = ws.jac.clone().lu();
                if owned_lu.determinant() == 0.0 {
                    return Err(Error::SingularSystem {
                        context: sys.context().into(),
                    });
                }
                &owned_lu
            }
        };

        for (r, f) in ws.rhs.iter_mut().zip(ws.f.iter()) {
            *r = -*f;
        }
        if !lu.solve_mut(&mut ws.rhs) {
            return Err(Error::SingularSystem {
                context: sys.context().into(),
            });
        }

        // Backtracking line search: halve until the residual norm decreases.
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=8 {
            for ((trial, &base), &dir) in ws.u_trial.iter_mut().zip(u.iter()).zip(&ws.rhs) {
                *trial = base + alpha * dir;
            }
            sys.residual(&ws.u_trial, &mut ws.f_trial, &mut ws.scratch);
            let trial_norm = max_norm(&ws.f_trial);
            if trial_norm.is_finite() && trial_norm < *norm {
                u.copy_from_slice(&ws.u_trial);
                ws.f.copy_from_slice(&ws.f_trial);
                *norm = trial_norm;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Ok((iter + 1, PhaseEnd::Escalate));
        }
        if *norm <= tol {
            return Ok((iter + 1, PhaseEnd::Converged));
        }
        // A frozen factorization that contracts too slowly is abandoned early.
        if frozen.is_some() && iter >= 5 {
            let rate = (*norm / norm_start).powf(1.0 / (iter + 1) as f64);
            if rate > 0.75 {
                return Ok((iter + 1, PhaseEnd::Escalate));
            }
        }
    }
    Ok((budget, PhaseEnd::Escalate))
}

fn fd_jacobian<S: NewtonSystem>(sys: &S, u: &[f64], ws: &mut NewtonWorkspace) {
    let dim = sys.dim();
    ws.u_trial.copy_from_slice(u);
    for (col, &ucol) in u.iter().enumerate() {
        let h = 1e-7 * ucol.abs().max(1.0);
        ws.u_trial[col] = ucol + h;
        sys.residual(&ws.u_trial, &mut ws.f_trial, &mut ws.scratch);
        ws.u_trial[col] = ucol;
        for row in 0..dim {
            ws.jac[(row, col)] = (ws.f_trial[row] - ws.f[row]) / h;
        }
    }
}

/// Drives a [`NewtonSystem`] to `‖F‖_∞ ≤ cfg.tol·(1 + ‖F₀‖_∞)`, escalating
/// from the frozen factorization to fresh analytic Jacobians to one
/// finite-difference retry from the initial guess. Returns
/// `(iterations, used_fd_retry)`.
pub(crate) fn newton_solve<S: NewtonSystem>(
    sys: &S,
    u: &mut [f64],
    cfg: &SolverConfig,
    frozen: Option<&LU<f64, Dyn, Dyn>>,
    ws: &mut NewtonWorkspace,
) -> Result<(usize, bool)> {
    sys.residual(u, &mut ws.f, &mut ws.scratch);
    let mut norm = max_norm(&ws.f);
    if !norm.is_finite() {
        return Err(Error::invalid(format!(
            "non-finite residual at the initial guess in {}",
            sys.context()
        )));
    }
    // The attainable residual floor scales with the problem: the transformed
    // coefficients grow like 1/Δt, so an absolute test would spuriously fail
    // on fine meshes.  Anchor the tolerance to the initial residual instead.
    let tol = cfg.tol * (1.0 + norm);
    if norm <= tol {
        return Ok((0, false));
    }
    ws.u_saved.copy_from_slice(u);
    let mut total = 0usize;

    if cfg.jacobian == JacobianMode::Analytic {
        if let Some(lu) = frozen {
            let budget = cfg.max_iter.min(30);
            let (spent, end) = newton_phase(sys, u, &mut norm, ws, Some(lu), false, tol, budget)?;
            total += spent;
            if matches!(end, PhaseEnd::Converged) {
                return Ok((total, false));
            }
        }
        let (spent, end) = newton_phase(sys, u, &mut norm, ws, None, false, tol, cfg.max_iter)?;
        total += spent;
        if matches!(end, PhaseEnd::Converged) {
            return Ok((total, false));
        }
        // One finite-difference retry from the initial guess.
        u.copy_from_slice(&ws.u_saved);
        sys.residual(u, &mut ws.f, &mut ws.scratch);
        norm = max_norm(&ws.f);
    }

    let (spent, end) = newton_phase(sys, u, &mut norm, ws, None, true, tol, cfg.max_iter)?;
    total += spent;
    match end {
        PhaseEnd::Converged => Ok((total, cfg.jacobian == JacobianMode::Analytic)),
        PhaseEnd::Escalate => Err(Error::SolverDivergence {
            context: sys.context().into(),
            residual: norm,
            iterations: total,
        }),
    }
}

/// The reduced interior stage system for one diamond.
struct InteriorSystem<'a> {
    pde: &'a PDESystem,
    w: &'a DMatrix<f64>,
    wsum: &'a [f64],
    coeffs: &'a StageCoeffs,
    z_left: &'a [f64],
    z_bottom: &'a [f64],
    r: usize,
    n: usize,
}

impl InteriorSystem<'_> {
    /// Fills `X` and `T` from the current stage states.
    fn stage_derivatives(&self, z: &[f64], x: &mut [f64], t: &mut [f64]) {
        let (r, n) = (self.r, self.n);
        for j in 0..r {
            for i in 0..r {
                let o = (j * r + i) * n;
                for d in 0..n {
                    let mut xv = -self.wsum[i] * self.z_left[j * n + d];
                    let mut tv = -self.wsum[j] * self.z_bottom[i * n + d];
                    for k in 0..r {
                        xv += self.w[(i, k)] * z[(j * r + k) * n + d];
                        tv += self.w[(j, k)] * z[(k * r + i) * n + d];
                    }
                    x[o + d] = xv;
                    t[o + d] = tv;
                }
            }
        }
    }
}

impl NewtonSystem for InteriorSystem<'_> {
    fn dim(&self) -> usize {
        self.r * self.r * self.n
    }

    fn residual(&self, u: &[f64], out: &mut [f64], scratch: &mut Scratch) {
        let (r, n) = (self.r, self.n);
        self.stage_derivatives(u, &mut scratch.x, &mut scratch.t);
        for j in 0..r {
            for i in 0..r {
                let o = (j * r + i) * n;
                (self.pde.grad_s)(&u[o..o + n], &mut scratch.grad);
                let kc = self.coeffs.k_at(i, j);
                let lc = self.coeffs.l_at(i, j);
                for d in 0..n {
                    let mut v = -scratch.grad[d];
                    for e in 0..n {
                        v += kc[d * n + e] * scratch.t[o + e] + lc[d * n + e] * scratch.x[o + e];
                    }
                    out[o + d] = v;
                }
            }
        }
    }

    fn jacobian(&self, u: &[f64], out: &mut DMatrix<f64>, scratch: &mut Scratch) {
        let (r, n) = (self.r, self.n);
        out.fill(0.0);
        for j in 0..r {
            for i in 0..r {
                let row0 = (j * r + i) * n;
                let kc = self.coeffs.k_at(i, j);
                let lc = self.coeffs.l_at(i, j);
                (self.pde.hess_s)(&u[row0..row0 + n], &mut scratch.hess);
                // Column-sweep coupling through T: stages (i, q).
                for q in 0..r {
                    let col0 = (q * r + i) * n;
                    let wjq = self.w[(j, q)];
                    for d in 0..n {
                        for e in 0..n {
                            out[(row0 + d, col0 + e)] += wjq * kc[d * n + e];
                        }
                    }
                }
                // Row-sweep coupling through X: stages (p, j).
                for p in 0..r {
                    let col0 = (j * r + p) * n;
                    let wip = self.w[(i, p)];
                    for d in 0..n {
                        for e in 0..n {
                            out[(row0 + d, col0 + e)] += wip * lc[d * n + e];
                        }
                    }
                }
                for d in 0..n {
                    for e in 0..n {
                        out[(row0 + d, row0 + e)] -= scratch.hess[d * n + e];
                    }
                }
            }
        }
    }

    fn context(&self) -> &'static str {
        "diamond stage equations"
    }
}

/// Reusable solver for diamonds sharing one coefficient field.
pub struct DiamondSolver {
    pde: Arc<PDESystem>,
    tab: RKTableau,
    w: DMatrix<f64>,
    wsum: Vec<f64>,
    coeffs: StageCoeffs,
    cfg: SolverConfig,
    frozen: Option<LU<f64, Dyn, Dyn>>,
    ws: NewtonWorkspace,
    /// Newton statistics accumulated across `solve` calls.
    pub stats: SolverStats,
}

impl DiamondSolver {
    /// Builds a solver; precomputes `A⁻¹` and the frozen reference
    /// factorization (the analytic Jacobian evaluated at the zero state).
    pub fn new(
        pde: Arc<PDESystem>,
        tab: &RKTableau,
        coeffs: StageCoeffs,
        cfg: SolverConfig,
    ) -> Result<Self> {
        if coeffs.r != tab.r || coeffs.n != pde.n {
            return Err(Error::invalid(
                "stage coefficients do not match tableau and system dimensions",
            ));
        }
        let w = tab.a_inverse()?;
        let wsum: Vec<f64> = (0..tab.r).map(|i| w.row(i).sum()).collect();
        let dim = tab.r * tab.r * pde.n;
        let mut ws = NewtonWorkspace::new(dim, tab.r, pde.n);
        let mut solver = DiamondSolver {
            pde,
            tab: tab.clone(),
            w,
            wsum,
            coeffs,
            cfg,
            frozen: None,
            ws,
            stats: SolverStats::default(),
        };
        if cfg.jacobian == JacobianMode::Analytic {
            let zeros_edge = vec![0.0; solver.tab.r * solver.pde.n];
            let zeros_u = vec![0.0; dim];
            let sys = InteriorSystem {
                pde: &solver.pde,
                w: &solver.w,
                wsum: &solver.wsum,
                coeffs: &solver.coeffs,
                z_left: &zeros_edge,
                z_bottom: &zeros_edge,
                r: solver.tab.r,
                n: solver.pde.n,
            };
            ws = NewtonWorkspace::new(dim, solver.tab.r, solver.pde.n);
            let NewtonWorkspace { jac, scratch, .. } = &mut ws;
            sys.jacobian(&zeros_u, jac, scratch);
            let lu = jac.clone().lu();
            if lu.determinant() != 0.0 {
                solver.frozen = Some(lu);
            }
            solver.ws = ws;
        }
        Ok(solver)
    }

    pub fn tableau(&self) -> &RKTableau {
        &self.tab
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Solves one diamond from its lower edges, returning the right edge,
    /// top edge, and internal stages.
    pub fn solve(
        &mut self,
        z_left: &EdgeData,
        z_bottom: &EdgeData,
    ) -> Result<(EdgeData, EdgeData, StageBlock)> {
        let (r, n) = (self.tab.r, self.pde.n);
        for (name, edge) in [("left", z_left), ("bottom", z_bottom)] {
            if edge.r != r || edge.n != n {
                return Err(Error::invalid(format!("{name} edge has wrong dimensions")));
            }
            if !edge.is_finite() {
                return Err(Error::invalid(format!("{name} edge contains non-finite values")));
            }
        }

        let mut stages = StageBlock::zeros(r, n);
        for j in 0..r {
            for i in 0..r {
                let o = (j * r + i) * n;
                for d in 0..n {
                    stages.z[o + d] =
                        0.5 * (z_left.values[j * n + d] + z_bottom.values[i * n + d]);
                }
            }
        }

        let sys = InteriorSystem {
            pde: &self.pde,
            w: &self.w,
            wsum: &self.wsum,
            coeffs: &self.coeffs,
            z_left: &z_left.values,
            z_bottom: &z_bottom.values,
            r,
            n,
        };
        let (iterations, used_fd) = newton_solve(
            &sys,
            &mut stages.z,
            &self.cfg,
            self.frozen.as_ref(),
            &mut self.ws,
        )?;
        self.stats.record(iterations, used_fd);

        sys.stage_derivatives(&stages.z, &mut stages.x, &mut stages.t);

        let mut right = EdgeData::zeros(r, n);
        let mut top = EdgeData::zeros(r, n);
        for i in 0..r {
            for d in 0..n {
                let mut zr = z_left.values[i * n + d];
                let mut zt = z_bottom.values[i * n + d];
                for k in 0..r {
                    zr += self.tab.b[k] * stages.x[(i * r + k) * n + d];
                    zt += self.tab.b[k] * stages.t[(k * r + i) * n + d];
                }
                right.values[i * n + d] = zr;
                top.values[i * n + d] = zt;
            }
        }
        Ok((right, top, stages))
    }
}

/// One-shot convenience wrapper around [`DiamondSolver`] for a uniform
/// diamond.
pub fn solve_diamond(
    z_left: &EdgeData,
    z_bottom: &EdgeData,
    pde: &Arc<PDESystem>,
    tab: &RKTableau,
    tc: &TransformedCoeffs,
    cfg: &SolverConfig,
) -> Result<(EdgeData, EdgeData, StageBlock)> {
    let coeffs = StageCoeffs::uniform(tc, tab.r);
    let mut solver = DiamondSolver::new(Arc::clone(pde), tab, coeffs, *cfg)?;
    solver.solve(z_left, z_bottom)
}

/// Solution values reconstructed at the four diamond corners.
#[derive(Debug, Clone)]
pub struct CornerValues {
    pub south: Vec<f64>,
    pub east: Vec<f64>,
    pub west: Vec<f64>,
    pub north: Vec<f64>,
}

/// Evaluates the degree-`r-1` polynomial through `(c_k, edge_k)` at `tau`.
fn edge_endpoint(edge: &EdgeData, c: &DVector<f64>, tau: f64, out: &mut [f64]) {
    let r = edge.r;
    out.fill(0.0);
    for k in 0..r {
        let mut ell = 1.0;
        for m in 0..r {
            if m != k {
                ell *= (tau - c[m]) / (c[k] - c[m]);
            }
        }
        for (o, v) in out.iter_mut().zip(edge.node(k)) {
            *o += ell * v;
        }
    }
}

/// Reconstructs corner values of a solved diamond.
///
/// Each edge's collocation values extend to a polynomial along that edge;
/// evaluating it at the edge ends gives one estimate per meeting edge, and
/// the corner value is the average of the two. Corners never feed back into
/// the scheme — this is a diagnostic.
pub fn corner_values(edges: &DiamondEdges, tab: &RKTableau) -> Result<CornerValues> {
    let n = edges.left.n;
    for e in [&edges.left, &edges.bottom, &edges.right, &edges.top] {
        if e.r != tab.r || e.n != n {
            return Err(Error::invalid("edge dimensions do not match the tableau"));
        }
    }
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut average = |e1: &EdgeData, tau1: f64, e2: &EdgeData, tau2: f64| -> Vec<f64> {
        edge_endpoint(e1, &tab.c, tau1, &mut a);
        edge_endpoint(e2, &tab.c, tau2, &mut b);
        a.iter().zip(b.iter()).map(|(x, y)| 0.5 * (x + y)).collect()
    };
    Ok(CornerValues {
        south: average(&edges.left, 0.0, &edges.bottom, 0.0),
        east: average(&edges.bottom, 1.0, &edges.right, 0.0),
        west: average(&edges.left, 1.0, &edges.top, 0.0),
        north: average(&edges.right, 1.0, &edges.top, 1.0),
    })
}
