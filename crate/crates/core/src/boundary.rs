//! Boundary treatments: periodic wraparound and Dirichlet/Neumann phantom
//! diamonds.
//!
//! On a bounded domain the first and last aligned valleys sit exactly on
//! `x = a` and `x = b`, so the half-step from an aligned row needs one
//! diamond per side that straddles the boundary. Its exterior lower edge is
//! unknown; instead, boundary data is imposed at the `r` diagonal stages
//! `(c_i, c_i)`, which lie on the boundary line at times `t_S + c_i Δt`.
//! Each stage contributes three scalar conditions:
//!
//! * Dirichlet (`u = g`): `u = g`, `u_t = g'`, and `u_xx = g'' - f(g)`
//!   (the second space derivative recovered through the PDE), imposed as
//!   `Z₁ = g`, `Z₂ = g'`, `(X̃ - T̃)₃ = Δx·u_xx`.
//! * Neumann (`u_x = h`): `Z₃ = h`, `(X̃ + T̃)₃ = Δt·h'`, and
//!   `(X̃ - T̃)₂ = Δx·h'` (both mixed derivatives equal `u_tx = h'`).
//!
//! Together with the `r²·n` collocation equations these make the enlarged
//! system `[Z | unknown edge]` square; no multipliers are needed. The solve
//! returns the one interior upper edge; the exterior upper edge is
//! discarded.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::pde::{EdgeData, PDESystem, SolverConfig, StageBlock, TransformedCoeffs};
use crate::problems::{BcKind, WaveProblem};
use crate::solver::{newton_solve, NewtonSystem, NewtonWorkspace, Scratch, StageCoeffs};
use crate::tableau::RKTableau;

type TraceFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Boundary data on one side of the domain.
pub enum EdgeCondition {
    Periodic,
    /// Prescribed value `u(t) = g(t)` with its time derivative and the
    /// second space derivative trace (`g'' - f(g)` via the PDE).
    Dirichlet { value: TraceFn, d_t: TraceFn, d_xx: TraceFn },
    /// Prescribed slope `u_x(t) = h(t)` with its time derivative.
    Neumann { value: TraceFn, d_t: TraceFn },
}

impl EdgeCondition {
    pub fn is_periodic(&self) -> bool {
        matches!(self, EdgeCondition::Periodic)
    }
}

impl fmt::Debug for EdgeCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeCondition::Periodic => f.write_str("Periodic"),
            EdgeCondition::Dirichlet { .. } => f.write_str("Dirichlet"),
            EdgeCondition::Neumann { .. } => f.write_str("Neumann"),
        }
    }
}

/// The boundary treatment of a run: one condition per side.
#[derive(Debug)]
pub struct BoundarySpec {
    pub left: EdgeCondition,
    pub right: EdgeCondition,
}

impl BoundarySpec {
    pub fn periodic() -> Self {
        BoundarySpec {
            left: EdgeCondition::Periodic,
            right: EdgeCondition::Periodic,
        }
    }

    /// True when the row wraps around; periodic cannot be mixed with
    /// phantom treatments, which [`Self::validate`] enforces.
    pub fn is_periodic(&self) -> bool {
        self.left.is_periodic() && self.right.is_periodic()
    }

    pub fn validate(&self) -> Result<()> {
        if self.left.is_periodic() != self.right.is_periodic() {
            return Err(Error::invalid(
                "periodic boundaries must be used on both sides or neither",
            ));
        }
        Ok(())
    }

    /// Builds boundary data from a problem's exact solution traces.
    pub fn from_problem(problem: &Arc<WaveProblem>, kinds: (BcKind, BcKind)) -> Result<Self> {
        let side = |kind: BcKind, x: f64| -> EdgeCondition {
            let (pv, pt, pxx) = (Arc::clone(problem), Arc::clone(problem), Arc::clone(problem));
            match kind {
                BcKind::Periodic => EdgeCondition::Periodic,
                BcKind::Dirichlet => EdgeCondition::Dirichlet {
                    value: Box::new(move |t| pv.u(x, t)),
                    d_t: Box::new(move |t| pt.u_t(x, t)),
                    d_xx: Box::new(move |t| pxx.u_xx(x, t)),
                },
                BcKind::Neumann => EdgeCondition::Neumann {
                    value: Box::new(move |t| pv.u_x(x, t)),
                    d_t: Box::new(move |t| pt.u_tx(x, t)),
                },
            }
        };
        let spec = BoundarySpec {
            left: side(kinds.0, problem.a),
            right: side(kinds.1, problem.b),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Boundary data matching the problem's catalogued default treatment.
    pub fn problem_default(problem: &Arc<WaveProblem>) -> Result<Self> {
        Self::from_problem(problem, problem.default_bcs)
    }
}

/// In a periodic aligned row, the wraparound diamond at valley 0 takes the
/// row's final down edge as its left input.
pub fn periodic_wrap(edges: &[EdgeData]) -> &EdgeData {
    &edges[edges.len() - 1]
}

/// Which domain end a phantom diamond straddles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

/// Constraint values at one diagonal stage.
#[derive(Debug, Clone, Copy)]
enum StageConstraint {
    Dirichlet { g: f64, g_t: f64, u_xx: f64 },
    Neumann { h: f64, h_t: f64 },
}

/// The enlarged stage system of one boundary phantom diamond. Unknowns are
/// `[Z | exterior lower edge]`; the interior lower edge is known data.
struct BoundarySystem<'a> {
    pde: &'a PDESystem,
    w: &'a DMatrix<f64>,
    wsum: &'a [f64],
    coeffs: &'a StageCoeffs,
    r: usize,
    dx: f64,
    dt: f64,
    side: Side,
    /// The known lower edge: bottom for a left phantom, left for a right one.
    known: &'a EdgeData,
    constraints: Vec<StageConstraint>,
}

impl BoundarySystem<'_> {
    const N: usize = 3;

    fn z_len(&self) -> usize {
        self.r * self.r * Self::N
    }

    /// Fills X and T; the unknown tail of `u` is the exterior edge.
    fn stage_derivatives(&self, u: &[f64], x: &mut [f64], t: &mut [f64]) {
        let (r, n) = (self.r, Self::N);
        let unknown = &u[self.z_len()..];
        let (zl, zb): (&[f64], &[f64]) = match self.side {
            Side::Left => (unknown, &self.known.values),
            Side::Right => (&self.known.values, unknown),
        };
        for j in 0..r {
            for i in 0..r {
                let o = (j * r + i) * n;
                for d in 0..n {
                    let mut xv = -self.wsum[i] * zl[j * n + d];
                    let mut tv = -self.wsum[j] * zb[i * n + d];
                    for k in 0..r {
                        xv += self.w[(i, k)] * u[(j * r + k) * n + d];
                        tv += self.w[(j, k)] * u[(k * r + i) * n + d];
                    }
                    x[o + d] = xv;
                    t[o + d] = tv;
                }
            }
        }
    }
}

impl NewtonSystem for BoundarySystem<'_> {
    fn dim(&self) -> usize {
        self.z_len() + self.r * Self::N
    }

    fn residual(&self, u: &[f64], out: &mut [f64], scratch: &mut Scratch) {
        let (r, n) = (self.r, Self::N);
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
        let base = self.z_len();
        for i in 0..r {
            let o = (i * r + i) * n;
            let row = base + 3 * i;
            match self.constraints[i] {
                StageConstraint::Dirichlet { g, g_t, u_xx } => {
                    out[row] = u[o] - g;
                    out[row + 1] = u[o + 1] - g_t;
                    out[row + 2] = scratch.x[o + 2] - scratch.t[o + 2] - self.dx * u_xx;
                }
                StageConstraint::Neumann { h, h_t } => {
                    out[row] = u[o + 2] - h;
                    out[row + 1] = scratch.x[o + 2] + scratch.t[o + 2] - self.dt * h_t;
                    out[row + 2] = scratch.x[o + 1] - scratch.t[o + 1] - self.dx * h_t;
                }
            }
        }
    }

    fn jacobian(&self, u: &[f64], out: &mut DMatrix<f64>, scratch: &mut Scratch) {
        let (r, n) = (self.r, Self::N);
        let tail = self.z_len();
        out.fill(0.0);
        for j in 0..r {
            for i in 0..r {
                let row0 = (j * r + i) * n;
                let kc = self.coeffs.k_at(i, j);
                let lc = self.coeffs.l_at(i, j);
                (self.pde.hess_s)(&u[row0..row0 + n], &mut scratch.hess);
                for q in 0..r {
                    let col0 = (q * r + i) * n;
                    let wjq = self.w[(j, q)];
                    for d in 0..n {
                        for e in 0..n {
                            out[(row0 + d, col0 + e)] += wjq * kc[d * n + e];
                        }
                    }
                }
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
                // The exterior edge enters X (left phantom) or T (right).
                match self.side {
                    Side::Left => {
                        let col0 = tail + j * n;
                        for d in 0..n {
                            for e in 0..n {
                                out[(row0 + d, col0 + e)] -= self.wsum[i] * lc[d * n + e];
                            }
                        }
                    }
                    Side::Right => {
                        let col0 = tail + i * n;
                        for d in 0..n {
                            for e in 0..n {
                                out[(row0 + d, col0 + e)] -= self.wsum[j] * kc[d * n + e];
                            }
                        }
                    }
                }
            }
        }
        for i in 0..r {
            let o = (i * r + i) * n;
            let row = tail + 3 * i;
            // Derivative couplings shared by both condition types: the
            // column-stage family (i*r+k) carries X, the row-stage family
            // (k*r+i) carries T, and the exterior edge enters through the
            // row sums.
            let add_xmt = |out: &mut DMatrix<f64>, rr: usize, comp: usize| {
                for k in 0..r {
                    out[(rr, (i * r + k) * n + comp)] += self.w[(i, k)];
                    out[(rr, (k * r + i) * n + comp)] -= self.w[(i, k)];
                }
                match self.side {
                    Side::Left => out[(rr, tail + i * n + comp)] -= self.wsum[i],
                    Side::Right => out[(rr, tail + i * n + comp)] += self.wsum[i],
                }
            };
            let add_xpt = |out: &mut DMatrix<f64>, rr: usize, comp: usize| {
                for k in 0..r {
                    out[(rr, (i * r + k) * n + comp)] += self.w[(i, k)];
                    out[(rr, (k * r + i) * n + comp)] += self.w[(i, k)];
                }
                out[(rr, tail + i * n + comp)] -= self.wsum[i];
            };
            match self.constraints[i] {
                StageConstraint::Dirichlet { .. } => {
                    out[(row, o)] = 1.0;
                    out[(row + 1, o + 1)] = 1.0;
                    add_xmt(out, row + 2, 2);
                }
                StageConstraint::Neumann { .. } => {
                    out[(row, o + 2)] = 1.0;
                    add_xpt(out, row + 1, 2);
                    add_xmt(out, row + 2, 1);
                }
            }
        }
    }

    fn context(&self) -> &'static str {
        "boundary phantom diamond"
    }
}

/// Result of one boundary phantom solve.
#[derive(Debug, Clone)]
pub struct PhantomSolve {
    /// The interior upper edge: NE for a left phantom (the new offset row's
    /// first down edge), NW for a right phantom (its last up edge).
    pub edge: EdgeData,
    /// The recovered exterior lower edge.
    pub exterior: EdgeData,
    pub stages: StageBlock,
    pub iterations: usize,
}

fn stage_constraints(cond: &EdgeCondition, tab: &RKTableau, t_south: f64, dt: f64) -> Result<Vec<StageConstraint>> {
    (0..tab.r)
        .map(|i| {
            let tau = t_south + tab.c[i] * dt;
            match cond {
                EdgeCondition::Dirichlet { value, d_t, d_xx } => Ok(StageConstraint::Dirichlet {
                    g: value(tau),
                    g_t: d_t(tau),
                    u_xx: d_xx(tau),
                }),
                EdgeCondition::Neumann { value, d_t } => Ok(StageConstraint::Neumann {
                    h: value(tau),
                    h_t: d_t(tau),
                }),
                EdgeCondition::Periodic => Err(Error::invalid(
                    "periodic sides take the wraparound path, not a phantom solve",
                )),
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn solve_phantom(
    side: Side,
    pde: &Arc<PDESystem>,
    tab: &RKTableau,
    tc: &TransformedCoeffs,
    cfg: &SolverConfig,
    cond: &EdgeCondition,
    known: &EdgeData,
    t_south: f64,
    dx: f64,
    dt: f64,
) -> Result<PhantomSolve> {
    if pde.n != 3 {
        return Err(Error::UnsupportedOperation(
            "boundary phantoms require the 3-component wave form".into(),
        ));
    }
    let (r, n) = (tab.r, 3usize);
    if known.r != r || known.n != n {
        return Err(Error::invalid("known boundary edge has wrong dimensions"));
    }
    let coeffs = StageCoeffs::uniform(tc, r);
    let w = tab.a_inverse()?;
    let wsum: Vec<f64> = (0..r).map(|i| w.row(i).sum()).collect();
    let sys = BoundarySystem {
        pde,
        w: &w,
        wsum: &wsum,
        coeffs: &coeffs,
        r,
        dx,
        dt,
        side,
        known,
        constraints: stage_constraints(cond, tab, t_south, dt)?,
    };

    let dim = sys.dim();
    let mut u = vec![0.0; dim];
    // Initial guess: mirror the known edge onto the stages and the exterior.
    for j in 0..r {
        for i in 0..r {
            let o = (j * r + i) * n;
            let src = match side {
                Side::Left => known.node(i),
                Side::Right => known.node(j),
            };
            u[o..o + n].copy_from_slice(src);
        }
    }
    for k in 0..r {
        let o = r * r * n + k * n;
        u[o..o + n].copy_from_slice(known.node(k));
    }

    let mut ws = NewtonWorkspace::new(dim, r, n);
    let (iterations, _) = newton_solve(&sys, &mut u, cfg, None, &mut ws)?;

    let mut stages = StageBlock::zeros(r, n);
    stages.z.copy_from_slice(&u[..r * r * n]);
    sys.stage_derivatives(&u, &mut stages.x, &mut stages.t);
    let exterior_vals = &u[r * r * n..];

    let mut edge = EdgeData::zeros(r, n);
    let mut exterior = EdgeData::zeros(r, n);
    exterior.values.copy_from_slice(exterior_vals);
    for i in 0..r {
        for d in 0..n {
            match side {
                // Interior upper edge of a left phantom is the right edge:
                // z_r^i = z_l^i + Σ_k b_k X_k^i with z_l the recovered
                // exterior edge.
                Side::Left => {
                    let mut v = exterior_vals[i * n + d];
                    for k in 0..r {
                        v += tab.b[k] * stages.x[(i * r + k) * n + d];
                    }
                    edge.values[i * n + d] = v;
                }
                // Interior upper edge of a right phantom is the top edge:
                // z_t^i = z_b^i + Σ_k b_k T_i^k.
                Side::Right => {
                    let mut v = exterior_vals[i * n + d];
                    for k in 0..r {
                        v += tab.b[k] * stages.t[(k * r + i) * n + d];
                    }
                    edge.values[i * n + d] = v;
                }
            }
        }
    }
    Ok(PhantomSolve {
        edge,
        exterior,
        stages,
        iterations,
    })
}

/// Solves the phantom diamond straddling `x = a`. `bottom` is the aligned
/// row's first up edge; the returned edge is the new offset row's first
/// down edge.
#[allow(clippy::too_many_arguments)]
pub fn solve_left_phantom(
    pde: &Arc<PDESystem>,
    tab: &RKTableau,
    tc: &TransformedCoeffs,
    cfg: &SolverConfig,
    cond: &EdgeCondition,
    bottom: &EdgeData,
    t_south: f64,
    dx: f64,
    dt: f64,
) -> Result<PhantomSolve> {
    solve_phantom(Side::Left, pde, tab, tc, cfg, cond, bottom, t_south, dx, dt)
}

/// Solves the phantom diamond straddling `x = b`. `left` is the aligned
/// row's last down edge; the returned edge is the new offset row's last
/// up edge.
#[allow(clippy::too_many_arguments)]
pub fn solve_right_phantom(
    pde: &Arc<PDESystem>,
    tab: &RKTableau,
    tc: &TransformedCoeffs,
    cfg: &SolverConfig,
    cond: &EdgeCondition,
    left: &EdgeData,
    t_south: f64,
    dx: f64,
    dt: f64,
) -> Result<PhantomSolve> {
    solve_phantom(Side::Right, pde, tab, tc, cfg, cond, left, t_south, dx, dt)
}
