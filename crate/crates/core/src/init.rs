//! The zig-zag mesh row and the three ways to populate it at `t = 0`.
//!
//! The integrator's state between half-steps is one zig-zag row of `2N`
//! slanted edges alternating between valleys and peaks, each holding `r`
//! collocation nodes. Rows alternate between two layouts: `Aligned` rows
//! have valleys at the cell boundaries `a + i·Δx`, `Offset` rows at the cell
//! centers `a + (i+½)·Δx`. Every edge is stored from its valley upward, the
//! orientation in which diamond solves consume and produce it.
//!
//! Three initializers build the first aligned row:
//!
//! * [`init_exact`] samples a known solution on the slanted edges — simple,
//!   but it needs data above `t = 0`.
//! * [`init_diamond`] solves collocation systems on triangles whose bases
//!   lie on `t = 0`, using only initial data; the triangle-to-square map is
//!   nonlinear, so the transformed coefficients vary per stage.
//! * [`init_phantom`] solves diamonds whose south corners dip below `t = 0`,
//!   with both lower edges unknown and the initial data imposed where the
//!   line `t = 0` crosses the stage grid (the anti-diagonal).

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::pde::{EdgeData, MeshConfig, PDESystem, SolverConfig, StageBlock};
use crate::problems::{wave_system, WaveProblem};
use crate::solver::{newton_solve, DiamondSolver, NewtonSystem, NewtonWorkspace, Scratch, StageCoeffs};
use crate::tableau::RKTableau;

/// Which of the two interleaved row positions the state occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowLayout {
    /// Valleys at cell boundaries `a + i·Δx`.
    Aligned,
    /// Valleys at cell centers `a + (i+½)·Δx`.
    Offset,
}

/// One zig-zag row: the complete state of the integrator between half-steps.
#[derive(Debug, Clone)]
pub struct ZigZagState {
    pub mesh: MeshConfig,
    pub r: usize,
    pub n: usize,
    pub layout: RowLayout,
    /// Time of the row's valleys; peaks sit at `row_time + Δt/2`.
    pub row_time: f64,
    /// Collocation nodes `c_1..c_r` (cached from the tableau).
    pub nodes: Vec<f64>,
    /// `2N` edges. In an aligned row, edge `2i` rises from valley `i` and
    /// edge `2i+1` descends into valley `i+1`; in an offset row, edge `2i`
    /// descends into valley `i` and edge `2i+1` rises from it.
    pub edges: Vec<EdgeData>,
}

impl ZigZagState {
    /// An all-zero row.
    pub fn zeros(mesh: MeshConfig, tab: &RKTableau, n: usize, layout: RowLayout, row_time: f64) -> Self {
        ZigZagState {
            mesh,
            r: tab.r,
            n,
            layout,
            row_time,
            nodes: tab.c.iter().copied().collect(),
            edges: vec![EdgeData::zeros(tab.r, n); 2 * mesh.n_cells],
        }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Valley endpoint and valley-to-peak direction of an edge.
    pub fn edge_origin(&self, edge: usize) -> ((f64, f64), (f64, f64)) {
        let m = &self.mesh;
        let i = edge / 2;
        let (hx, ht) = (0.5 * m.dx, 0.5 * m.dt);
        match (self.layout, edge % 2) {
            (RowLayout::Aligned, 0) => ((m.a + i as f64 * m.dx, self.row_time), (hx, ht)),
            (RowLayout::Aligned, _) => ((m.a + (i + 1) as f64 * m.dx, self.row_time), (-hx, ht)),
            (RowLayout::Offset, 0) => ((m.a + (i as f64 + 0.5) * m.dx, self.row_time), (-hx, ht)),
            (RowLayout::Offset, _) => ((m.a + (i as f64 + 0.5) * m.dx, self.row_time), (hx, ht)),
        }
    }

    /// Space-time position of collocation node `k` on an edge.
    pub fn node_point(&self, edge: usize, k: usize) -> (f64, f64) {
        let ((x0, t0), (dx, dt)) = self.edge_origin(edge);
        (x0 + self.nodes[k] * dx, t0 + self.nodes[k] * dt)
    }

    /// Whether an edge rises to the right.
    pub fn is_up_edge(&self, edge: usize) -> bool {
        match self.layout {
            RowLayout::Aligned => edge.is_multiple_of(2),
            RowLayout::Offset => !edge.is_multiple_of(2),
        }
    }

    /// Indices of the `N` up edges, left to right.
    pub fn up_edges(&self) -> impl Iterator<Item = usize> + '_ {
        let parity = match self.layout {
            RowLayout::Aligned => 0,
            RowLayout::Offset => 1,
        };
        (0..self.mesh.n_cells).map(move |i| 2 * i + parity)
    }
}

/// Samples a known solution on every edge node of the first aligned row.
pub fn init_exact(pde: &PDESystem, mesh: MeshConfig, tab: &RKTableau) -> Result<ZigZagState> {
    let mut state = ZigZagState::zeros(mesh, tab, pde.n, RowLayout::Aligned, 0.0);
    for e in 0..state.edge_count() {
        for k in 0..tab.r {
            let (x, t) = state.node_point(e, k);
            pde.exact_at(x, t, state.edges[e].node_mut(k))?;
        }
    }
    Ok(state)
}

/// Builds the first aligned row by solving one triangle per cell, using
/// only data on `t = 0`.
///
/// The triangle over cell `i` has base `[a + i·Δx, a + (i+1)·Δx]` and apex
/// at the cell-center peak. Its square pullback reads the left half of the
/// base as the left edge and the right half as the bottom edge, and returns
/// the slanted sides as the row's edges.
pub fn init_diamond(
    pde: &Arc<PDESystem>,
    mesh: MeshConfig,
    tab: &RKTableau,
    cfg: &SolverConfig,
) -> Result<ZigZagState> {
    let coeffs = StageCoeffs::triangle(pde, mesh.dx, mesh.dt, tab)?;
    let mut solver = DiamondSolver::new(Arc::clone(pde), tab, coeffs, *cfg)?;
    let mut state = ZigZagState::zeros(mesh, tab, pde.n, RowLayout::Aligned, 0.0);
    let mut left = EdgeData::zeros(tab.r, pde.n);
    let mut bottom = EdgeData::zeros(tab.r, pde.n);
    for cell in 0..mesh.n_cells {
        let xc = mesh.a + (cell as f64 + 0.5) * mesh.dx;
        for k in 0..tab.r {
            pde.exact_at(xc - 0.5 * mesh.dx * tab.c[k], 0.0, left.node_mut(k))?;
            pde.exact_at(xc + 0.5 * mesh.dx * tab.c[k], 0.0, bottom.node_mut(k))?;
        }
        let (right, top, _) = solver.solve(&left, &bottom).map_err(|e| {
            Error::InvalidState(format!("triangle initialization failed on cell {cell}: {e}"))
        })?;
        state.edges[2 * cell] = top;
        state.edges[2 * cell + 1] = right;
    }
    Ok(state)
}

/// The enlarged stage system of one phantom initialization diamond.
///
/// Unknowns are `[Z | z_left | z_bottom]`; residual rows are the `r²·n`
/// collocation equations followed by six data constraints at each of the
/// `r` anti-diagonal stages `(c_i, c_{r+1-i})`, which lie on `t = 0`.
struct PhantomInitSystem<'a> {
    pde: &'a PDESystem,
    w: &'a DMatrix<f64>,
    wsum: &'a [f64],
    coeffs: &'a StageCoeffs,
    r: usize,
    dx: f64,
    dt: f64,
    /// Initial data at the anti-diagonal stage abscissas: `(z0, u_tx, u_xx)`.
    data: Vec<([f64; 3], f64, f64)>,
}

impl PhantomInitSystem<'_> {
    const N: usize = 3;

    fn z_len(&self) -> usize {
        self.r * self.r * Self::N
    }

    fn stage_derivatives(&self, u: &[f64], x: &mut [f64], t: &mut [f64]) {
        let (r, n) = (self.r, Self::N);
        let zl = &u[self.z_len()..self.z_len() + r * n];
        let zb = &u[self.z_len() + r * n..];
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

impl NewtonSystem for PhantomInitSystem<'_> {
    fn dim(&self) -> usize {
        self.z_len() + 2 * self.r * Self::N
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
            let j = r - 1 - i;
            let o = (j * r + i) * n;
            let (z0, utx, uxx) = &self.data[i];
            let row = base + 6 * i;
            out[row] = u[o] - z0[0];
            out[row + 1] = u[o + 1] - z0[1];
            out[row + 2] = u[o + 2] - z0[2];
            out[row + 3] = scratch.x[o + 1] - scratch.t[o + 1] - self.dx * utx;
            out[row + 4] = scratch.x[o + 2] - scratch.t[o + 2] - self.dx * uxx;
            out[row + 5] = scratch.x[o + 2] + scratch.t[o + 2] - self.dt * utx;
        }
    }

    fn jacobian(&self, u: &[f64], out: &mut DMatrix<f64>, scratch: &mut Scratch) {
        let (r, n) = (self.r, Self::N);
        let zl0 = self.z_len();
        let zb0 = zl0 + r * n;
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
                // Dependence of X on the unknown left edge and of T on the
                // unknown bottom edge.
                for d in 0..n {
                    for e in 0..n {
                        out[(row0 + d, zl0 + j * n + e)] -= self.wsum[i] * lc[d * n + e];
                        out[(row0 + d, zb0 + i * n + e)] -= self.wsum[j] * kc[d * n + e];
                    }
                }
            }
        }
        for i in 0..r {
            let j = r - 1 - i;
            let o = (j * r + i) * n;
            let row = self.z_len() + 6 * i;
            // Pinned stage values.
            for d in 0..3 {
                out[(row + d, o + d)] = 1.0;
            }
            // Derivative constraints: rows couple to Z through W and to the
            // unknown edges through the row sums.
            for p in 0..r {
                let wip = self.w[(i, p)];
                let wjp = self.w[(j, p)];
                // X component: stages (p, j); T component: stages (i, p).
                let colx = (j * r + p) * n;
                let colt = (p * r + i) * n;
                out[(row + 3, colx + 1)] += wip;
                out[(row + 3, colt + 1)] -= wjp;
                out[(row + 4, colx + 2)] += wip;
                out[(row + 4, colt + 2)] -= wjp;
                out[(row + 5, colx + 2)] += wip;
                out[(row + 5, colt + 2)] += wjp;
            }
            out[(row + 3, zl0 + j * n + 1)] -= self.wsum[i];
            out[(row + 3, zb0 + i * n + 1)] += self.wsum[j];
            out[(row + 4, zl0 + j * n + 2)] -= self.wsum[i];
            out[(row + 4, zb0 + i * n + 2)] += self.wsum[j];
            out[(row + 5, zl0 + j * n + 2)] -= self.wsum[i];
            out[(row + 5, zb0 + i * n + 2)] -= self.wsum[j];
        }
    }

    fn context(&self) -> &'static str {
        "phantom initialization diamond"
    }
}

/// Builds the first aligned row by solving one phantom diamond per cell.
///
/// Each diamond is centered on a cell with its south corner at
/// `t = -Δt/2`. Both lower edges join the stage values as unknowns; the
/// initial data `u, u_t, u_x` pins the stages on the `t = 0` anti-diagonal,
/// and `u_tx, u_xx` pin the stage derivatives there.
pub fn init_phantom(
    problem: &Arc<WaveProblem>,
    mesh: MeshConfig,
    tab: &RKTableau,
    cfg: &SolverConfig,
) -> Result<ZigZagState> {
    let pde = Arc::new(wave_system(problem)?);
    let tc = crate::pde::transform_coeffs(&pde, mesh.dx, mesh.dt)?;
    let coeffs = StageCoeffs::uniform(&tc, tab.r);
    let w = tab.a_inverse()?;
    let wsum: Vec<f64> = (0..tab.r).map(|i| w.row(i).sum()).collect();
    let (r, n) = (tab.r, 3usize);
    let dim = r * r * n + 2 * r * n;
    let mut ws = NewtonWorkspace::new(dim, r, n);
    let mut state = ZigZagState::zeros(mesh, tab, n, RowLayout::Aligned, 0.0);
    let mut u = vec![0.0; dim];

    for cell in 0..mesh.n_cells {
        let xc = mesh.a + (cell as f64 + 0.5) * mesh.dx;
        let data: Vec<([f64; 3], f64, f64)> = (0..r)
            .map(|i| {
                let x = xc + 0.5 * mesh.dx * (2.0 * tab.c[i] - 1.0);
                let mut z0 = [0.0; 3];
                problem.state(x, 0.0, &mut z0);
                (z0, problem.u_tx(x, 0.0), problem.u_xx(x, 0.0))
            })
            .collect();
        let sys = PhantomInitSystem {
            pde: &pde,
            w: &w,
            wsum: &wsum,
            coeffs: &coeffs,
            r,
            dx: mesh.dx,
            dt: mesh.dt,
            data,
        };

        // Initial guess: initial data at each unknown's spatial abscissa.
        for j in 0..r {
            for i in 0..r {
                let x = xc + 0.5 * mesh.dx * (tab.c[i] - tab.c[j]);
                let o = (j * r + i) * n;
                problem.state(x, 0.0, &mut u[o..o + n]);
            }
        }
        for k in 0..r {
            let zl = r * r * n + k * n;
            let zb = r * r * n + r * n + k * n;
            problem.state(xc - 0.5 * mesh.dx * tab.c[k], 0.0, &mut u[zl..zl + n]);
            problem.state(xc + 0.5 * mesh.dx * tab.c[k], 0.0, &mut u[zb..zb + n]);
        }

        newton_solve(&sys, &mut u, cfg, None, &mut ws).map_err(|e| {
            Error::InvalidState(format!("phantom initialization failed on cell {cell}: {e}"))
        })?;

        // Quadrature updates from the recovered lower edges.
        let mut stages = StageBlock::zeros(r, n);
        stages.z.copy_from_slice(&u[..r * r * n]);
        sys.stage_derivatives(&u, &mut stages.x, &mut stages.t);
        let zl = &u[r * r * n..r * r * n + r * n];
        let zb = &u[r * r * n + r * n..];
        let (top, right_edge) = {
            let (head, tail) = state.edges.split_at_mut(2 * cell + 1);
            (&mut head[2 * cell], &mut tail[0])
        };
        for i in 0..r {
            for d in 0..n {
                let mut zt = zb[i * n + d];
                let mut zr = zl[i * n + d];
                for k in 0..r {
                    zt += tab.b[k] * stages.t[(k * r + i) * n + d];
                    zr += tab.b[k] * stages.x[(i * r + k) * n + d];
                }
                top.values[i * n + d] = zt;
                right_edge.values[i * n + d] = zr;
            }
        }
    }
    Ok(state)
}
