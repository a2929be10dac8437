//! Time stepping: advancing a zig-zag row by half-steps.
//!
//! A half-step solves one row of diamonds whose lower edges are the current
//! row and whose upper edges form the next row, advancing the row base by
//! `Δt/2` and toggling the layout. From an aligned row the diamonds sit on
//! the valleys; on a bounded domain the first and last valleys lie on the
//! boundary and are handled by phantom diamonds, while a periodic row wraps
//! its first diamond around. From an offset row every diamond is interior,
//! so that direction never touches the boundary.
//!
//! [`Simulation`] bundles a problem, mesh, initializer, and boundary
//! treatment into a reproducible run that reports the final row, its error
//! against the exact solution, Newton statistics, and optional snapshots.

use std::sync::Arc;
use std::time::Instant;

use crate::boundary::{solve_left_phantom, solve_right_phantom, BoundarySpec};
use crate::diagnostics::error_norm;
use crate::error::{Error, Result};
use crate::init::{init_diamond, init_exact, init_phantom, RowLayout, ZigZagState};
use crate::pde::{
    transform_coeffs, EdgeData, MeshConfig, PDESystem, SolverConfig, TransformedCoeffs,
};
use crate::problems::{wave_system, BcKind, WaveProblem};
use crate::solver::{DiamondSolver, SolverStats, StageCoeffs};
use crate::tableau::{gauss_tableau, RKTableau};

/// How the first row is produced from the initial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// Sample the exact solution on the row nodes.
    Exact,
    /// Solve degenerate diamonds (triangles) with both lower edges on `t = 0`.
    Diamond,
    /// Solve phantom diamonds centred below `t = 0`, constrained by the
    /// initial data on their anti-diagonal stages.
    Phantom,
}

/// Advances zig-zag rows for one PDE on one mesh, reusing a single interior
/// solver (and its frozen Jacobian factorization) across all diamonds.
pub struct Stepper {
    pde: Arc<PDESystem>,
    tab: RKTableau,
    mesh: MeshConfig,
    tc: TransformedCoeffs,
    solver: DiamondSolver,
    bc: BoundarySpec,
    cfg: SolverConfig,
    boundary_stats: SolverStats,
}

impl Stepper {
    pub fn new(
        pde: Arc<PDESystem>,
        tab: &RKTableau,
        mesh: MeshConfig,
        bc: BoundarySpec,
        cfg: SolverConfig,
    ) -> Result<Self> {
        bc.validate()?;
        let tc = transform_coeffs(&pde, mesh.dx, mesh.dt)?;
        let solver =
            DiamondSolver::new(Arc::clone(&pde), tab, StageCoeffs::uniform(&tc, tab.r), cfg)?;
        Ok(Stepper {
            pde,
            tab: tab.clone(),
            mesh,
            tc,
            solver,
            bc,
            cfg,
            boundary_stats: SolverStats::default(),
        })
    }

    pub fn boundary(&self) -> &BoundarySpec {
        &self.bc
    }

    /// Newton statistics over interior and phantom solves combined.
    pub fn stats(&self) -> SolverStats {
        let mut s = self.solver.stats;
        s.absorb(&self.boundary_stats);
        s
    }

    /// Solves one interior diamond, returning its (right, top) edges.
    pub(crate) fn solve_interior(
        &mut self,
        left: &EdgeData,
        bottom: &EdgeData,
    ) -> Result<(EdgeData, EdgeData)> {
        let (right, top, _) = self.solver.solve(left, bottom)?;
        Ok((right, top))
    }

    /// Solves the phantom at `x = a`, returning the new row's first edge.
    pub(crate) fn solve_left_bc(&mut self, bottom: &EdgeData, t_south: f64) -> Result<EdgeData> {
        let res = solve_left_phantom(
            &self.pde,
            &self.tab,
            &self.tc,
            &self.cfg,
            &self.bc.left,
            bottom,
            t_south,
            self.mesh.dx,
            self.mesh.dt,
        )?;
        self.record_boundary(res.iterations);
        Ok(res.edge)
    }

    /// Solves the phantom at `x = b`, returning the new row's last edge.
    pub(crate) fn solve_right_bc(&mut self, left: &EdgeData, t_south: f64) -> Result<EdgeData> {
        let res = solve_right_phantom(
            &self.pde,
            &self.tab,
            &self.tc,
            &self.cfg,
            &self.bc.right,
            left,
            t_south,
            self.mesh.dx,
            self.mesh.dt,
        )?;
        self.record_boundary(res.iterations);
        Ok(res.edge)
    }

    fn record_boundary(&mut self, iterations: usize) {
        self.boundary_stats.solves += 1;
        self.boundary_stats.total_iterations += iterations as u64;
        self.boundary_stats.max_iterations = self.boundary_stats.max_iterations.max(iterations);
    }

    /// Advances `state` by one half-step, replacing its edges with the next
    /// row's. Failures identify the diamond that caused them.
    pub fn half_step(&mut self, state: &mut ZigZagState) -> Result<()> {
        let n = self.mesh.n_cells;
        let en = 2 * n;
        if state.edges.len() != en || state.edges[0].r != self.tab.r {
            return Err(Error::InvalidState(
                "row does not match the stepper's mesh and tableau".into(),
            ));
        }
        let at = |i: usize, e: Error| Error::AbortedRun {
            worker: 0,
            half_step: 0,
            message: format!("diamond {i} at row time {:.6}: {e}", state.row_time),
        };
        let mut new_edges = vec![EdgeData::zeros(self.tab.r, self.pde.n); en];
        match state.layout {
            RowLayout::Aligned => {
                if self.bc.is_periodic() {
                    for i in 0..n {
                        let left = &state.edges[(2 * i + en - 1) % en];
                        let bottom = &state.edges[2 * i];
                        let (right, top) =
                            self.solve_interior(left, bottom).map_err(|e| at(i, e))?;
                        new_edges[(2 * i + en - 1) % en] = top;
                        new_edges[2 * i] = right;
                    }
                } else {
                    new_edges[0] = self
                        .solve_left_bc(&state.edges[0], state.row_time)
                        .map_err(|e| at(0, e))?;
                    for i in 1..n {
                        let (right, top) = self
                            .solve_interior(&state.edges[2 * i - 1], &state.edges[2 * i])
                            .map_err(|e| at(i, e))?;
                        new_edges[2 * i - 1] = top;
                        new_edges[2 * i] = right;
                    }
                    new_edges[en - 1] = self
                        .solve_right_bc(&state.edges[en - 1], state.row_time)
                        .map_err(|e| at(n, e))?;
                }
                state.layout = RowLayout::Offset;
            }
            RowLayout::Offset => {
                for j in 0..n {
                    let (right, top) = self
                        .solve_interior(&state.edges[2 * j], &state.edges[2 * j + 1])
                        .map_err(|e| at(j, e))?;
                    new_edges[2 * j] = top;
                    new_edges[2 * j + 1] = right;
                }
                state.layout = RowLayout::Aligned;
            }
        }
        state.edges = new_edges;
        state.row_time += 0.5 * self.mesh.dt;
        Ok(())
    }
}

/// The solution row at one instant of a run, sampled on up-edge nodes.
/// Node `k` lies at `(xs[k], ts[k])` and carries `(us, vs, ws)[k]`, the
/// three wave components `u, u_t, u_x`.
#[derive(Debug, Clone)]
pub struct Snapshot {
    /// Row base time (valley level).
    pub time: f64,
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
    pub us: Vec<f64>,
    pub vs: Vec<f64>,
    pub ws: Vec<f64>,
}

impl Snapshot {
    fn capture(state: &ZigZagState) -> Snapshot {
        let r = state.edges[0].r;
        let count = state.mesh.n_cells * r;
        let mut snap = Snapshot {
            time: state.row_time,
            xs: Vec::with_capacity(count),
            ts: Vec::with_capacity(count),
            us: Vec::with_capacity(count),
            vs: Vec::with_capacity(count),
            ws: Vec::with_capacity(count),
        };
        for edge in state.up_edges() {
            for k in 0..r {
                let (x, t) = state.node_point(edge, k);
                let node = state.edges[edge].node(k);
                snap.xs.push(x);
                snap.ts.push(t);
                snap.us.push(node[0]);
                snap.vs.push(*node.get(1).unwrap_or(&0.0));
                snap.ws.push(*node.get(2).unwrap_or(&0.0));
            }
        }
        snap
    }
}

/// Everything a finished run reports.
#[derive(Debug)]
pub struct RunReport {
    /// The final row.
    pub state: ZigZagState,
    /// Error norm of the final row against the exact solution.
    pub error: f64,
    /// Wall time of the stepping loop (initialization excluded).
    pub wall_seconds: f64,
    pub half_steps: usize,
    pub stats: SolverStats,
    pub snapshots: Vec<Snapshot>,
    pub warnings: Vec<String>,
}

/// A reproducible run: problem, tableau size, mesh, time span, initializer,
/// boundary treatment, and solver settings.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub(crate) problem: Arc<WaveProblem>,
    pub(crate) r: usize,
    pub(crate) mesh: MeshConfig,
    pub(crate) t_final: f64,
    pub(crate) init: InitKind,
    pub(crate) bc_kinds: Option<(BcKind, BcKind)>,
    pub(crate) cfg: SolverConfig,
    pub(crate) snapshots: usize,
}

impl Simulation {
    pub fn new(problem: Arc<WaveProblem>, r: usize, mesh: MeshConfig, t_final: f64) -> Self {
        Simulation {
            problem,
            r,
            mesh,
            t_final,
            init: InitKind::Exact,
            bc_kinds: None,
            cfg: SolverConfig::default(),
            snapshots: 0,
        }
    }

    pub fn with_init(mut self, init: InitKind) -> Self {
        self.init = init;
        self
    }

    /// Overrides the problem's default boundary treatment.
    pub fn with_bc_kinds(mut self, kinds: (BcKind, BcKind)) -> Self {
        self.bc_kinds = Some(kinds);
        self
    }

    pub fn with_solver(mut self, cfg: SolverConfig) -> Self {
        self.cfg = cfg;
        self
    }

    /// Requests `count` snapshots at evenly spaced row times (including the
    /// initial and final rows when `count ≥ 2`).
    pub fn with_snapshots(mut self, count: usize) -> Self {
        self.snapshots = count;
        self
    }

    pub fn mesh(&self) -> &MeshConfig {
        &self.mesh
    }

    pub fn problem(&self) -> &Arc<WaveProblem> {
        &self.problem
    }

    pub(crate) fn bc_spec(&self) -> Result<BoundarySpec> {
        let kinds = self.bc_kinds.unwrap_or(self.problem.default_bcs);
        BoundarySpec::from_problem(&self.problem, kinds)
    }

    pub(crate) fn initial_state(
        &self,
        pde: &Arc<PDESystem>,
        tab: &RKTableau,
    ) -> Result<ZigZagState> {
        match self.init {
            InitKind::Exact => init_exact(pde, self.mesh, tab),
            InitKind::Diamond => init_diamond(pde, self.mesh, tab, &self.cfg),
            InitKind::Phantom => init_phantom(&self.problem, self.mesh, tab, &self.cfg),
        }
    }

    /// Preflight stability warnings for this configuration; [`Simulation::run`]
    /// repeats them in the report, but drivers can emit them before starting.
    pub fn cfl_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        if self.r == 1 && self.mesh.lambda > 1.0 + 1e-12 {
            warnings.push(format!(
                "r = 1 with Courant number {:.3}: the one-stage scheme is only \
                 linearly stable for λ ≤ 1, expect blow-up on long runs",
                self.mesh.lambda
            ));
        }
        warnings
    }

    /// Half-step indices (0 = initial row) at which snapshots are taken.
    fn snapshot_schedule(&self, total: usize) -> Vec<usize> {
        match self.snapshots {
            0 => Vec::new(),
            1 => vec![total],
            k => {
                let mut idx: Vec<usize> = (0..k)
                    .map(|m| ((m as f64 / (k - 1) as f64) * total as f64).round() as usize)
                    .collect();
                idx.dedup();
                idx
            }
        }
    }

    /// Runs the simulation on the current thread.
    pub fn run(&self) -> Result<RunReport> {
        let tab = gauss_tableau(self.r)?;
        let pde = Arc::new(wave_system(&self.problem)?);
        let total = self.mesh.half_steps_to(self.t_final)?;
        let schedule = self.snapshot_schedule(total);
        let warnings = self.cfl_warnings();

        let mut state = self.initial_state(&pde, &tab)?;
        let mut stepper = Stepper::new(Arc::clone(&pde), &tab, self.mesh, self.bc_spec()?, self.cfg)?;

        let mut snapshots = Vec::with_capacity(schedule.len());
        if schedule.first() == Some(&0) {
            snapshots.push(Snapshot::capture(&state));
        }
        let start = Instant::now();
        for s in 0..total {
            match stepper.half_step(&mut state) {
                Ok(()) => {}
                Err(Error::AbortedRun { worker, message, .. }) => {
                    return Err(Error::AbortedRun { worker, half_step: s, message })
                }
                Err(e) => {
                    return Err(Error::AbortedRun {
                        worker: 0,
                        half_step: s,
                        message: e.to_string(),
                    })
                }
            }
            if schedule.contains(&(s + 1)) {
                snapshots.push(Snapshot::capture(&state));
            }
        }
        let wall_seconds = start.elapsed().as_secs_f64();
        let error = error_norm(&state, &pde)?;
        Ok(RunReport {
            state,
            error,
            wall_seconds,
            half_steps: total,
            stats: stepper.stats(),
            snapshots,
            warnings,
        })
    }
}
