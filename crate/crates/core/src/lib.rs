//! A multisymplectic integrator for PDEs `K z_t + L z_x = ∇S(z)` on a
//! diamond space-time mesh.
//!
//! Space-time is tiled with diamonds; each one is mapped to a unit square
//! and discretized by a Gauss–Runge–Kutta method in both directions. A
//! diamond's two lower edges determine its two upper edges through a local
//! implicit solve, so a whole row of diamonds can be advanced independently
//! — the basis of the ring-parallel executor. The crate provides the
//! tableaus, the diamond solve, mesh initialization (exact, triangle, and
//! phantom-diamond starts), periodic and Dirichlet/Neumann boundary
//! treatments, the time loop, conservation and convergence diagnostics, and
//! the parallel driver.

pub mod boundary;
pub mod diagnostics;
pub mod error;
pub mod init;
pub mod parallel;
pub mod pde;
pub mod problems;
pub mod solver;
pub mod tableau;
pub mod timeloop;

pub use boundary::{
    periodic_wrap, solve_left_phantom, solve_right_phantom, BoundarySpec, EdgeCondition,
    PhantomSolve,
};
pub use error::{Error, Result};
pub use pde::{
    transform_coeffs, EdgeData, JacobianMode, MeshConfig, PDESystem, SolverConfig, StageBlock,
    TransformedCoeffs,
};
pub use parallel::{fit_serial_fraction, partition, run_parallel, SpeedupModel};
pub use timeloop::{InitKind, RunReport, Simulation, Snapshot, Stepper};
pub use solver::{
    corner_values, solve_diamond, CornerValues, DiamondEdges, DiamondSolver, SolverStats,
    StageCoeffs,
};
pub use tableau::{gauss_tableau, RKTableau};
