//! Data-parallel time stepping over contiguous cell blocks.
//!
//! The diamonds of one half-step are independent, so a row can be advanced
//! by `p` workers that each own a contiguous block of cells. A worker only
//! ever needs one edge from each neighbour per half-step:
//!
//! * before an aligned half-step, the first aligned edge of the right
//!   neighbour's block (sent leftward after the previous half-step);
//! * before an offset half-step, the last offset edge produced by the left
//!   neighbour (sent rightward right after it is produced).
//!
//! Workers exchange these edges over channels in lockstep, so no barrier is
//! needed for correctness; one barrier pair around the stepping loop gives
//! a wall time comparable to the serial loop. On a bounded domain the first
//! and last workers run the boundary phantoms instead of talking to a
//! neighbour; on a periodic domain the exchange wraps into a ring.
//!
//! Every worker repeats the exact arithmetic the serial stepper would
//! perform on its diamonds — same frozen factorization, same evaluation
//! order within a diamond — so a parallel run is bitwise identical to the
//! serial one.

use std::sync::mpsc::{Receiver, Sender};
use std::sync::{mpsc, Arc, Barrier};
use std::time::Instant;

use crate::diagnostics::error_norm;
use crate::error::{Error, Result};
use crate::init::{RowLayout, ZigZagState};
use crate::pde::EdgeData;
use crate::problems::wave_system;
use crate::solver::SolverStats;
use crate::tableau::gauss_tableau;
use crate::timeloop::{RunReport, Simulation, Stepper};

/// Splits `n` cells into `p` contiguous block sizes differing by at most
/// one, smaller blocks first.
pub fn partition(n: usize, p: usize) -> Result<Vec<usize>> {
    if p == 0 {
        return Err(Error::invalid("worker count must be at least 1"));
    }
    if p > n {
        return Err(Error::invalid(format!(
            "cannot split {n} cells across {p} workers"
        )));
    }
    let k = n / p;
    let rem = n % p;
    Ok((0..p).map(|w| if w < p - rem { k } else { k + 1 }).collect())
}

/// Amdahl's law fitted to measured wall times.
#[derive(Debug, Clone, Copy)]
pub struct SpeedupModel {
    /// Single-worker wall time.
    pub t1: f64,
    /// Fitted serial fraction `B` of `T(p) = T₁(B + (1 − B)/p)`.
    pub serial_fraction: f64,
}

impl SpeedupModel {
    pub fn predict(&self, workers: usize) -> f64 {
        self.t1 * (self.serial_fraction + (1.0 - self.serial_fraction) / workers as f64)
    }

    pub fn speedup(&self, workers: usize) -> f64 {
        self.t1 / self.predict(workers)
    }
}

/// Least-squares fit of the serial fraction from `(workers, seconds)`
/// samples; one sample must have `workers == 1`. The fit is clamped to
/// `[0, 1]`.
pub fn fit_serial_fraction(samples: &[(usize, f64)]) -> Result<SpeedupModel> {
    let t1 = samples
        .iter()
        .find(|(w, _)| *w == 1)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::invalid("speedup fit needs a single-worker sample"))?;
    if !t1.is_finite() || t1 <= 0.0 {
        return Err(Error::invalid("single-worker time must be positive"));
    }
    // T(p) − T₁/p = B·T₁(1 − 1/p) is linear through the origin in B.
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for &(w, t) in samples.iter().filter(|(w, _)| *w > 1) {
        let inv = 1.0 / w as f64;
        let x = t1 * (1.0 - inv);
        let y = t - t1 * inv;
        sxy += x * y;
        sxx += x * x;
    }
    if sxx == 0.0 {
        return Err(Error::invalid(
            "speedup fit needs a sample with more than one worker",
        ));
    }
    Ok(SpeedupModel {
        t1,
        serial_fraction: (sxy / sxx).clamp(0.0, 1.0),
    })
}

const NEIGHBOUR_ABORT: &str = "a neighbouring worker aborted";

/// Channel ends of one worker; dropped on abort so neighbours unblock.
struct WorkerLinks {
    to_left: Option<Sender<Vec<f64>>>,
    to_right: Option<Sender<Vec<f64>>>,
    from_left: Option<Receiver<Vec<f64>>>,
    from_right: Option<Receiver<Vec<f64>>>,
}

struct WorkerOutcome {
    state: ZigZagState,
    stats: SolverStats,
}

/// One worker's whole run: `total` half-steps over the block of `s` cells
/// starting at cell `q`, exchanging edges with neighbours in lockstep.
#[allow(clippy::too_many_arguments)]
fn worker_loop(
    w: usize,
    q: usize,
    s: usize,
    links: WorkerLinks,
    stepper: &mut Stepper,
    state: &mut ZigZagState,
    workers: usize,
    periodic: bool,
    total: usize,
) -> Result<()> {
    let n_cells = state.mesh.n_cells;
    let en = 2 * n_cells;
    let r = state.edges[0].r;
    let nc = state.edges[0].n;
    let dt = state.mesh.dt;
    let at = |half_step: usize, i: usize, e: Error, row_time: f64| match e {
        Error::AbortedRun { .. } => e,
        e => Error::AbortedRun {
            worker: w,
            half_step,
            message: format!("diamond {i} at row time {row_time:.6}: {e}"),
        },
    };
    let recv = |rx: &Option<Receiver<Vec<f64>>>, half_step: usize| -> Result<Option<Vec<f64>>> {
        match rx {
            None => Ok(None),
            Some(rx) => rx.recv().map(Some).map_err(|_| Error::AbortedRun {
                worker: w,
                half_step,
                message: NEIGHBOUR_ABORT.into(),
            }),
        }
    };
    let send = |tx: &Option<Sender<Vec<f64>>>, edge: &EdgeData| {
        if let Some(tx) = tx {
            // A send only fails when the receiver is gone, i.e. the
            // neighbour already aborted; the next recv reports that.
            let _ = tx.send(edge.values.clone());
        }
    };

    // Initial leftward exchange: workers with a left neighbour hand over
    // their first aligned edge so the neighbour can solve its last diamond.
    send(&links.to_left, &state.edges[2 * q]);
    if let Some(vals) = recv(&links.from_right, 0)? {
        state.edges[2 * ((q + s) % n_cells)].values = vals;
    }

    for hs in 0..total {
        let mut new_edges = vec![EdgeData::zeros(r, nc); en];
        match state.layout {
            RowLayout::Aligned => {
                // Diamonds q+1 ..= q+s sit on the valleys; the domain ends
                // are phantoms (bounded) or the wraparound diamond
                // (periodic, folded into the last block via the modulo).
                let row_time = state.row_time;
                let first_interior = if !periodic && w == 0 {
                    new_edges[0] = stepper
                        .solve_left_bc(&state.edges[0], row_time)
                        .map_err(|e| at(hs, 0, e, row_time))?;
                    1
                } else {
                    q + 1
                };
                let last_interior = if !periodic && w == workers - 1 {
                    new_edges[en - 1] = stepper
                        .solve_right_bc(&state.edges[en - 1], row_time)
                        .map_err(|e| at(hs, n_cells, e, row_time))?;
                    n_cells - 1
                } else {
                    q + s
                };
                for i in first_interior..=last_interior {
                    let im = i % n_cells;
                    let left = &state.edges[(2 * im + en - 1) % en];
                    let bottom = &state.edges[2 * im];
                    let (right, top) = stepper
                        .solve_interior(left, bottom)
                        .map_err(|e| at(hs, im, e, row_time))?;
                    new_edges[(2 * im + en - 1) % en] = top;
                    new_edges[2 * im] = right;
                }
                // The last offset edge of this block starts the right
                // neighbour's next offset half-step.
                send(&links.to_right, &new_edges[2 * ((q + s) % n_cells)]);
                if let Some(vals) = recv(&links.from_left, hs)? {
                    new_edges[2 * q].values = vals;
                }
                state.layout = RowLayout::Offset;
            }
            RowLayout::Offset => {
                for j in q..q + s {
                    let (right, top) = stepper
                        .solve_interior(&state.edges[2 * j], &state.edges[2 * j + 1])
                        .map_err(|e| at(hs, j, e, state.row_time))?;
                    new_edges[2 * j] = top;
                    new_edges[2 * j + 1] = right;
                }
                // The first aligned edge of this block feeds the left
                // neighbour's last diamond in the next aligned half-step.
                send(&links.to_left, &new_edges[2 * q]);
                if let Some(vals) = recv(&links.from_right, hs)? {
                    new_edges[2 * ((q + s) % n_cells)].values = vals;
                }
                state.layout = RowLayout::Aligned;
            }
        }
        state.edges = new_edges;
        state.row_time += 0.5 * dt;
    }
    Ok(())
}

/// Runs a simulation with `workers` threads, each owning a contiguous cell
/// block. The report matches [`Simulation::run`] bit for bit (snapshots are
/// not captured); `wall_seconds` covers the stepping loop only.
pub fn run_parallel(sim: &Simulation, workers: usize) -> Result<RunReport> {
    let mesh = *sim.mesh();
    let sizes = partition(mesh.n_cells, workers)?;
    if workers == 1 {
        // One worker is exactly the serial stepper; skip the thread
        // machinery (and its channels) entirely.
        let mut report = sim.clone().with_snapshots(0).run()?;
        report.snapshots.clear();
        return Ok(report);
    }
    let tab = gauss_tableau(sim.r)?;
    let pde = Arc::new(wave_system(sim.problem())?);
    let total = mesh.half_steps_to(sim.t_final)?;
    let periodic = sim.bc_spec()?.is_periodic();
    let warnings = sim.cfl_warnings();
    let initial = sim.initial_state(&pde, &tab)?;

    // Offsets q_w of each block.
    let mut offsets = Vec::with_capacity(workers);
    let mut acc = 0;
    for s in &sizes {
        offsets.push(acc);
        acc += s;
    }

    // Rightward channels (offset-edge handoff) and leftward channels
    // (aligned-edge handoff); bounded domains leave the ends unconnected.
    let mut to_right: Vec<Option<Sender<Vec<f64>>>> = (0..workers).map(|_| None).collect();
    let mut from_left: Vec<Option<Receiver<Vec<f64>>>> = (0..workers).map(|_| None).collect();
    let mut to_left: Vec<Option<Sender<Vec<f64>>>> = (0..workers).map(|_| None).collect();
    let mut from_right: Vec<Option<Receiver<Vec<f64>>>> = (0..workers).map(|_| None).collect();
    for w in 0..workers {
        if periodic || w + 1 < workers {
            let (tx, rx) = mpsc::channel();
            to_right[w] = Some(tx);
            from_left[(w + 1) % workers] = Some(rx);
        }
        if periodic || w > 0 {
            let (tx, rx) = mpsc::channel();
            to_left[w] = Some(tx);
            from_right[(w + workers - 1) % workers] = Some(rx);
        }
    }

    let barrier = Barrier::new(workers + 1);
    let mut results: Vec<Result<WorkerOutcome>> = Vec::new();
    let mut wall_seconds = 0.0;

    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(workers);
        for w in 0..workers {
            let links = WorkerLinks {
                to_left: to_left[w].take(),
                to_right: to_right[w].take(),
                from_left: from_left[w].take(),
                from_right: from_right[w].take(),
            };
            let (q, s) = (offsets[w], sizes[w]);
            let pde = Arc::clone(&pde);
            let tab = tab.clone();
            let sim = sim.clone();
            let mut state = initial.clone();
            let barrier = &barrier;
            handles.push(scope.spawn(move || {
                // Setup must not return before the barriers: even on
                // failure the worker checks in, so the clock and the other
                // workers are released.
                let setup = sim
                    .bc_spec()
                    .and_then(|bc| Stepper::new(pde, &tab, mesh, bc, sim.cfg));
                barrier.wait();
                let outcome = match setup {
                    Ok(mut stepper) => worker_loop(
                        w,
                        q,
                        s,
                        links,
                        &mut stepper,
                        &mut state,
                        workers,
                        periodic,
                        total,
                    )
                    .map(|()| WorkerOutcome { state, stats: stepper.stats() }),
                    Err(e) => Err(e),
                };
                barrier.wait();
                outcome
            }));
        }
        barrier.wait();
        let start = Instant::now();
        barrier.wait();
        wall_seconds = start.elapsed().as_secs_f64();
        for handle in handles {
            results.push(match handle.join() {
                Ok(r) => r,
                Err(_) => Err(Error::InvalidState("worker thread panicked".into())),
            });
        }
    });

    // Split outcomes from failures; report a primary failure over the
    // cascade reports of its neighbours.
    let mut errors = Vec::new();
    let mut outcomes = Vec::with_capacity(workers);
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => errors.push(e),
        }
    }
    if !errors.is_empty() {
        let primary = errors.iter().position(|e| {
            !matches!(e, Error::AbortedRun { message, .. } if message == NEIGHBOUR_ABORT)
        });
        return Err(errors.swap_remove(primary.unwrap_or(0)));
    }

    // Stitch the blocks' home ranges into the final row.
    let mut state = outcomes[0].state.clone();
    let mut stats = SolverStats::default();
    for (w, outcome) in outcomes.iter().enumerate() {
        for e in 2 * offsets[w]..2 * (offsets[w] + sizes[w]) {
            state.edges[e] = outcome.state.edges[e].clone();
        }
        stats.absorb(&outcome.stats);
    }
    let error = error_norm(&state, &pde)?;

    Ok(RunReport {
        state,
        error,
        wall_seconds,
        half_steps: total,
        stats,
        snapshots: Vec::new(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{MeshConfig, SolverConfig};
    use crate::problems::sample_problem;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn partition_splits_evenly() {
        assert_eq!(partition(10, 3).unwrap(), vec![3, 3, 4]);
        assert_eq!(partition(12, 4).unwrap(), vec![3, 3, 3, 3]);
        assert_eq!(partition(5, 1).unwrap(), vec![5]);
        assert!(partition(4, 0).is_err());
        assert!(partition(3, 4).is_err());
    }

    proptest! {
        #[test]
        fn partition_covers_all_cells(n in 1usize..200, p in 1usize..16) {
            prop_assume!(p <= n);
            let sizes = partition(n, p).unwrap();
            prop_assert_eq!(sizes.len(), p);
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            let (min, max) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(max - min <= 1);
            prop_assert!(*min >= 1);
        }
    }

    #[test]
    fn amdahl_fit_recovers_a_synthetic_model() {
        let t = |p: usize| 2.0 * (0.2 + 0.8 / p as f64);
        let samples: Vec<(usize, f64)> = [1, 2, 4, 8].iter().map(|&p| (p, t(p))).collect();
        let model = fit_serial_fraction(&samples).unwrap();
        assert_abs_diff_eq!(model.t1, 2.0);
        assert_abs_diff_eq!(model.serial_fraction, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(model.predict(4), t(4), epsilon = 1e-12);
        assert_abs_diff_eq!(model.speedup(4), t(1) / t(4), epsilon = 1e-12);
    }

    #[test]
    fn amdahl_fit_clamps_and_validates() {
        // Slowdown with more workers pushes B above 1: clamped.
        let model = fit_serial_fraction(&[(1, 1.0), (2, 2.0), (4, 3.0)]).unwrap();
        assert_abs_diff_eq!(model.serial_fraction, 1.0);
        // Perfect scaling pins B at 0.
        let model = fit_serial_fraction(&[(1, 1.0), (2, 0.5), (4, 0.25)]).unwrap();
        assert_abs_diff_eq!(model.serial_fraction, 0.0, epsilon = 1e-12);
        assert!(fit_serial_fraction(&[(2, 1.0), (4, 0.6)]).is_err());
        assert!(fit_serial_fraction(&[(1, 1.0)]).is_err());
    }

    fn check_bitwise_match(sim: &Simulation, workers: usize) {
        let serial = sim.run().unwrap();
        let parallel = run_parallel(sim, workers).unwrap();
        assert_eq!(serial.half_steps, parallel.half_steps);
        assert_eq!(serial.stats.solves, parallel.stats.solves);
        assert_eq!(serial.error.to_bits(), parallel.error.to_bits());
        assert_eq!(serial.state.layout, parallel.state.layout);
        for (es, ep) in serial.state.edges.iter().zip(parallel.state.edges.iter()) {
            for (vs, vp) in es.values.iter().zip(ep.values.iter()) {
                assert_eq!(vs.to_bits(), vp.to_bits());
            }
        }
    }

    #[test]
    fn periodic_parallel_runs_match_serial_bitwise() {
        let problem = sample_problem("SineGordon").unwrap();
        let mesh = MeshConfig::with_courant(problem.a, problem.b, 12, 0.5).unwrap();
        let t_final = 0.5 * mesh.dt * 7.0; // odd: ends on an offset row
        let sim = Simulation::new(problem, 2, mesh, t_final);
        for workers in [2, 3, 5] {
            check_bitwise_match(&sim, workers);
        }
    }

    #[test]
    fn bounded_parallel_runs_match_serial_bitwise() {
        let problem = sample_problem("SincosDD").unwrap();
        let mesh = MeshConfig::with_courant(problem.a, problem.b, 11, 0.5).unwrap();
        let t_final = 0.5 * mesh.dt * 6.0;
        let sim = Simulation::new(problem, 3, mesh, t_final);
        for workers in [2, 3, 4] {
            check_bitwise_match(&sim, workers);
        }
    }

    #[test]
    fn single_worker_matches_serial() {
        let problem = sample_problem("Sincos").unwrap();
        let mesh = MeshConfig::with_courant(problem.a, problem.b, 6, 0.5).unwrap();
        let sim = Simulation::new(problem, 1, mesh, mesh.dt);
        check_bitwise_match(&sim, 1);
    }

    #[test]
    fn worker_failures_abort_the_whole_run() {
        let problem = sample_problem("SineGordon").unwrap();
        let mesh = MeshConfig::with_courant(problem.a, problem.b, 8, 0.5).unwrap();
        let cfg = SolverConfig { tol: 1e-30, max_iter: 4, ..SolverConfig::default() };
        let sim = Simulation::new(problem, 2, mesh, mesh.dt).with_solver(cfg);
        let err = run_parallel(&sim, 3).unwrap_err();
        match err {
            Error::AbortedRun { message, .. } => {
                assert!(
                    message.contains("diamond"),
                    "primary failure not reported: {message}"
                );
                assert_ne!(message, NEIGHBOUR_ABORT);
            }
            other => panic!("expected AbortedRun, got {other}"),
        }
    }

    #[test]
    fn worker_count_is_validated() {
        let problem = sample_problem("Sincos").unwrap();
        let mesh = MeshConfig::with_courant(problem.a, problem.b, 4, 0.5).unwrap();
        let sim = Simulation::new(problem, 1, mesh, mesh.dt);
        assert!(run_parallel(&sim, 0).is_err());
        assert!(run_parallel(&sim, 5).is_err());
    }
}
