//! Acceptance gate: ten end-to-end checks covering tableau algebra,
//! published convergence orders, boundary treatments, the conservation law,
//! long-run boundedness, the parallel executor, and linear stability.
//!
//! Each check prints one `ACCEPTANCE k: PASS` line (visible with
//! `--nocapture`); failures panic with the measured numbers, so the default
//! test report carries one pass/fail line per criterion either way.

use std::sync::Arc;
use std::time::Instant;

use diamond_core::diagnostics::{conservation_residual, conservation_samples, fit_order};
use diamond_core::init::{init_diamond, init_exact, ZigZagState};
use diamond_core::problems::{sample_problem, wave_system, WaveProblem};
use diamond_core::{
    fit_serial_fraction, gauss_tableau, run_parallel, BoundarySpec, DiamondEdges, EdgeData,
    InitKind, MeshConfig, Simulation, SolverConfig, Stepper,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LAMBDA: f64 = 0.5;

/// Runs a refinement sweep at fixed Courant number and fixed final time,
/// returning `(N, h, error)` per mesh.  The target time is snapped to the
/// coarsest mesh's half-step grid (defaulting to two of its time steps), so
/// every doubled mesh reaches it exactly.
fn order_sweep(
    problem: &Arc<WaveProblem>,
    r: usize,
    ns: &[usize],
    t_target: Option<f64>,
    init: InitKind,
) -> Vec<(usize, f64, f64)> {
    let coarse = MeshConfig::with_courant(problem.a, problem.b, ns[0], LAMBDA).unwrap();
    let target = t_target.unwrap_or(2.0 * coarse.dt);
    let half = 0.5 * coarse.dt;
    let t_final = (target / half).round().max(1.0) * half;
    ns.iter()
        .map(|&n| {
            let mesh = MeshConfig::with_courant(problem.a, problem.b, n, LAMBDA).unwrap();
            let report = Simulation::new(Arc::clone(problem), r, mesh, t_final)
                .with_init(init)
                .run()
                .unwrap_or_else(|e| panic!("{} r={r} N={n}: {e}", problem.name));
            (n, mesh.dx, report.error)
        })
        .collect()
}

fn slope(data: &[(usize, f64, f64)]) -> f64 {
    let hs: Vec<f64> = data.iter().map(|d| d.1).collect();
    let es: Vec<f64> = data.iter().map(|d| d.2).collect();
    fit_order(&hs, &es).unwrap().slope
}

fn errors(data: &[(usize, f64, f64)]) -> Vec<f64> {
    data.iter().map(|d| d.2).collect()
}

/// Largest `|u|` over the row's edge nodes.
fn row_sup(state: &ZigZagState) -> f64 {
    let mut sup = 0.0_f64;
    for edge in &state.edges {
        for k in 0..edge.r {
            sup = sup.max(edge.node(k)[0].abs());
        }
    }
    sup
}

/// Max-norm distance between two zig-zag rows.
fn state_distance(a: &ZigZagState, b: &ZigZagState) -> f64 {
    assert_eq!(a.edges.len(), b.edges.len(), "row shapes must match");
    let mut worst = (a.row_time - b.row_time).abs();
    for (ea, eb) in a.edges.iter().zip(&b.edges) {
        for (va, vb) in ea.values.iter().zip(&eb.values) {
            worst = worst.max((va - vb).abs());
        }
    }
    worst
}

#[test]
fn acceptance_01_tableaux_are_symplectic_and_quadrature_exact() {
    let start = Instant::now();
    for r in 1..=6 {
        let tab = gauss_tableau(r).unwrap();
        for i in 0..r {
            for j in 0..r {
                let m = tab.b[i] * tab.a[(i, j)] + tab.b[j] * tab.a[(j, i)] - tab.b[i] * tab.b[j];
                assert!(
                    m.abs() <= 1e-13,
                    "ACCEPTANCE 1: FAIL — r={r} symplecticity defect {:.3e} at ({i},{j})",
                    m.abs()
                );
            }
        }
        for degree in 0..=(2 * r - 1) {
            let quad: f64 = (0..r).map(|i| tab.b[i] * tab.c[i].powi(degree as i32)).sum();
            let exact = 1.0 / (degree as f64 + 1.0);
            assert!(
                (quad - exact).abs() <= 1e-12,
                "ACCEPTANCE 1: FAIL — r={r} quadrature error {:.3e} at degree {degree}",
                (quad - exact).abs()
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "ACCEPTANCE 1: FAIL — tableau checks took {elapsed:.2} s");
    println!(
        "ACCEPTANCE 1: PASS — r=1..6 symplectic to 1e-13, quadrature exact to degree 2r-1 \
         within 1e-12, in {elapsed:.3} s"
    );
}

#[test]
fn acceptance_02_breather_orders_with_exact_initialization() {
    let problem = sample_problem("SineGordon").unwrap();
    let ns = [40, 80, 160, 320];
    let expected = [1.0, 3.0, 3.0];
    let mut violations = Vec::new();
    for (r, want) in (1..=3).zip(expected) {
        let data = order_sweep(&problem, r, &ns, Some(1.5), InitKind::Exact);
        let got = slope(&data);
        println!(
            "ACCEPTANCE 2: exact-init r={r} order {got:.2} (want {want}±0.5, errors {:?})",
            errors(&data)
        );
        if (got - want).abs() > 0.5 {
            violations.push(format!("exact-init r={r} order {got:.2}, want {want}±0.5"));
        }
    }
    assert!(
        violations.is_empty(),
        "ACCEPTANCE 2: FAIL — {}",
        violations.join("; ")
    );
    println!("ACCEPTANCE 2: PASS — breather orders 1, 3, 3 reproduced with exact initialization");
}

#[test]
fn acceptance_03_diamond_initialization_matches_or_beats_exact() {
    let problem = sample_problem("SineGordon").unwrap();
    let ns = [40, 80, 160, 320];
    let expected = [2.0, 3.0, 5.0];
    let mut violations = Vec::new();
    for (r, want) in (1..=3).zip(expected) {
        let exact = order_sweep(&problem, r, &ns, Some(1.5), InitKind::Exact);
        let diamond = order_sweep(&problem, r, &ns, Some(1.5), InitKind::Diamond);
        let got = slope(&diamond);
        println!(
            "ACCEPTANCE 3: diamond-init r={r} order {got:.2} (want {want}±0.5, errors {:?})",
            errors(&diamond)
        );
        if (got - want).abs() > 0.5 {
            violations.push(format!("diamond-init r={r} order {got:.2}, want {want}±0.5"));
        }
        for (&(n, _, e_exact), &(_, _, e_diamond)) in exact.iter().zip(&diamond) {
            if e_diamond > 2.0 * e_exact {
                violations.push(format!(
                    "r={r} N={n}: diamond-init error {e_diamond:.3e} exceeds twice the \
                     exact-init error {e_exact:.3e}"
                ));
            }
        }
    }
    assert!(
        violations.is_empty(),
        "ACCEPTANCE 3: FAIL — {}",
        violations.join("; ")
    );
    println!(
        "ACCEPTANCE 3: PASS — diamond initialization reaches orders 2, 3, 5 and stays within \
         2x of exact initialization at every mesh"
    );
}

#[test]
fn acceptance_04_periodic_problems_reproduce_published_orders() {
    let ns = [40, 80, 160, 320];
    let cases: [(&str, [f64; 3]); 4] = [
        ("Esin", [2.0, 1.9, 4.0]),
        ("Sincos", [2.1, 1.9, 3.4]),
        ("Coscos", [2.1, 1.9, 3.3]),
        ("SineGordon", [1.8, 4.1, 5.6]),
    ];
    let mut violations = Vec::new();
    for (name, per_r) in cases {
        let problem = sample_problem(name).unwrap();
        for (r, want) in (1..=3).zip(per_r) {
            let data = order_sweep(&problem, r, &ns, Some(1.5), InitKind::Diamond);
            let got = slope(&data);
            println!(
                "ACCEPTANCE 4: {name} r={r} order {got:.2} (want {want}±0.6, errors {:?})",
                errors(&data)
            );
            if (got - want).abs() > 0.6 {
                violations.push(format!("{name} r={r} order {got:.2}, want {want}±0.6"));
            }
            if got < r as f64 - 0.3 {
                violations.push(format!("{name} r={r} order {got:.2} below r-0.3"));
            }
        }
    }
    assert!(
        violations.is_empty(),
        "ACCEPTANCE 4: FAIL — {}",
        violations.join("; ")
    );
    println!("ACCEPTANCE 4: PASS — periodic orders match the published values within 0.6");
}

#[test]
fn acceptance_05_boundary_problems_reproduce_published_orders() {
    let ns = [4, 8, 16, 32, 64, 128];
    let cases: [(&str, [f64; 3]); 4] = [
        ("EsinDD", [2.3, 2.2, 3.7]),
        ("SincosDN", [2.2, 2.1, 3.6]),
        ("CoscosDN", [2.2, 2.1, 4.1]),
        ("SineGordonDD", [2.0, 3.2, 4.4]),
    ];
    let mut violations = Vec::new();
    for (name, per_r) in cases {
        let problem = sample_problem(name).unwrap();
        for (r, want) in (1..=3).zip(per_r) {
            let data = order_sweep(&problem, r, &ns, None, InitKind::Diamond);
            let got = slope(&data);
            println!(
                "ACCEPTANCE 5: {name} r={r} order {got:.2} (want {want}±0.7, errors {:?})",
                errors(&data)
            );
            if (got - want).abs() > 0.7 {
                violations.push(format!("{name} r={r} order {got:.2}, want {want}±0.7"));
            }
            if got < r as f64 - 0.3 {
                violations.push(format!("{name} r={r} order {got:.2} below r-0.3"));
            }
        }
    }
    assert!(
        violations.is_empty(),
        "ACCEPTANCE 5: FAIL — {}",
        violations.join("; ")
    );
    println!("ACCEPTANCE 5: PASS — boundary-scheme orders match the published values within 0.7");
}

#[test]
fn acceptance_06_phantom_initialization_is_as_good_as_diamond() {
    let problem = sample_problem("CoscosDN").unwrap();
    let ns = [4, 8, 16, 32, 64, 128];
    let mut violations = Vec::new();
    for r in 1..=3 {
        let diamond = order_sweep(&problem, r, &ns, None, InitKind::Diamond);
        let phantom = order_sweep(&problem, r, &ns, None, InitKind::Phantom);
        println!(
            "ACCEPTANCE 6: r={r} phantom/diamond error ratios {:?}",
            diamond
                .iter()
                .zip(&phantom)
                .map(|(d, p)| (p.2 / d.2 * 100.0).round() / 100.0)
                .collect::<Vec<_>>()
        );
        for (&(n, _, e_diamond), &(_, _, e_phantom)) in diamond.iter().zip(&phantom) {
            if e_phantom > 2.0 * e_diamond {
                violations.push(format!(
                    "r={r} N={n}: phantom-init error {e_phantom:.3e} exceeds twice the \
                     diamond-init error {e_diamond:.3e}"
                ));
            }
        }
    }
    assert!(
        violations.is_empty(),
        "ACCEPTANCE 6: FAIL — {}",
        violations.join("; ")
    );
    println!("ACCEPTANCE 6: PASS — phantom initialization stays within 2x of diamond errors");
}

#[test]
fn acceptance_07_conservation_law_holds_on_variations_and_has_power() {
    let problem = sample_problem("Sincos").unwrap();
    let pde = Arc::new(wave_system(&problem).unwrap());
    let mesh = MeshConfig::with_courant(problem.a, problem.b, 40, LAMBDA).unwrap();
    let cfg = SolverConfig::default();

    for r in 1..=3 {
        let tab = gauss_tableau(r).unwrap();
        let checks =
            conservation_samples(&pde, &tab, mesh.dx, mesh.dt, &cfg, 0xACC7 + r as u64, 100, 0.8)
                .unwrap();
        assert_eq!(checks.len(), 100);
        let worst = checks.iter().map(|c| c.residual.abs()).fold(0.0, f64::max);
        assert!(
            worst <= 1e-10,
            "ACCEPTANCE 7: FAIL — r={r} worst conservation residual {worst:.3e} on \
             solution variations"
        );
        println!("ACCEPTANCE 7: r={r} worst residual {worst:.3e} over 100 variation pairs");
    }

    // Power check: the residual must not vanish identically — random
    // non-solution edge data should violate the law essentially always.
    let tab = gauss_tableau(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xD15C);
    let mut random_edges = || -> DiamondEdges {
        let mut make = |_| {
            let mut edge = EdgeData::zeros(tab.r, pde.n);
            for v in &mut edge.values {
                *v = rng.gen_range(-1.0..1.0);
            }
            edge
        };
        DiamondEdges {
            left: make(()),
            bottom: make(()),
            right: make(()),
            top: make(()),
        }
    };
    let mut violations = 0;
    for _ in 0..100 {
        let v1 = random_edges();
        let v2 = random_edges();
        let check = conservation_residual(&v1, &v2, &pde, &tab, mesh.dx, mesh.dt);
        if check.residual.abs() > 1e-3 {
            violations += 1;
        }
    }
    assert!(
        violations >= 95,
        "ACCEPTANCE 7: FAIL — only {violations}/100 random edge sets broke the law; \
         the residual check has no power"
    );
    println!(
        "ACCEPTANCE 7: PASS — residual ≤ 1e-10 on variations, violated by {violations}/100 \
         random edge sets"
    );
}

#[test]
fn acceptance_08_long_bounded_run_stays_solvable_and_bounded() {
    let problem = sample_problem("SineGordonDD").unwrap();
    let r = 2;
    let mesh = MeshConfig::with_courant(problem.a, problem.b, 32, LAMBDA).unwrap();
    let cfg = SolverConfig::default();
    let tab = gauss_tableau(r).unwrap();
    let pde = Arc::new(wave_system(&problem).unwrap());
    let bc = BoundarySpec::from_problem(&problem, problem.default_bcs).unwrap();

    let mut state = init_diamond(&pde, mesh, &tab, &cfg).unwrap();
    let mut stepper = Stepper::new(Arc::clone(&pde), &tab, mesh, bc, cfg).unwrap();
    let mut sup = row_sup(&state);
    let start = Instant::now();
    let half_steps = 200_000; // 1e5 time steps of Δt.
    for step in 0..half_steps {
        stepper
            .half_step(&mut state)
            .unwrap_or_else(|e| panic!("ACCEPTANCE 8: FAIL — solve failed at half-step {step}: {e}"));
        sup = sup.max(row_sup(&state));
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        sup <= 10.0,
        "ACCEPTANCE 8: FAIL — running sup|u| reached {sup:.3} (limit 10)"
    );
    let stats = stepper.stats();
    println!(
        "ACCEPTANCE 8: PASS — 1e5 steps on the bounded sine-Gordon domain, all {} solves \
         converged, sup|u| = {sup:.3}, wall {elapsed:.1} s",
        stats.solves
    );
}

#[test]
fn acceptance_09_parallel_runs_match_serial_and_scale() {
    let problem = sample_problem("SineGordon").unwrap();
    let mesh = MeshConfig::with_dt(problem.a, problem.b, 1000, 0.05).unwrap();
    let t_final = 50.0; // 1000 steps of Δt = 0.05.
    let sim = Simulation::new(problem, 5, mesh, t_final).with_init(InitKind::Diamond);

    let mut reports = Vec::new();
    for workers in [1usize, 2, 4] {
        let report = run_parallel(&sim, workers)
            .unwrap_or_else(|e| panic!("ACCEPTANCE 9: FAIL — {workers} workers: {e}"));
        println!(
            "ACCEPTANCE 9: {workers} workers in {:.2} s (error {:.6e})",
            report.wall_seconds, report.error
        );
        reports.push((workers, report));
    }

    let base = &reports[0].1;
    for (workers, report) in &reports[1..] {
        let distance = state_distance(&base.state, &report.state);
        assert!(
            distance <= 1e-12,
            "ACCEPTANCE 9: FAIL — {workers}-worker final state deviates from serial by \
             {distance:.3e} (max norm)"
        );
    }
    println!("ACCEPTANCE 9 (equivalence): PASS — 2- and 4-worker states match serial to 1e-12");

    let samples: Vec<(usize, f64)> =
        reports.iter().map(|(w, rep)| (*w, rep.wall_seconds)).collect();
    let speedup = samples[0].1 / samples[2].1;
    let model = fit_serial_fraction(&samples).unwrap();
    let host = std::thread::available_parallelism().map_or(0, |p| p.get());
    println!(
        "ACCEPTANCE 9 (scaling): speedup at 4 workers {speedup:.2}, fitted serial fraction \
         B = {:.3}, host parallelism {host}",
        model.serial_fraction
    );
    assert!(
        speedup >= 2.5,
        "ACCEPTANCE 9: FAIL — speedup at 4 workers is {speedup:.2} (need ≥ 2.5); the host \
         reports {host} available CPU(s), so workers cannot run concurrently"
    );
    assert!(
        model.serial_fraction < 0.05,
        "ACCEPTANCE 9: FAIL — fitted serial fraction {:.3} (need < 0.05); the host reports \
         {host} available CPU(s)",
        model.serial_fraction
    );
    println!("ACCEPTANCE 9: PASS — parallel executor matches serial and scales");
}

#[test]
fn acceptance_10_linear_wave_supremum_stays_bounded() {
    let problem = sample_problem("Sincos").unwrap();
    let mesh = MeshConfig::with_courant(problem.a, problem.b, 40, LAMBDA).unwrap();
    let cfg = SolverConfig::default();
    let tab = gauss_tableau(1).unwrap();
    let pde = Arc::new(wave_system(&problem).unwrap());

    let mut state = init_exact(&pde, mesh, &tab).unwrap();
    let mut stepper =
        Stepper::new(Arc::clone(&pde), &tab, mesh, BoundarySpec::periodic(), cfg).unwrap();
    let initial_sup = row_sup(&state);
    let mut sup = initial_sup;
    let half_steps = 20_000; // 1e4 time steps of Δt.
    for step in 0..half_steps {
        stepper
            .half_step(&mut state)
            .unwrap_or_else(|e| panic!("ACCEPTANCE 10: FAIL — solve failed at half-step {step}: {e}"));
        sup = sup.max(row_sup(&state));
    }
    let growth = sup / initial_sup - 1.0;
    assert!(
        growth <= 0.05,
        "ACCEPTANCE 10: FAIL — sup norm grew by {:.2}% over 1e4 steps (limit 5%)",
        growth * 100.0
    );
    println!(
        "ACCEPTANCE 10: PASS — sup|u| growth {:.4}% over 1e4 steps at λ = {LAMBDA}",
        growth * 100.0
    );
}
