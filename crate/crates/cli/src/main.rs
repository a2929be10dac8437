//! Command-line driver for the diamond-mesh integrator.
//!
//! Four subcommands cover the day-to-day workflows:
//!
//! * `run` — integrate one configuration and write solution snapshots plus a
//!   one-line run summary,
//! * `converge` — sweep a doubling sequence of mesh sizes and fit observed
//!   convergence orders,
//! * `bench` — strong-scaling benchmark of the parallel executor with an
//!   Amdahl serial-fraction fit,
//! * `conserve` — evaluate the discrete conservation law on randomised
//!   variation pairs.
//!
//! All numeric CSV output carries 17 significant digits so downstream tools
//! can reproduce runs bit for bit.  Settings resolve as command-line flags
//! over an optional `key = value` config file over built-in defaults.  Exit
//! codes: 0 on success, 1 when a run fails (solver divergence, I/O), 2 for
//! usage errors.

mod svg;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use diamond_core::diagnostics::{conservation_samples, ConvergenceTable};
use diamond_core::problems::{sample_problem, sample_problem_names, wave_system, BcKind};
use diamond_core::{
    gauss_tableau, run_parallel, Error as CoreError, InitKind, MeshConfig, RunReport, Simulation,
    SolverConfig,
};

/// Multisymplectic integrator for wave equations on a diamond space-time mesh.
#[derive(Debug, Parser)]
#[command(name = "diamond", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one configuration and write snapshot + summary CSVs.
    Run(Opts),
    /// Error sweep over a doubling sequence of cell counts.
    Converge(Opts),
    /// Strong-scaling benchmark of the parallel executor.
    Bench(Opts),
    /// Conservation-law residuals on randomised diamond variations.
    Conserve(Opts),
}

/// One flag vocabulary shared by all subcommands; each command reads the
/// subset it needs.  Every flag is optional so a config file can supply it.
#[derive(Debug, Default, Args)]
struct Opts {
    /// Problem name (Esin, Sincos, Coscos, SineGordon, EsinDD, SincosDD,
    /// SincosDN, CoscosDD, CoscosDN, SineGordonDD).  [default: sincos]
    #[arg(long, value_name = "NAME")]
    problem: Option<String>,

    /// Gauss stage count, or a comma list for `converge`.  [default: 2]
    #[arg(long, value_name = "LIST")]
    r: Option<String>,

    /// Cell count N, or a comma list (doubling) for `converge`.  [default: 40]
    #[arg(long, value_name = "LIST")]
    cells: Option<String>,

    /// Courant number λ = Δt/Δx.  [default: 0.5]
    #[arg(long, value_name = "X")]
    courant: Option<f64>,

    /// Final time; rounded to the nearest half-step.  [default: 2Δt]
    #[arg(long = "t-final", value_name = "T")]
    t_final: Option<f64>,

    /// First-row construction: exact, diamond, or phantom.  [default: diamond]
    #[arg(long, value_name = "KIND")]
    init: Option<String>,

    /// Boundary conditions: periodic, dd, dn, nd, nn, or default
    /// (the problem's own).  [default: default]
    #[arg(long, value_name = "KIND")]
    bc: Option<String>,

    /// Worker threads, or a comma list for `bench`.  [default: 1]
    #[arg(long, value_name = "LIST")]
    threads: Option<String>,

    /// Newton residual tolerance.  [default: 1e-12]
    #[arg(long, value_name = "EPS")]
    tol: Option<f64>,

    /// Newton iteration cap per diamond.  [default: 50]
    #[arg(long = "max-iter", value_name = "K")]
    max_iter: Option<usize>,

    /// Output directory for CSV (and SVG) artifacts.  [default: .]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Number of solution snapshots `run` records, spread evenly over the
    /// run (0 disables).  [default: 2]
    #[arg(long, value_name = "K")]
    snapshots: Option<usize>,

    /// Seed for randomised variation sampling in `conserve`.  [default: 0]
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Sample count for `conserve`.  [default: 100]
    #[arg(long, value_name = "K")]
    samples: Option<usize>,

    /// Perturbation amplitude for `conserve` samples.  [default: 0.8]
    #[arg(long, value_name = "A")]
    amplitude: Option<f64>,

    /// Also render a log-log SVG of the `converge` error curves.
    #[arg(long)]
    svg: bool,

    /// Optional `key = value` config file; flags override its entries.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

/// Driver failures, split by exit code: usage mistakes exit 2, failed runs
/// exit 1.
#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Runtime(msg) => f.write_str(msg),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        match err {
            CoreError::InvalidArgument(_) | CoreError::UnsupportedOperation(_) => {
                CliError::Usage(err.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o error: {err}"))
    }
}

/// Fully resolved settings after merging flags, config file, and defaults.
#[derive(Debug)]
struct Settings {
    problem: String,
    rs: Vec<usize>,
    cells: Vec<usize>,
    courant: f64,
    t_final: Option<f64>,
    init: InitKind,
    bc: Option<(BcKind, BcKind)>,
    threads: Vec<usize>,
    solver: SolverConfig,
    out: PathBuf,
    snapshots: usize,
    seed: u64,
    samples: usize,
    amplitude: f64,
    svg: bool,
}

const CONFIG_KEYS: &[&str] = &[
    "problem",
    "r",
    "cells",
    "courant",
    "t_final",
    "init",
    "bc",
    "threads",
    "tol",
    "max_iter",
    "out",
    "snapshots",
    "seed",
    "samples",
    "amplitude",
    "svg",
];

/// Parses a `key = value` config file.  Keys use the flag names with `-`
/// replaced by `_`; blank lines and `#` comments are skipped.
fn load_config(path: &Path) -> Result<HashMap<String, String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::usage(format!(
                "config {} line {}: expected `key = value`, got {raw:?}",
                path.display(),
                idx + 1
            ))
        })?;
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(CliError::usage(format!(
                "config {} line {}: unknown key {key:?}",
                path.display(),
                idx + 1
            )));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

/// Parses one config value, reporting the key on failure.
fn config_value<T>(map: &HashMap<String, String>, key: &str) -> Result<Option<T>, CliError>
where
    T: std::str::FromStr,
    T::Err: fmt::Display,
{
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|e| CliError::usage(format!("config key {key:?}: {e}"))),
    }
}

fn parse_usize_list(label: &str, raw: &str) -> Result<Vec<usize>, CliError> {
    let mut out = Vec::new();
    for part in raw.split(',') {
        let value: usize = part
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("--{label}: {part:?} is not a whole number")))?;
        out.push(value);
    }
    Ok(out)
}

fn parse_init(raw: &str) -> Result<InitKind, CliError> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "exact" => Ok(InitKind::Exact),
        "diamond" => Ok(InitKind::Diamond),
        "phantom" => Ok(InitKind::Phantom),
        other => Err(CliError::usage(format!(
            "--init: expected exact, diamond, or phantom, got {other:?}"
        ))),
    }
}

/// Maps a boundary keyword to edge kinds; `None` means "use the problem's
/// own default".
fn parse_bc(raw: &str) -> Result<Option<(BcKind, BcKind)>, CliError> {
    let side = |c: char| match c {
        'd' => Some(BcKind::Dirichlet),
        'n' => Some(BcKind::Neumann),
        _ => None,
    };
    let key = raw.trim().to_ascii_lowercase();
    match key.as_str() {
        "default" => Ok(None),
        "periodic" => Ok(Some((BcKind::Periodic, BcKind::Periodic))),
        two if two.len() == 2 => {
            let mut chars = two.chars();
            match (side(chars.next().unwrap()), side(chars.next().unwrap())) {
                (Some(left), Some(right)) => Ok(Some((left, right))),
                _ => Err(CliError::usage(format!(
                    "--bc: expected periodic, dd, dn, nd, nn, or default, got {raw:?}"
                ))),
            }
        }
        _ => Err(CliError::usage(format!(
            "--bc: expected periodic, dd, dn, nd, nn, or default, got {raw:?}"
        ))),
    }
}

fn bc_label(kinds: (BcKind, BcKind)) -> String {
    let side = |k: BcKind| match k {
        BcKind::Periodic => 'p',
        BcKind::Dirichlet => 'd',
        BcKind::Neumann => 'n',
    };
    if kinds == (BcKind::Periodic, BcKind::Periodic) {
        "periodic".to_string()
    } else {
        format!("{}{}", side(kinds.0), side(kinds.1))
    }
}

fn init_label(kind: InitKind) -> &'static str {
    match kind {
        InitKind::Exact => "exact",
        InitKind::Diamond => "diamond",
        InitKind::Phantom => "phantom",
    }
}

/// Merges flags over config over defaults into one settings record.
fn resolve(opts: &Opts) -> Result<Settings, CliError> {
    let cfg = match &opts.config {
        Some(path) => load_config(path)?,
        None => HashMap::new(),
    };
    let text = |flag: &Option<String>, key: &str| -> Option<String> {
        flag.clone().or_else(|| cfg.get(key).cloned())
    };

    let solver_base = SolverConfig::default();
    let mut solver = solver_base;
    solver.tol = match opts.tol {
        Some(t) => t,
        None => config_value(&cfg, "tol")?.unwrap_or(solver_base.tol),
    };
    solver.max_iter = match opts.max_iter {
        Some(k) => k,
        None => config_value(&cfg, "max_iter")?.unwrap_or(solver_base.max_iter),
    };

    let settings = Settings {
        problem: text(&opts.problem, "problem").unwrap_or_else(|| "sincos".to_string()),
        rs: parse_usize_list("r", &text(&opts.r, "r").unwrap_or_else(|| "2".to_string()))?,
        cells: parse_usize_list(
            "cells",
            &text(&opts.cells, "cells").unwrap_or_else(|| "40".to_string()),
        )?,
        courant: match opts.courant {
            Some(c) => c,
            None => config_value(&cfg, "courant")?.unwrap_or(0.5),
        },
        t_final: match opts.t_final {
            Some(t) => Some(t),
            None => config_value(&cfg, "t_final")?,
        },
        init: parse_init(&text(&opts.init, "init").unwrap_or_else(|| "diamond".to_string()))?,
        bc: parse_bc(&text(&opts.bc, "bc").unwrap_or_else(|| "default".to_string()))?,
        threads: parse_usize_list(
            "threads",
            &text(&opts.threads, "threads").unwrap_or_else(|| "1".to_string()),
        )?,
        solver,
        out: match &opts.out {
            Some(dir) => dir.clone(),
            None => cfg.get("out").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
        },
        snapshots: match opts.snapshots {
            Some(k) => k,
            None => config_value(&cfg, "snapshots")?.unwrap_or(2),
        },
        seed: match opts.seed {
            Some(s) => s,
            None => config_value(&cfg, "seed")?.unwrap_or(0),
        },
        samples: match opts.samples {
            Some(k) => k,
            None => config_value(&cfg, "samples")?.unwrap_or(100),
        },
        amplitude: match opts.amplitude {
            Some(a) => a,
            None => config_value(&cfg, "amplitude")?.unwrap_or(0.8),
        },
        svg: opts.svg || config_value(&cfg, "svg")?.unwrap_or(false),
    };
    Ok(settings)
}

/// Insists a list flag carries exactly one entry for scalar commands.
fn single(label: &str, values: &[usize]) -> Result<usize, CliError> {
    match values {
        [one] => Ok(*one),
        _ => Err(CliError::usage(format!(
            "--{label}: this command takes a single value, got {values:?}"
        ))),
    }
}

/// Rounds the requested final time to a whole number of half-steps (at least
/// one); without a request, defaults to one full time step per row level,
/// `2Δt`.  Returns the time actually run and an adjustment note, if any.
fn rounded_t(requested: Option<f64>, mesh: &MeshConfig) -> Result<(f64, Option<String>), CliError> {
    let target = requested.unwrap_or(2.0 * mesh.dt);
    if !target.is_finite() || target <= 0.0 {
        return Err(CliError::usage(format!(
            "--t-final: final time must be positive and finite, got {target}"
        )));
    }
    let half = 0.5 * mesh.dt;
    let steps = (target / half).round().max(1.0);
    let t_final = steps * half;
    let note = ((t_final - target).abs() > 1e-9 * target.abs().max(1.0)).then(|| {
        format!(
            "final time adjusted from {target} to {t_final} ({steps} half-steps of {half:.6})"
        )
    });
    Ok((t_final, note))
}

/// Full-precision float field for CSV output (17 significant digits).
fn f17(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_artifact(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Builds the simulation shared by `run` and `bench`.
fn build_simulation(s: &Settings, r: usize, n_cells: usize) -> Result<(Simulation, f64), CliError> {
    let problem = sample_problem(&s.problem)?;
    let mesh = MeshConfig::with_courant(problem.a, problem.b, n_cells, s.courant)?;
    let (t_final, note) = rounded_t(s.t_final, &mesh)?;
    if let Some(note) = note {
        eprintln!("note: {note}");
    }
    let mut sim = Simulation::new(Arc::clone(&problem), r, mesh, t_final)
        .with_init(s.init)
        .with_solver(s.solver);
    if let Some(kinds) = s.bc {
        sim = sim.with_bc_kinds(kinds);
    }
    for warning in sim.cfl_warnings() {
        eprintln!("warning: {warning}");
    }
    Ok((sim, t_final))
}

fn summary_csv(s: &Settings, sim: &Simulation, threads: usize, report: &RunReport) -> String {
    let mesh = sim.mesh();
    let bc = s.bc.unwrap_or(sim.problem().default_bcs);
    let mut out = String::from(
        "problem,r,n_cells,courant,dt,t_final,init,bc,threads,half_steps,error,\
         wall_seconds,solves,total_iterations,max_iterations,fd_retries\n",
    );
    out.push_str(&format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        sim.problem().name,
        s.rs[0],
        mesh.n_cells,
        f17(mesh.lambda),
        f17(mesh.dt),
        f17(report.half_steps as f64 * 0.5 * mesh.dt),
        init_label(s.init),
        bc_label(bc),
        threads,
        report.half_steps,
        f17(report.error),
        f17(report.wall_seconds),
        report.stats.solves,
        report.stats.total_iterations,
        report.stats.max_iterations,
        report.stats.fd_retries,
    ));
    out
}

fn cmd_run(s: &Settings) -> Result<(), CliError> {
    let r = single("r", &s.rs)?;
    let n_cells = single("cells", &s.cells)?;
    let threads = single("threads", &s.threads)?;
    let (sim, _) = build_simulation(s, r, n_cells)?;
    let sim = sim.with_snapshots(s.snapshots);

    let report = if threads == 1 { sim.run()? } else { run_parallel(&sim, threads)? };

    fs::create_dir_all(&s.out)?;
    let mut snaps = String::from("x,t,u,v,w\n");
    for snap in &report.snapshots {
        for k in 0..snap.xs.len() {
            snaps.push_str(&format!(
                "{},{},{},{},{}\n",
                f17(snap.xs[k]),
                f17(snap.ts[k]),
                f17(snap.us[k]),
                f17(snap.vs[k]),
                f17(snap.ws[k]),
            ));
        }
    }
    write_artifact(&s.out.join("snapshots.csv"), &snaps)?;
    write_artifact(&s.out.join("summary.csv"), &summary_csv(s, &sim, threads, &report))?;
    if threads > 1 && s.snapshots > 0 {
        eprintln!("note: snapshots are recorded in serial runs only (--threads 1)");
    }

    println!(
        "{} r={} N={}: error {:.6e}, wall {:.3} s, {} solves, {} Newton iterations (max {})",
        sim.problem().name,
        r,
        n_cells,
        report.error,
        report.wall_seconds,
        report.stats.solves,
        report.stats.total_iterations,
        report.stats.max_iterations,
    );
    Ok(())
}

fn cmd_converge(s: &Settings) -> Result<(), CliError> {
    let problem = sample_problem(&s.problem)?;
    if s.cells.len() < 2 {
        return Err(CliError::usage(
            "--cells: converge needs a doubling sequence of at least two counts, \
             e.g. --cells 40,80,160",
        ));
    }
    for pair in s.cells.windows(2) {
        if pair[1] != 2 * pair[0] {
            return Err(CliError::usage(format!(
                "--cells: counts must double at each refinement, got {} after {}",
                pair[1], pair[0]
            )));
        }
    }
    if s.threads != [1] {
        eprintln!("note: converge always runs serially so sweeps reproduce bit for bit");
    }

    let coarse = MeshConfig::with_courant(problem.a, problem.b, s.cells[0], s.courant)?;
    let (t_final, note) = rounded_t(s.t_final, &coarse)?;
    if let Some(note) = note {
        eprintln!("note: {note}");
    }

    fs::create_dir_all(&s.out)?;
    let mut orders = String::from("problem,r,fitted_order\n");
    let mut curves = Vec::new();
    for &r in &s.rs {
        let mut data = Vec::with_capacity(s.cells.len());
        for (which, &n_cells) in s.cells.iter().enumerate() {
            let mesh = MeshConfig::with_courant(problem.a, problem.b, n_cells, s.courant)?;
            let mut sim = Simulation::new(Arc::clone(&problem), r, mesh, t_final)
                .with_init(s.init)
                .with_solver(s.solver);
            if let Some(kinds) = s.bc {
                sim = sim.with_bc_kinds(kinds);
            }
            if which == 0 {
                for warning in sim.cfl_warnings() {
                    eprintln!("warning: {warning}");
                }
            }
            let report = sim.run()?;
            data.push((n_cells, mesh.dx, report.error));
        }
        let table = ConvergenceTable::from_errors(&problem.name, r, &data);
        let mut csv = Vec::new();
        table.write_csv(&mut csv)?;
        let csv = String::from_utf8(csv).expect("CSV output is ASCII");
        write_artifact(&s.out.join(format!("converge_r{r}.csv")), &csv)?;

        let fitted = table.observed_order()?;
        orders.push_str(&format!("{},{},{}\n", problem.name, r, f17(fitted)));
        println!("{} r={}: fitted order {:.2} over N = {:?}", problem.name, r, fitted, s.cells);
        curves.push(svg::Series {
            label: format!("r = {r}"),
            points: data.iter().map(|&(_, h, e)| (h, e)).collect(),
        });
    }
    write_artifact(&s.out.join("orders.csv"), &orders)?;
    if s.svg {
        let title = format!("{}: error at t = {:.3} vs cell size", problem.name, t_final);
        let chart = svg::loglog_chart(&title, "h", "error", &curves);
        write_artifact(&s.out.join("converge.svg"), &chart)?;
    }
    Ok(())
}

fn cmd_bench(s: &Settings) -> Result<(), CliError> {
    let r = single("r", &s.rs)?;
    let n_cells = single("cells", &s.cells)?;
    if !s.threads.contains(&1) {
        return Err(CliError::usage(
            "--threads: the bench list must include 1 so speedups have a serial baseline",
        ));
    }
    let (sim, _) = build_simulation(s, r, n_cells)?;

    let mut rows = Vec::with_capacity(s.threads.len());
    for &workers in &s.threads {
        let report = run_parallel(&sim, workers)?;
        println!(
            "workers {:>2}: {:.3} s, error {:.6e}",
            workers, report.wall_seconds, report.error
        );
        rows.push((workers, report.wall_seconds, report.error));
    }

    let serial = rows
        .iter()
        .find(|row| row.0 == 1)
        .expect("threads list contains 1");
    let t1 = serial.1;
    for &(workers, _, error) in &rows {
        if (error - serial.2).abs() > 1e-12 * serial.2.abs().max(1.0) {
            eprintln!(
                "warning: {workers}-worker error {error:.6e} deviates from the serial {:.6e}",
                serial.2
            );
        }
    }
    let samples: Vec<(usize, f64)> = rows.iter().map(|&(w, t, _)| (w, t)).collect();
    let fitted_b = if s.threads.iter().any(|&w| w > 1) {
        let model = diamond_core::fit_serial_fraction(&samples)?;
        println!("fitted serial fraction B = {:.4}", model.serial_fraction);
        Some(model.serial_fraction)
    } else {
        None
    };

    fs::create_dir_all(&s.out)?;
    let mut csv = String::from("workers,wall_seconds,speedup,fitted_b\n");
    for &(workers, wall, _) in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            workers,
            f17(wall),
            f17(t1 / wall),
            fitted_b.map(f17).unwrap_or_default(),
        ));
    }
    write_artifact(&s.out.join("bench.csv"), &csv)
}

fn cmd_conserve(s: &Settings) -> Result<(), CliError> {
    let r = single("r", &s.rs)?;
    let n_cells = single("cells", &s.cells)?;
    let problem = sample_problem(&s.problem)?;
    let pde = Arc::new(wave_system(&problem)?);
    let tableau = gauss_tableau(r)?;
    let mesh = MeshConfig::with_courant(problem.a, problem.b, n_cells, s.courant)?;

    let checks = conservation_samples(
        &pde, &tableau, mesh.dx, mesh.dt, &s.solver, s.seed, s.samples, s.amplitude,
    )?;

    fs::create_dir_all(&s.out)?;
    let mut csv = String::from("sample,residual,scale\n");
    let mut worst = 0.0_f64;
    let mut worst_relative = 0.0_f64;
    for (idx, check) in checks.iter().enumerate() {
        csv.push_str(&format!("{},{},{}\n", idx, f17(check.residual), f17(check.scale)));
        worst = worst.max(check.residual.abs());
        worst_relative = worst_relative.max(check.residual.abs() / check.scale.max(1.0));
    }
    write_artifact(&s.out.join("conserve.csv"), &csv)?;
    println!(
        "{} r={}: max conservation residual {worst:.3e} (relative {worst_relative:.3e}) \
         over {} samples",
        problem.name,
        r,
        checks.len(),
    );
    Ok(())
}

type CommandFn = fn(&Settings) -> Result<(), CliError>;

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let (opts, cmd): (&Opts, CommandFn) = match &cli.command {
        Command::Run(opts) => (opts, cmd_run),
        Command::Converge(opts) => (opts, cmd_converge),
        Command::Bench(opts) => (opts, cmd_bench),
        Command::Conserve(opts) => (opts, cmd_conserve),
    };
    let settings = resolve(opts)?;
    cmd(&settings)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if matches!(err, CliError::Usage(_)) {
                eprintln!("known problems: {}", sample_problem_names().join(", "));
            }
            ExitCode::from(err.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_keywords_map_to_edge_kinds() {
        assert_eq!(parse_bc("default").unwrap(), None);
        assert_eq!(
            parse_bc("periodic").unwrap(),
            Some((BcKind::Periodic, BcKind::Periodic))
        );
        assert_eq!(
            parse_bc("dn").unwrap(),
            Some((BcKind::Dirichlet, BcKind::Neumann))
        );
        assert_eq!(
            parse_bc("ND").unwrap(),
            Some((BcKind::Neumann, BcKind::Dirichlet))
        );
        assert!(parse_bc("dp").is_err());
        assert!(parse_bc("open").is_err());
    }

    #[test]
    fn list_flags_parse_and_reject_garbage() {
        assert_eq!(parse_usize_list("cells", "40,80, 160").unwrap(), vec![40, 80, 160]);
        assert!(parse_usize_list("cells", "40,eighty").is_err());
        assert!(matches!(
            parse_usize_list("r", "1.5"),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn final_times_round_to_half_steps() {
        let mesh = MeshConfig::with_courant(0.0, 1.0, 10, 0.5).unwrap();
        // dt = 0.05, half-step 0.025.
        let (t, note) = rounded_t(Some(0.1), &mesh).unwrap();
        assert_eq!(t, 0.1);
        assert!(note.is_none());
        let (t, note) = rounded_t(Some(0.11), &mesh).unwrap();
        assert!((t - 0.1).abs() < 1e-12);
        assert!(note.is_some());
        // The default is one full step per row level.
        let (t, _) = rounded_t(None, &mesh).unwrap();
        assert!((t - 0.1).abs() < 1e-12);
        assert!(rounded_t(Some(-1.0), &mesh).is_err());
    }

    #[test]
    fn config_files_fill_gaps_and_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("diamond.conf");
        fs::write(&path, "# sweep defaults\nproblem = esin\nr = 3\ntol = 1e-9\n").unwrap();
        let opts = Opts {
            r: Some("1".to_string()),
            config: Some(path),
            ..Opts::default()
        };
        let settings = resolve(&opts).unwrap();
        assert_eq!(settings.problem, "esin");
        assert_eq!(settings.rs, vec![1]);
        assert_eq!(settings.solver.tol, 1e-9);
        assert_eq!(settings.solver.max_iter, SolverConfig::default().max_iter);
    }

    #[test]
    fn config_files_reject_unknown_keys_and_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let bad_key = dir.path().join("bad_key.conf");
        fs::write(&bad_key, "cellcount = 40\n").unwrap();
        assert!(matches!(load_config(&bad_key), Err(CliError::Usage(_))));
        let bad_line = dir.path().join("bad_line.conf");
        fs::write(&bad_line, "problem sincos\n").unwrap();
        assert!(matches!(load_config(&bad_line), Err(CliError::Usage(_))));
    }

    #[test]
    fn core_errors_split_into_usage_and_runtime_exits() {
        let usage: CliError = CoreError::invalid("bad flag").into();
        assert_eq!(usage.code(), 2);
        let runtime: CliError = CoreError::SingularSystem { context: "test".into() }.into();
        assert_eq!(runtime.code(), 1);
    }
}
