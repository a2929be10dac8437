//! Run diagnostics: solution error norms, the discrete conservation law of
//! the multisymplectic two-forms, observed-order fits, and convergence
//! tables.
//!
//! The conservation check is the scheme's structural certificate. With the
//! two-forms `ω(u, v) = uᵀKv` and `κ(u, v) = uᵀLv`, every diamond satisfies
//!
//! ```text
//! (1/Δt) Σᵢ bᵢ [ω(top) + ω(right) − ω(left) − ω(bottom)]ᵢ
//!   + (1/Δx) Σᵢ bᵢ [κ(right) + κ(bottom) − κ(top) − κ(left)]ᵢ = 0
//! ```
//!
//! exactly (to roundoff) when the forms are evaluated on a pair of
//! variations, i.e. differences of solutions of a linear problem. Any sign
//! or transposition error in the scheme breaks this identity at first
//! order, so it makes a sharp oracle.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::init::ZigZagState;
use crate::pde::{transform_coeffs, EdgeData, PDESystem, SolverConfig};
use crate::solver::{DiamondEdges, DiamondSolver, StageCoeffs};
use crate::tableau::RKTableau;

/// Root-mean-square error of the first solution component over the row's
/// up-edge quadrature nodes, scaled so that a uniform pointwise error `ε`
/// yields `ε·√(b − a)`:
///
/// ```text
/// E = √( (b − a)/(N·r) · Σ (u − u_exact)² )
/// ```
pub fn error_norm(state: &ZigZagState, pde: &PDESystem) -> Result<f64> {
    let r = state.edges[0].r;
    let mut exact = vec![0.0; pde.n];
    let mut sum = 0.0;
    for edge in state.up_edges() {
        for k in 0..r {
            let (x, t) = state.node_point(edge, k);
            pde.exact_at(x, t, &mut exact)?;
            let diff = state.edges[edge].node(k)[0] - exact[0];
            sum += diff * diff;
        }
    }
    let width = state.mesh.b - state.mesh.a;
    Ok((width / (state.mesh.n_cells * r) as f64 * sum).sqrt())
}

/// Largest absolute error of the first component over the same nodes.
pub fn error_max(state: &ZigZagState, pde: &PDESystem) -> Result<f64> {
    let r = state.edges[0].r;
    let mut exact = vec![0.0; pde.n];
    let mut max = 0.0_f64;
    for edge in state.up_edges() {
        for k in 0..r {
            let (x, t) = state.node_point(edge, k);
            pde.exact_at(x, t, &mut exact)?;
            max = max.max((state.edges[edge].node(k)[0] - exact[0]).abs());
        }
    }
    Ok(max)
}

/// One evaluation of the discrete conservation law.
#[derive(Debug, Clone, Copy)]
pub struct ConservationCheck {
    /// The signed sum that the scheme conserves to roundoff on variations.
    pub residual: f64,
    /// Largest single term entering the sum, for relative comparisons.
    pub scale: f64,
}

fn bilinear(mat: &nalgebra::DMatrix<f64>, n: usize, u: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for d in 0..n {
        for e in 0..n {
            s += u[d] * mat[(d, e)] * v[e];
        }
    }
    s
}

/// Evaluates the conservation residual on two variations given as edge
/// differences of one diamond.
pub fn conservation_residual(
    v1: &DiamondEdges,
    v2: &DiamondEdges,
    pde: &PDESystem,
    tab: &RKTableau,
    dx: f64,
    dt: f64,
) -> ConservationCheck {
    let n = pde.n;
    let mut residual = 0.0;
    let mut scale = 0.0_f64;
    // (edge of v1, edge of v2, sign in the ω sum, sign in the κ sum)
    let edges = [
        (&v1.top, &v2.top, 1.0, -1.0),
        (&v1.right, &v2.right, 1.0, 1.0),
        (&v1.left, &v2.left, -1.0, -1.0),
        (&v1.bottom, &v2.bottom, -1.0, 1.0),
    ];
    for (e1, e2, s_omega, s_kappa) in edges {
        for k in 0..tab.r {
            let omega = tab.b[k] * bilinear(&pde.k_mat, n, e1.node(k), e2.node(k)) / dt;
            let kappa = tab.b[k] * bilinear(&pde.l_mat, n, e1.node(k), e2.node(k)) / dx;
            residual += s_omega * omega + s_kappa * kappa;
            scale = scale.max(omega.abs()).max(kappa.abs());
        }
    }
    ConservationCheck { residual, scale }
}

/// Node-wise difference `a − b` of two compatible edges.
pub fn edge_difference(a: &EdgeData, b: &EdgeData) -> Result<EdgeData> {
    if a.r != b.r || a.n != b.n {
        return Err(Error::invalid("edge difference of incompatible edges"));
    }
    let mut out = EdgeData::zeros(a.r, a.n);
    for (o, (x, y)) in out.values.iter_mut().zip(a.values.iter().zip(b.values.iter())) {
        *o = x - y;
    }
    Ok(out)
}

/// Edge-wise difference of two solved diamonds; for a linear problem this
/// is a variation, the object the conservation law holds on.
pub fn diamond_difference(a: &DiamondEdges, b: &DiamondEdges) -> Result<DiamondEdges> {
    Ok(DiamondEdges {
        left: edge_difference(&a.left, &b.left)?,
        bottom: edge_difference(&a.bottom, &b.bottom)?,
        right: edge_difference(&a.right, &b.right)?,
        top: edge_difference(&a.top, &b.top)?,
    })
}

/// Solves randomly perturbed diamonds and evaluates the conservation law on
/// the resulting variation pairs. The RNG is seeded, so a sample set is
/// reproducible.
#[allow(clippy::too_many_arguments)]
pub fn conservation_samples(
    pde: &Arc<PDESystem>,
    tab: &RKTableau,
    dx: f64,
    dt: f64,
    cfg: &SolverConfig,
    seed: u64,
    count: usize,
    amplitude: f64,
) -> Result<Vec<ConservationCheck>> {
    if !amplitude.is_finite() || amplitude <= 0.0 {
        return Err(Error::invalid("sample amplitude must be positive and finite"));
    }
    let tc = transform_coeffs(pde, dx, dt)?;
    let mut solver = DiamondSolver::new(Arc::clone(pde), tab, StageCoeffs::uniform(&tc, tab.r), *cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r, n) = (tab.r, pde.n);
    let draw_edge = |rng: &mut ChaCha8Rng, amp: f64| {
        let mut e = EdgeData::zeros(r, n);
        for v in e.values.iter_mut() {
            *v = rng.gen_range(-amp..amp);
        }
        e
    };
    let mut checks = Vec::with_capacity(count);
    for _ in 0..count {
        let left = draw_edge(&mut rng, amplitude);
        let bottom = draw_edge(&mut rng, amplitude);
        let mut solved = Vec::with_capacity(3);
        for _ in 0..3 {
            // Perturb the base edges by a fraction of the amplitude so the
            // three diamonds stay in the solver's convergence basin.
            let dl = draw_edge(&mut rng, 0.2 * amplitude);
            let db = draw_edge(&mut rng, 0.2 * amplitude);
            let l = edge_difference(&left, &dl)?;
            let b = edge_difference(&bottom, &db)?;
            let (right, top, _) = solver.solve(&l, &b)?;
            solved.push(DiamondEdges { left: l, bottom: b, right, top });
        }
        let v1 = diamond_difference(&solved[1], &solved[0])?;
        let v2 = diamond_difference(&solved[2], &solved[0])?;
        checks.push(conservation_residual(&v1, &v2, pde, tab, dx, dt));
    }
    Ok(checks)
}

/// Least-squares and pairwise convergence orders of an error sweep.
#[derive(Debug, Clone)]
pub struct OrderFit {
    /// Slope of `ln e` against `ln h` over all kept points.
    pub slope: f64,
    /// Orders between consecutive kept points, finest pair last.
    pub pairwise: Vec<f64>,
}

/// Fits `e ≈ C·h^p` through `(h, e)` pairs. Points with `e ≤ 1e-15` are
/// dropped (they sit at roundoff, not in the asymptotic regime); at least
/// two points must survive.
pub fn fit_order(hs: &[f64], errors: &[f64]) -> Result<OrderFit> {
    if hs.len() != errors.len() {
        return Err(Error::invalid("order fit needs matching h and error lists"));
    }
    let pts: Vec<(f64, f64)> = hs
        .iter()
        .zip(errors.iter())
        .filter(|(h, e)| **h > 0.0 && e.is_finite() && **e > 1e-15)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::invalid(
            "order fit needs at least two points above the roundoff floor",
        ));
    }
    let m = pts.len() as f64;
    let xbar = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ybar = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.0 - xbar)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("order fit needs at least two distinct h values"));
    }
    let pairwise = pts
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .collect();
    Ok(OrderFit { slope: sxy / sxx, pairwise })
}

/// One resolution of a convergence sweep.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub n_cells: usize,
    pub h: f64,
    pub error: f64,
    /// Order against the previous (coarser) row.
    pub order: Option<f64>,
}

/// A labelled error sweep with derived orders.
#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub problem: String,
    pub r: usize,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Assembles rows from `(n_cells, h, error)` triples, computing the
    /// pairwise order column.
    pub fn from_errors(problem: &str, r: usize, data: &[(usize, f64, f64)]) -> Self {
        let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(data.len());
        for (i, &(n_cells, h, error)) in data.iter().enumerate() {
            let order = (i > 0)
                .then(|| {
                    let prev = &data[i - 1];
                    let (h0, e0) = (prev.1, prev.2);
                    (e0 > 1e-15 && error > 1e-15 && h0 != h)
                        .then(|| (error / e0).ln() / (h / h0).ln())
                })
                .flatten();
            rows.push(ConvergenceRow { n_cells, h, error, order });
        }
        ConvergenceTable { problem: problem.to_string(), r, rows }
    }

    /// Global least-squares order over the sweep.
    pub fn observed_order(&self) -> Result<f64> {
        let hs: Vec<f64> = self.rows.iter().map(|r| r.h).collect();
        let es: Vec<f64> = self.rows.iter().map(|r| r.error).collect();
        Ok(fit_order(&hs, &es)?.slope)
    }

    /// Writes the table as CSV with full floating-point precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "problem,r,n_cells,h,error,order")?;
        for row in &self.rows {
            let order = row.order.map_or(String::new(), |o| format!("{o:.16e}"));
            writeln!(
                w,
                "{},{},{},{:.16e},{:.16e},{}",
                self.problem, self.r, row.n_cells, row.h, row.error, order
            )?;
        }
        Ok(())
    }
}
