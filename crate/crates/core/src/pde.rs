//! Core types: the PDE in multi-Hamiltonian form, the diamond mesh, and the
//! per-edge data layout.
//!
//! The integrator targets PDEs written as `K z_t + L z_x = ∇S(z)` with
//! constant skew-symmetric `K`, `L` and a smooth scalar `S`. Each diamond of
//! the space-time mesh is mapped onto the unit square by
//! `x̃ = x/Δx + t/Δt`, `t̃ = -x/Δx + t/Δt`, under which the equation keeps its
//! form with transformed coefficients `K̃ = K/Δt - L/Δx`, `L̃ = K/Δt + L/Δx`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// In-place evaluation of a vector field `z ↦ ∇S(z)`.
pub type GradFn = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// In-place evaluation of the Hessian `z ↦ S''(z)` (row-major `n×n`).
pub type HessFn = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// In-place evaluation of an exact solution `(x, t) ↦ z(x, t)`.
pub type ExactFn = Box<dyn Fn(f64, f64, &mut [f64]) + Send + Sync>;

/// A PDE `K z_t + L z_x = ∇S(z)` with `z ∈ ℝⁿ`.
pub struct PDESystem {
    /// State dimension `n`.
    pub n: usize,
    /// Constant skew-symmetric coefficient of `z_t`.
    pub k_mat: DMatrix<f64>,
    /// Constant skew-symmetric coefficient of `z_x`.
    pub l_mat: DMatrix<f64>,
    /// Gradient of the Hamiltonian density.
    pub grad_s: GradFn,
    /// Hessian of the Hamiltonian density.
    pub hess_s: HessFn,
    /// Exact solution, when one is known (drives error norms and boundary data).
    pub exact: Option<ExactFn>,
}

impl std::fmt::Debug for PDESystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PDESystem")
            .field("n", &self.n)
            .field("k_mat", &self.k_mat)
            .field("l_mat", &self.l_mat)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl PDESystem {
    /// Builds a system and checks its structural invariants: `K`, `L` must be
    /// `n×n` and skew-symmetric to 1e-14, and the supplied Hessian must match
    /// a finite-difference Jacobian of the gradient at a few sample states.
    pub fn new(
        n: usize,
        k_mat: DMatrix<f64>,
        l_mat: DMatrix<f64>,
        grad_s: GradFn,
        hess_s: HessFn,
        exact: Option<ExactFn>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("state dimension must be at least 1"));
        }
        for (name, m) in [("K", &k_mat), ("L", &l_mat)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::invalid(format!("{name} must be {n}x{n}")));
            }
            for i in 0..n {
                for j in 0..n {
                    if (m[(i, j)] + m[(j, i)]).abs() > 1e-14 {
                        return Err(Error::invalid(format!("{name} is not skew-symmetric")));
                    }
                }
            }
        }
        let sys = PDESystem {
            n,
            k_mat,
            l_mat,
            grad_s,
            hess_s,
            exact,
        };
        sys.check_hessian()?;
        Ok(sys)
    }

    /// Compares the Hessian against central differences of the gradient at a
    /// handful of pseudo-random states near the origin.
    fn check_hessian(&self) -> Result<()> {
        let n = self.n;
        let mut rng = ChaCha8Rng::seed_from_u64(0x0d1a);
        let h = 1e-5;
        let mut z = vec![0.0; n];
        let mut hess = vec![0.0; n * n];
        let mut gp = vec![0.0; n];
        let mut gm = vec![0.0; n];
        for _ in 0..4 {
            for zi in z.iter_mut() {
                *zi = rng.gen_range(-1.0..1.0);
            }
            (self.hess_s)(&z, &mut hess);
            for j in 0..n {
                let saved = z[j];
                z[j] = saved + h;
                (self.grad_s)(&z, &mut gp);
                z[j] = saved - h;
                (self.grad_s)(&z, &mut gm);
                z[j] = saved;
                for i in 0..n {
                    let fd = (gp[i] - gm[i]) / (2.0 * h);
                    let scale = 1.0_f64.max(fd.abs());
                    if (hess[i * n + j] - fd).abs() > 1e-6 * scale {
                        return Err(Error::invalid(format!(
                            "Hessian entry ({i},{j}) disagrees with finite differences of the gradient"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Evaluates the exact solution into `out`, if one is attached.
    pub fn exact_at(&self, x: f64, t: f64, out: &mut [f64]) -> Result<()> {
        match &self.exact {
            Some(f) => {
                f(x, t, out);
                Ok(())
            }
            None => Err(Error::UnsupportedOperation(
                "system has no exact solution attached".into(),
            )),
        }
    }
}

/// Uniform diamond mesh over `[a, b]`: `n_cells` diamonds of width `dx` per
/// row, height `dt`, Courant number `lambda = dt/dx`.
#[derive(Debug, Clone, Copy)]
pub struct MeshConfig {
    pub a: f64,
    pub b: f64,
    pub n_cells: usize,
    pub dx: f64,
    pub dt: f64,
    pub lambda: f64,
}

impl MeshConfig {
    /// Mesh from a Courant number: `dx = (b-a)/n_cells`, `dt = lambda·dx`.
    pub fn with_courant(a: f64, b: f64, n_cells: usize, lambda: f64) -> Result<Self> {
        if !b.is_finite() || !a.is_finite() || b <= a {
            return Err(Error::invalid("domain must satisfy b > a"));
        }
        if n_cells == 0 {
            return Err(Error::invalid("cell count must be at least 1"));
        }
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::invalid("Courant number must be positive and finite"));
        }
        let dx = (b - a) / n_cells as f64;
        Ok(MeshConfig {
            a,
            b,
            n_cells,
            dx,
            dt: lambda * dx,
            lambda,
        })
    }

    /// Mesh from an explicit time step.
    pub fn with_dt(a: f64, b: f64, n_cells: usize, dt: f64) -> Result<Self> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::invalid("time step must be positive and finite"));
        }
        let mut mesh = Self::with_courant(a, b, n_cells, 1.0)?;
        mesh.dt = dt;
        mesh.lambda = dt / mesh.dx;
        Ok(mesh)
    }

    /// Number of half-steps needed to advance the row base from 0 to
    /// `t_final`; errors unless `t_final` is an integer multiple of `dt/2`
    /// (to 1e-9 relative).
    pub fn half_steps_to(&self, t_final: f64) -> Result<usize> {
        if !t_final.is_finite() || t_final <= 0.0 {
            return Err(Error::invalid("final time must be positive and finite"));
        }
        let ratio = t_final / (0.5 * self.dt);
        let rounded = ratio.round();
        if (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::invalid(format!(
                "final time {t_final} is not an integer multiple of dt/2 = {}",
                0.5 * self.dt
            )));
        }
        Ok(rounded as usize)
    }
}

/// Coefficients of the PDE after mapping one diamond to the unit square.
#[derive(Debug, Clone)]
pub struct TransformedCoeffs {
    /// Coefficient of `z̃_t̃`: `K/Δt - L/Δx`.
    pub k_tilde: DMatrix<f64>,
    /// Coefficient of `z̃_x̃`: `K/Δt + L/Δx`.
    pub l_tilde: DMatrix<f64>,
}

/// Transformed coefficients for a uniform diamond of width `dx`, height `dt`.
pub fn transform_coeffs(pde: &PDESystem, dx: f64, dt: f64) -> Result<TransformedCoeffs> {
    if !dx.is_finite() || !dt.is_finite() || dx <= 0.0 || dt <= 0.0 {
        return Err(Error::invalid("diamond dimensions must be positive"));
    }
    let k_tilde = &pde.k_mat / dt - &pde.l_mat / dx;
    let l_tilde = &pde.k_mat / dt + &pde.l_mat / dx;
    Ok(TransformedCoeffs { k_tilde, l_tilde })
}

/// Solution values at the `r` collocation nodes of one mesh edge, stored
/// node-major (`values[k*n..(k+1)*n]` is the state at node `k`).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeData {
    pub r: usize,
    pub n: usize,
    pub values: Vec<f64>,
}

impl EdgeData {
    /// Allocates a zero-filled edge.
    pub fn zeros(r: usize, n: usize) -> Self {
        EdgeData {
            r,
            n,
            values: vec![0.0; r * n],
        }
    }

    /// State at node `k`.
    pub fn node(&self, k: usize) -> &[f64] {
        &self.values[k * self.n..(k + 1) * self.n]
    }

    /// Mutable state at node `k`.
    pub fn node_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.n..(k + 1) * self.n]
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Internal stage values of one solved diamond: states `Z` and the two
/// directional stage derivatives `X ≈ z̃_x̃`, `T ≈ z̃_t̃` on the unit square,
/// each at the `r×r` tensor grid `(c_i, c_j)`.
#[derive(Debug, Clone)]
pub struct StageBlock {
    pub r: usize,
    pub n: usize,
    /// Stage states, laid out `[(j*r + i)*n ..]` for column `i`, row `j`.
    pub z: Vec<f64>,
    /// Stage derivatives in the `x̃` direction, same layout.
    pub x: Vec<f64>,
    /// Stage derivatives in the `t̃` direction, same layout.
    pub t: Vec<f64>,
}

impl StageBlock {
    pub fn zeros(r: usize, n: usize) -> Self {
        let len = r * r * n;
        StageBlock {
            r,
            n,
            z: vec![0.0; len],
            x: vec![0.0; len],
            t: vec![0.0; len],
        }
    }

    /// Flat offset of stage `(i, j)` (column `i`, row `j`).
    #[inline]
    pub fn offset(&self, i: usize, j: usize) -> usize {
        (j * self.r + i) * self.n
    }

    /// Stage state `Z_i^j`.
    pub fn z_at(&self, i: usize, j: usize) -> &[f64] {
        let o = self.offset(i, j);
        &self.z[o..o + self.n]
    }
}

/// Newton solver controls.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Residual tolerance in the max norm, applied relative to the initial
    /// residual: a solve is accepted once `‖F‖∞ ≤ tol·(1 + ‖F₀‖∞)`.
    pub tol: f64,
    /// Iteration cap per diamond.
    pub max_iter: usize,
    /// Jacobian evaluation strategy.
    pub jacobian: JacobianMode,
}

/// How Newton obtains its Jacobian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    /// Assembled from `S''` and the tableau structure; one finite-difference
    /// retry on divergence.
    Analytic,
    /// Forward differences of the residual only.
    FiniteDifference,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-12,
            max_iter: 50,
            jacobian: JacobianMode::Analytic,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn skew2(w: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, w, -w, 0.0])
    }

    fn quadratic_system(k: DMatrix<f64>, l: DMatrix<f64>) -> Result<PDESystem> {
        // S(z) = |z|²/2, so ∇S = z and S'' = I.
        PDESystem::new(
            2,
            k,
            l,
            Box::new(|z, out| out.copy_from_slice(z)),
            Box::new(|_, out| {
                out.fill(0.0);
                out[0] = 1.0;
                out[3] = 1.0;
            }),
            None,
        )
    }

    #[test]
    fn rejects_non_skew_coefficients() {
        let k = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let err = quadratic_system(k, skew2(1.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn rejects_wrong_hessian() {
        let sys = PDESystem::new(
            2,
            skew2(1.0),
            skew2(2.0),
            Box::new(|z, out| out.copy_from_slice(z)),
            Box::new(|_, out| {
                out.fill(0.0);
                out[0] = 2.0; // should be 1
                out[3] = 1.0;
            }),
            None,
        );
        assert!(sys.is_err());
    }

    #[test]
    fn transform_matches_hand_computation() {
        // dx = 2, dt = 1, K = 0: K̃ = -L/2, L̃ = L/2.
        let sys = quadratic_system(skew2(0.0), skew2(1.0)).unwrap();
        let tc = transform_coeffs(&sys, 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(tc.k_tilde[(0, 1)], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(tc.l_tilde[(0, 1)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn mesh_half_step_count_requires_divisibility() {
        let mesh = MeshConfig::with_courant(0.0, 1.0, 10, 0.5).unwrap();
        // dt = 0.05, dt/2 = 0.025.
        assert_eq!(mesh.half_steps_to(0.1).unwrap(), 4);
        assert!(mesh.half_steps_to(0.11).is_err());
    }

    #[test]
    fn mesh_rejects_bad_arguments() {
        assert!(MeshConfig::with_courant(1.0, 0.0, 4, 0.5).is_err());
        assert!(MeshConfig::with_courant(0.0, 1.0, 0, 0.5).is_err());
        assert!(MeshConfig::with_courant(0.0, 1.0, 4, -0.5).is_err());
    }

    proptest! {
        #[test]
        fn transform_sum_identity(w1 in -3.0..3.0f64, w2 in -3.0..3.0f64,
                                  dx in 0.01..10.0f64, dt in 0.01..10.0f64) {
            // K̃ + L̃ = 2K/dt and L̃ - K̃ = 2L/dx for any skew pair.
            let sys = quadratic_system(skew2(w1), skew2(w2)).unwrap();
            let tc = transform_coeffs(&sys, dx, dt).unwrap();
            let sum = &tc.k_tilde + &tc.l_tilde;
            let diff = &tc.l_tilde - &tc.k_tilde;
            let expect_sum = &sys.k_mat * (2.0 / dt);
            let expect_diff = &sys.l_mat * (2.0 / dx);
            for i in 0..2 {
                for j in 0..2 {
                    prop_assert!((sum[(i, j)] - expect_sum[(i, j)]).abs() <= 1e-12);
                    prop_assert!((diff[(i, j)] - expect_diff[(i, j)]).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn lambda_consistency(n in 1usize..200, lambda in 0.05..2.0f64) {
            let mesh = MeshConfig::with_courant(-1.0, 3.0, n, lambda).unwrap();
            prop_assert!((mesh.lambda - mesh.dt / mesh.dx).abs() <= 1e-14);
        }
    }
}
