//! Benchmark wave equations `u_tt - u_xx = f(u)` and their multisymplectic
//! first-order form.
//!
//! With `z = (u, v, w)`, `v = u_t`, `w = u_x`, the wave equation becomes
//! `K z_t + L z_x = ∇S(z)` with fixed skew matrices and
//! `∇S(z) = (-f(u), v, -w)`. Each sample problem carries a closed-form
//! solution plus the derivatives needed for mesh initialization and boundary
//! data; `u_tt` always comes from the PDE identity `u_tt = u_xx + f(u)`, so
//! the catalogued derivatives stay mutually consistent by construction.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::pde::PDESystem;

pub type ScalarFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;
pub type FieldFn = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// The boundary treatment a problem is set up for on one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcKind {
    Periodic,
    Dirichlet,
    Neumann,
}

/// A scalar wave equation with a known exact solution.
pub struct WaveProblem {
    pub name: String,
    /// Spatial domain `[a, b]`.
    pub a: f64,
    pub b: f64,
    /// True when `f` is affine, making the first-order system linear.
    pub linear: bool,
    /// Intended boundary treatment at `x = a` and `x = b`.
    pub default_bcs: (BcKind, BcKind),
    f: ScalarFn,
    f_prime: ScalarFn,
    u: FieldFn,
    u_t: FieldFn,
    u_x: FieldFn,
    u_tx: FieldFn,
    u_xx: FieldFn,
}

impl fmt::Debug for WaveProblem {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("WaveProblem")
            .field("name", &self.name)
            .field("a", &self.a)
            .field("b", &self.b)
            .field("linear", &self.linear)
            .field("default_bcs", &self.default_bcs)
            .finish_non_exhaustive()
    }
}

impl WaveProblem {
    /// Builds a problem from closures, for equations beyond the catalogue.
    /// `f` is the wave equation's right-hand side `u_tt - u_xx = f(u)` and
    /// the field closures give the exact solution `u` and its derivatives.
    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        name: &str,
        domain: (f64, f64),
        linear: bool,
        default_bcs: (BcKind, BcKind),
        f: ScalarFn,
        f_prime: ScalarFn,
        u: FieldFn,
        u_t: FieldFn,
        u_x: FieldFn,
        u_tx: FieldFn,
        u_xx: FieldFn,
    ) -> Arc<WaveProblem> {
        build(name, domain.0, domain.1, linear, default_bcs, f, f_prime, u, u_t, u_x, u_tx, u_xx)
    }

    pub fn f(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    pub fn f_prime(&self, u: f64) -> f64 {
        (self.f_prime)(u)
    }

    pub fn u(&self, x: f64, t: f64) -> f64 {
        (self.u)(x, t)
    }

    pub fn u_t(&self, x: f64, t: f64) -> f64 {
        (self.u_t)(x, t)
    }

    pub fn u_x(&self, x: f64, t: f64) -> f64 {
        (self.u_x)(x, t)
    }

    pub fn u_tx(&self, x: f64, t: f64) -> f64 {
        (self.u_tx)(x, t)
    }

    pub fn u_xx(&self, x: f64, t: f64) -> f64 {
        (self.u_xx)(x, t)
    }

    /// Second time derivative through the PDE: `u_tt = u_xx + f(u)`.
    pub fn u_tt(&self, x: f64, t: f64) -> f64 {
        self.u_xx(x, t) + self.f(self.u(x, t))
    }

    /// Full state `z = (u, u_t, u_x)` at a point.
    pub fn state(&self, x: f64, t: f64, out: &mut [f64]) {
        out[0] = self.u(x, t);
        out[1] = self.u_t(x, t);
        out[2] = self.u_x(x, t);
    }
}

/// Builds the first-order multisymplectic system for a wave problem.
pub fn wave_system(problem: &Arc<WaveProblem>) -> Result<PDESystem> {
    let k = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let l = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
    let p_grad = Arc::clone(problem);
    let p_hess = Arc::clone(problem);
    let p_exact = Arc::clone(problem);
    PDESystem::new(
        3,
        k,
        l,
        Box::new(move |z, out| {
            out[0] = -p_grad.f(z[0]);
            out[1] = z[1];
            out[2] = -z[2];
        }),
        Box::new(move |z, out| {
            out.fill(0.0);
            out[0] = -p_hess.f_prime(z[0]);
            out[4] = 1.0;
            out[8] = -1.0;
        }),
        Some(Box::new(move |x, t, out| p_exact.state(x, t, out))),
    )
}

#[allow(clippy::too_many_arguments)]
fn build(
    name: &str,
    a: f64,
    b: f64,
    linear: bool,
    default_bcs: (BcKind, BcKind),
    f: ScalarFn,
    f_prime: ScalarFn,
    u: FieldFn,
    u_t: FieldFn,
    u_x: FieldFn,
    u_tx: FieldFn,
    u_xx: FieldFn,
) -> Arc<WaveProblem> {
    Arc::new(WaveProblem {
        name: name.to_string(),
        a,
        b,
        linear,
        default_bcs,
        f,
        f_prime,
        u,
        u_t,
        u_x,
        u_tx,
        u_xx,
    })
}

/// Travelling profile `u = exp(2 sin(x - t - 3))` for the free wave equation.
fn esin(name: &str, a: f64, b: f64, bcs: (BcKind, BcKind)) -> Arc<WaveProblem> {
    let phase = |x: f64, t: f64| x - t - 3.0;
    let u = move |x: f64, t: f64| (2.0 * phase(x, t).sin()).exp();
    build(
        name,
        a,
        b,
        true,
        bcs,
        Box::new(|_| 0.0),
        Box::new(|_| 0.0),
        Box::new(u),
        Box::new(move |x, t| -2.0 * phase(x, t).cos() * u(x, t)),
        Box::new(move |x, t| 2.0 * phase(x, t).cos() * u(x, t)),
        Box::new(move |x, t| {
            let p = phase(x, t);
            (2.0 * p.sin() - 4.0 * p.cos() * p.cos()) * u(x, t)
        }),
        Box::new(move |x, t| {
            let p = phase(x, t);
            (-2.0 * p.sin() + 4.0 * p.cos() * p.cos()) * u(x, t)
        }),
    )
}

/// Standing wave `u = sin(x) cos(t)` for the free wave equation.
fn sincos(name: &str, a: f64, b: f64, bcs: (BcKind, BcKind)) -> Arc<WaveProblem> {
    build(
        name,
        a,
        b,
        true,
        bcs,
        Box::new(|_| 0.0),
        Box::new(|_| 0.0),
        Box::new(|x, t| x.sin() * t.cos()),
        Box::new(|x, t| -x.sin() * t.sin()),
        Box::new(|x, t| x.cos() * t.cos()),
        Box::new(|x, t| -x.cos() * t.sin()),
        Box::new(|x, t| -x.sin() * t.cos()),
    )
}

/// Standing wave `u = cos(2x) cos(√5 t)` for `u_tt - u_xx = -u`.
fn coscos(name: &str, a: f64, b: f64, bcs: (BcKind, BcKind)) -> Arc<WaveProblem> {
    let s5 = 5.0_f64.sqrt();
    build(
        name,
        a,
        b,
        true,
        bcs,
        Box::new(|u| -u),
        Box::new(|_| -1.0),
        Box::new(move |x, t| (2.0 * x).cos() * (s5 * t).cos()),
        Box::new(move |x, t| -s5 * (2.0 * x).cos() * (s5 * t).sin()),
        Box::new(move |x, t| -2.0 * (2.0 * x).sin() * (s5 * t).cos()),
        Box::new(move |x, t| 2.0 * s5 * (2.0 * x).sin() * (s5 * t).sin()),
        Box::new(move |x, t| -4.0 * (2.0 * x).cos() * (s5 * t).cos()),
    )
}

/// Breather `u = 4 arctan(sin(t/√2) / cosh(x/√2))` for
/// `u_tt - u_xx = -sin(u)`.
fn sine_gordon(name: &str, a: f64, b: f64, bcs: (BcKind, BcKind)) -> Arc<WaveProblem> {
    let r2 = std::f64::consts::SQRT_2;
    build(
        name,
        a,
        b,
        false,
        bcs,
        Box::new(|u| -u.sin()),
        Box::new(|u| -u.cos()),
        Box::new(move |x, t| 4.0 * ((t / r2).sin() / (x / r2).cosh()).atan()),
        Box::new(move |x, t| {
            let (s, c) = (t / r2).sin_cos();
            let ch = (x / r2).cosh();
            2.0 * r2 * c * ch / (ch * ch + s * s)
        }),
        Box::new(move |x, t| {
            let s = (t / r2).sin();
            let (sh, ch) = ((x / r2).sinh(), (x / r2).cosh());
            -2.0 * r2 * s * sh / (ch * ch + s * s)
        }),
        Box::new(move |x, t| {
            let (s, c) = (t / r2).sin_cos();
            let (sh, ch) = ((x / r2).sinh(), (x / r2).cosh());
            let denom = ch * ch + s * s;
            2.0 * c * sh * (s * s - ch * ch) / (denom * denom)
        }),
        Box::new(move |x, t| {
            let s = (t / r2).sin();
            let ch = (x / r2).cosh();
            let denom = ch * ch + s * s;
            2.0 * s * ch * (ch * ch - s * s - 2.0) / (denom * denom)
        }),
    )
}

/// Looks up a catalogued problem by name. Matching ignores case and the
/// separators `-`, `_`, and spaces, so `"sine-gordon dd"` finds `SineGordonDD`.
pub fn sample_problem(name: &str) -> Result<Arc<WaveProblem>> {
    use BcKind::{Dirichlet, Neumann, Periodic};
    let key: String = name
        .chars()
        .filter(|c| !matches!(c, '-' | '_' | ' '))
        .collect::<String>()
        .to_ascii_lowercase();
    let problem = match key.as_str() {
        "esin" => esin("Esin", 0.0, 2.0 * PI, (Periodic, Periodic)),
        "sincos" => sincos("Sincos", 0.0, 2.0 * PI, (Periodic, Periodic)),
        "coscos" => coscos("Coscos", 0.0, PI, (Periodic, Periodic)),
        "sinegordon" => sine_gordon("SineGordon", -30.0, 30.0, (Periodic, Periodic)),
        "esindd" => esin("EsinDD", 0.2, PI / 3.0, (Dirichlet, Dirichlet)),
        "sincosdd" => sincos("SincosDD", 0.2, PI / 3.0, (Dirichlet, Dirichlet)),
        "sincosdn" => sincos("SincosDN", 0.2, PI / 3.0, (Dirichlet, Neumann)),
        "coscosdd" => coscos("CoscosDD", 0.2, PI / 3.0, (Dirichlet, Dirichlet)),
        "coscosdn" => coscos("CoscosDN", 0.2, PI / 3.0, (Dirichlet, Neumann)),
        "sinegordondd" => sine_gordon("SineGordonDD", -2.0, 2.0, (Dirichlet, Dirichlet)),
        _ => {
            return Err(Error::invalid(format!(
                "unknown problem {name:?}; expected one of Esin, Sincos, Coscos, SineGordon, \
                 EsinDD, SincosDD, SincosDN, CoscosDD, CoscosDN, SineGordonDD"
            )))
        }
    };
    Ok(problem)
}

/// All catalogue names, for CLI listings and sweep drivers.
pub fn sample_problem_names() -> &'static [&'static str] {
    &[
        "Esin",
        "Sincos",
        "Coscos",
        "SineGordon",
        "EsinDD",
        "SincosDD",
        "SincosDN",
        "CoscosDD",
        "CoscosDN",
        "SineGordonDD",
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Central finite differences of `u` must reproduce every catalogued
    /// derivative at scattered points.
    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for name in sample_problem_names() {
            let p = sample_problem(name).unwrap();
            let points = [
                (p.a + 0.3 * (p.b - p.a), 0.17),
                (p.a + 0.62 * (p.b - p.a), 1.4),
                (p.a + 0.91 * (p.b - p.a), 0.55),
            ];
            for (x, t) in points {
                let scale = 1.0 + p.u(x, t).abs();
                let fd_t = (p.u(x, t + h) - p.u(x, t - h)) / (2.0 * h);
                let fd_x = (p.u(x + h, t) - p.u(x - h, t)) / (2.0 * h);
                let fd_tx = (p.u(x + h, t + h) - p.u(x + h, t - h) - p.u(x - h, t + h)
                    + p.u(x - h, t - h))
                    / (4.0 * h * h);
                let fd_xx = (p.u(x + h, t) - 2.0 * p.u(x, t) + p.u(x - h, t)) / (h * h);
                let fd_tt = (p.u(x, t + h) - 2.0 * p.u(x, t) + p.u(x, t - h)) / (h * h);
                assert_abs_diff_eq!(p.u_t(x, t), fd_t, epsilon = 1e-7 * scale);
                assert_abs_diff_eq!(p.u_x(x, t), fd_x, epsilon = 1e-7 * scale);
                assert_abs_diff_eq!(p.u_tx(x, t), fd_tx, epsilon = 1e-4 * scale);
                assert_abs_diff_eq!(p.u_xx(x, t), fd_xx, epsilon = 1e-4 * scale);
                assert_abs_diff_eq!(p.u_tt(x, t), fd_tt, epsilon = 1e-4 * scale);
            }
        }
    }

    /// Every exact solution must satisfy its own PDE pointwise.
    #[test]
    fn exact_solutions_satisfy_the_wave_equation() {
        let h = 1e-4;
        for name in sample_problem_names() {
            let p = sample_problem(name).unwrap();
            let (x, t) = (p.a + 0.4 * (p.b - p.a), 0.8);
            let fd_tt = (p.u(x, t + h) - 2.0 * p.u(x, t) + p.u(x, t - h)) / (h * h);
            let fd_xx = (p.u(x + h, t) - 2.0 * p.u(x, t) + p.u(x - h, t)) / (h * h);
            let residual = fd_tt - fd_xx - p.f(p.u(x, t));
            assert!(
                residual.abs() < 1e-5 * (1.0 + p.u(x, t).abs()),
                "{name}: PDE residual {residual:.3e}"
            );
        }
    }

    #[test]
    fn f_prime_matches_finite_difference_of_f() {
        let h = 1e-6;
        for name in ["Coscos", "SineGordon"] {
            let p = sample_problem(name).unwrap();
            for u in [-1.3, 0.0, 0.7, 2.9] {
                let fd = (p.f(u + h) - p.f(u - h)) / (2.0 * h);
                assert_abs_diff_eq!(p.f_prime(u), fd, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn wave_system_exposes_the_exact_state() {
        let p = sample_problem("SineGordon").unwrap();
        let sys = wave_system(&p).unwrap();
        let mut z = [0.0; 3];
        sys.exact_at(1.3, 0.4, &mut z).unwrap();
        assert_abs_diff_eq!(z[0], p.u(1.3, 0.4), epsilon = 1e-15);
        assert_abs_diff_eq!(z[1], p.u_t(1.3, 0.4), epsilon = 1e-15);
        assert_abs_diff_eq!(z[2], p.u_x(1.3, 0.4), epsilon = 1e-15);
    }

    #[test]
    fn gradient_encodes_the_wave_equation() {
        // K z_t + L z_x = ∇S must reduce to v_t - w_x = f(u), u_t = v,
        // u_x = w; spot-check the gradient components that encode it.
        let p = sample_problem("SineGordon").unwrap();
        let sys = wave_system(&p).unwrap();
        let z = [0.9, -0.4, 0.2];
        let mut g = [0.0; 3];
        (sys.grad_s)(&z, &mut g);
        assert_abs_diff_eq!(g[0], 0.9_f64.sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], -0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(g[2], -0.2, epsilon = 1e-15);
    }

    #[test]
    fn lookup_is_case_and_separator_insensitive() {
        for alias in ["sine-gordon", "SINE_GORDON", "Sine Gordon", "sinegordon"] {
            assert_eq!(sample_problem(alias).unwrap().name, "SineGordon");
        }
        assert_eq!(sample_problem("coscos-dn").unwrap().name, "CoscosDN");
        assert!(sample_problem("burgers").is_err());
    }

    #[test]
    fn domains_and_bcs_are_as_catalogued() {
        let p = sample_problem("Coscos").unwrap();
        assert_eq!(p.default_bcs, (BcKind::Periodic, BcKind::Periodic));
        assert_abs_diff_eq!(p.b, PI, epsilon = 1e-15);
        let p = sample_problem("SincosDN").unwrap();
        assert_eq!(p.default_bcs, (BcKind::Dirichlet, BcKind::Neumann));
        assert!(p.a < p.b);
        // The Coscos profile is periodic on [0, π].
        let p = sample_problem("Coscos").unwrap();
        assert_abs_diff_eq!(p.u(0.0, 0.3), p.u(PI, 0.3), epsilon = 1e-14);
    }
}
