//! Gauss–Legendre Runge–Kutta tableaux.
//!
//! The diamond scheme applies the same implicit Runge–Kutta method in both
//! mesh directions, and its conservation property requires a symplectic
//! tableau. Gauss–Legendre collocation is used throughout: `r` stages give
//! quadrature order `2r` and satisfy the symplecticity identity
//! `b_i a_ij + b_j a_ji - b_i b_j = 0` exactly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Butcher tableau of an `r`-stage collocation Runge–Kutta method on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct RKTableau {
    /// Stage count.
    pub r: usize,
    /// Stage coefficient matrix `a[(i, k)] = ∫₀^{c_i} ℓ_k`.
    pub a: DMatrix<f64>,
    /// Quadrature weights.
    pub b: DVector<f64>,
    /// Collocation nodes, strictly increasing in `(0, 1)`.
    pub c: DVector<f64>,
}

impl RKTableau {
    /// Inverse of the stage matrix, used to eliminate stage derivatives from
    /// the diamond stage equations.
    pub fn a_inverse(&self) -> Result<DMatrix<f64>> {
        self.a.clone().try_inverse().ok_or(Error::SingularSystem {
            context: "tableau stage matrix inversion".into(),
        })
    }

    /// Checks the algebraic identities a Gauss tableau must satisfy.
    ///
    /// Verified properties: `Σ b_i = 1`, node symmetry `c_i + c_{r+1-i} = 1`,
    /// row sums `Σ_k a_ik = c_i`, the collocation conditions
    /// `Σ_k a_ik c_k^{q-1} = c_i^q / q` for `q = 1..r`, quadrature exactness
    /// `Σ b_k c_k^{q-1} = 1/q` for `q = 1..2r`, and symplecticity.
    pub fn validate(&self) -> Result<()> {
        let r = self.r;
        if r == 0 || self.a.nrows() != r || self.a.ncols() != r || self.b.len() != r || self.c.len() != r {
            return Err(Error::invalid("tableau dimensions do not match stage count"));
        }
        let check = |ok: bool, what: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidState(format!("tableau identity violated: {what}")))
            }
        };
        check((self.b.sum() - 1.0).abs() <= 1e-13, "sum of weights")?;
        for i in 0..r {
            check(
                (self.c[i] + self.c[r - 1 - i] - 1.0).abs() <= 1e-13,
                "node symmetry",
            )?;
            check(
                (self.a.row(i).sum() - self.c[i]).abs() <= 1e-13,
                "stage row sum",
            )?;
            if i + 1 < r {
                check(self.c[i] < self.c[i + 1], "node ordering")?;
            }
        }
        for q in 1..=r {
            for i in 0..r {
                let lhs: f64 = (0..r).map(|k| self.a[(i, k)] * self.c[k].powi(q as i32 - 1)).sum();
                let rhs = self.c[i].powi(q as i32) / q as f64;
                check((lhs - rhs).abs() <= 1e-12, "collocation condition")?;
            }
        }
        for q in 1..=2 * r {
            let lhs: f64 = (0..r).map(|k| self.b[k] * self.c[k].powi(q as i32 - 1)).sum();
            check((lhs - 1.0 / q as f64).abs() <= 1e-12, "quadrature exactness")?;
        }
        for i in 0..r {
            for j in 0..r {
                let m = self.b[i] * self.a[(i, j)] + self.b[j] * self.a[(j, i)] - self.b[i] * self.b[j];
                check(m.abs() <= 1e-13, "symplecticity")?;
            }
        }
        Ok(())
    }
}

/// Builds the `r`-stage Gauss–Legendre tableau on `[0, 1]`.
///
/// Nodes are the roots of the shifted Legendre polynomial `P_r(2c - 1)`,
/// found by Newton iteration from Chebyshev initial guesses; weights come
/// from the classic Gauss–Legendre formula; the stage matrix solves the
/// collocation conditions through a Vandermonde system.
pub fn gauss_tableau(r: usize) -> Result<RKTableau> {
    if r == 0 {
        return Err(Error::invalid("stage count must be at least 1"));
    }
    if r > 32 {
        return Err(Error::invalid(
            "stage counts above 32 are not supported (Vandermonde conditioning)",
        ));
    }

    let mut c = DVector::zeros(r);
    let mut b = DVector::zeros(r);
    for i in 0..r {
        // Root of P_r on (-1, 1); guess accurate enough for global Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (r as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(r, x);
            let step = p / dp;
            x -= step;
            if step.abs() <= 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(r, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // cos() descends with i, so this fills nodes in increasing order.
        c[r - 1 - i] = 0.5 * (1.0 + x);
        b[r - 1 - i] = 0.5 * w;
    }

    // Collocation conditions Σ_k a_ik c_k^{q-1} = c_i^q / q share one
    // Vandermonde matrix across stages; factor it once.
    let vand = DMatrix::from_fn(r, r, |q, k| c[k].powi(q as i32));
    let lu = vand.lu();
    let mut a = DMatrix::zeros(r, r);
    for i in 0..r {
        let rhs = DVector::from_fn(r, |q, _| c[i].powi(q as i32 + 1) / (q as f64 + 1.0));
        let row = lu.solve(&rhs).ok_or(Error::SingularSystem {
            context: "tableau collocation system".into(),
        })?;
        for k in 0..r {
            a[(i, k)] = row[k];
        }
    }

    let tab = RKTableau { r, a, b, c };
    tab.validate()?;
    Ok(tab)
}

/// Evaluates `P_r(x)` and `P_r'(x)` by the three-term recurrence.
fn legendre_with_derivative(r: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    if r == 0 {
        return (1.0, 0.0);
    }
    for k in 1..r {
        let p_next = ((2 * k + 1) as f64 * x * p - k as f64 * p_prev) / (k + 1) as f64;
        p_prev = p;
        p = p_next;
    }
    let dp = r as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn one_stage_is_the_midpoint_rule() {
        let tab = gauss_tableau(1).unwrap();
        assert_abs_diff_eq!(tab.a[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(tab.b[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(tab.c[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn two_stage_matches_closed_form() {
        let tab = gauss_tableau(2).unwrap();
        let s3 = 3.0_f64.sqrt();
        assert_abs_diff_eq!(tab.c[0], 0.5 - s3 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(tab.c[1], 0.5 + s3 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(tab.b[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(tab.b[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(tab.a[(0, 0)], 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(tab.a[(0, 1)], 0.25 - s3 / 6.0, epsilon = 1e-14);
        assert_abs_diff_eq!(tab.a[(1, 0)], 0.25 + s3 / 6.0, epsilon = 1e-14);
        assert_abs_diff_eq!(tab.a[(1, 1)], 0.25, epsilon = 1e-14);
    }

    #[test]
    fn three_stage_matches_closed_form() {
        let tab = gauss_tableau(3).unwrap();
        let s15 = 15.0_f64.sqrt();
        let c_expect = [0.5 - s15 / 10.0, 0.5, 0.5 + s15 / 10.0];
        let b_expect = [5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0];
        let a_expect = [
            [5.0 / 36.0, 2.0 / 9.0 - s15 / 15.0, 5.0 / 36.0 - s15 / 30.0],
            [5.0 / 36.0 + s15 / 24.0, 2.0 / 9.0, 5.0 / 36.0 - s15 / 24.0],
            [5.0 / 36.0 + s15 / 30.0, 2.0 / 9.0 + s15 / 15.0, 5.0 / 36.0],
        ];
        for i in 0..3 {
            assert_abs_diff_eq!(tab.c[i], c_expect[i], epsilon = 1e-14);
            assert_abs_diff_eq!(tab.b[i], b_expect[i], epsilon = 1e-14);
            for (k, &want) in a_expect[i].iter().enumerate() {
                assert_abs_diff_eq!(tab.a[(i, k)], want, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn validation_passes_for_small_stage_counts() {
        for r in 1..=8 {
            gauss_tableau(r).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn zero_stages_is_rejected() {
        assert!(matches!(gauss_tableau(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn stage_matrix_is_invertible() {
        for r in 1..=6 {
            let tab = gauss_tableau(r).unwrap();
            let w = tab.a_inverse().unwrap();
            let eye = &tab.a * &w;
            for i in 0..r {
                for j in 0..r {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(eye[(i, j)], expect, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn corrupted_tableau_fails_validation() {
        let mut tab = gauss_tableau(2).unwrap();
        tab.a[(0, 0)] += 1e-6;
        assert!(tab.validate().is_err());
    }
}
