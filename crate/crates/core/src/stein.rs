//! Discrete Lyapunov (Stein) certificate `A^T M A = M - I`.
//!
//! `M = sum_k (A^k)^T A^k` is computed two independent ways: the truncated
//! series (accumulated by doubling, `S_{2m} = S_m + (A^m)^T S_m A^m`) and a
//! dense solve of the vectorised equation `(I - A^T (x) A^T) vec(M) = vec(I)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{inf_norm, max_abs_diff, sym_eigen_extremes, symmetrize, to_rows};
use crate::linear_model::LinearSystemModel;

/// Target for the neglected series tail.
pub const TAIL_TOL: f64 = 1e-12;
pub const RESIDUAL_TOL: f64 = 1e-8;
pub const ROUTE_TOL: f64 = 1e-8;
pub const EIGEN_TOL: f64 = 1e-9;
/// Above this size the `n^2 x n^2` direct solve is skipped.
pub const DIRECT_SOLVE_MAX_N: usize = 48;

#[derive(Debug, Clone, Serialize)]
pub struct SteinCertificate {
    #[serde(serialize_with = "ser_matrix")]
    pub m_matrix: DMatrix<f64>,
    /// `||A^T M A - M + I||_inf`.
    pub residual_inf: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Number of series terms actually summed.
    pub series_terms: usize,
    /// Terms required by the tail bound.
    pub required_terms: usize,
    /// Largest entrywise gap between series and direct solutions.
    pub route_gap: Option<f64>,
    pub rho: f64,
    pub n_states: usize,
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    use serde::Serialize;
    to_rows(m).serialize(s)
}

impl SteinCertificate {
    /// `lambda_max` bound `n / (1 - rho^2)` from the series estimate.
    pub fn lambda_bound_sq(&self) -> f64 {
        self.n_states as f64 / (1.0 - self.rho * self.rho)
    }

    /// The simplified bound `n / (1 - rho)`.
    pub fn lambda_bound(&self) -> f64 {
        self.n_states as f64 / (1.0 - self.rho)
    }

    /// Names of failed certificate conditions; empty when valid.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.residual_inf <= RESIDUAL_TOL) {
            out.push(format!("residual {} > {RESIDUAL_TOL}", self.residual_inf));
        }
        if !(self.lambda_min >= 1.0 - EIGEN_TOL) {
            out.push(format!("lambda_min {} < 1", self.lambda_min));
        }
        if !(self.lambda_max <= self.lambda_bound_sq() + EIGEN_TOL) {
            out.push(format!(
                "lambda_max {} > n/(1-rho^2) = {}",
                self.lambda_max,
                self.lambda_bound_sq()
            ));
        }
        if !(self.lambda_max <= self.lambda_bound() + EIGEN_TOL) {
            out.push(format!(
                "lambda_max {} > n/(1-rho) = {}",
                self.lambda_max,
                self.lambda_bound()
            ));
        }
        if let Some(gap) = self.route_gap {
            if !(gap <= ROUTE_TOL) {
                out.push(format!("series/direct gap {gap} > {ROUTE_TOL}"));
            }
        }
        out
    }

    pub fn holds(&self) -> bool {
        self.failures().is_empty()
    }

    /// `v(x) = x^T M x`.
    pub fn lyapunov(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.m_matrix * x))
    }
}

/// Terms needed so that `n rho^{2K} / (1 - rho^2) < TAIL_TOL`.
pub fn required_terms(n: usize, rho: f64) -> usize {
    if rho <= 0.0 {
        return 1;
    }
    let target = TAIL_TOL * (1.0 - rho * rho) / n as f64;
    let k = (target.ln() / (2.0 * rho.ln())).ceil();
    (k.max(0.0) as usize).max(1)
}

/// Truncated series with at least `min_terms` terms; returns the sum and the
/// number of terms summed (a power of two).
pub fn stein_series(a: &DMatrix<f64>, min_terms: usize) -> (DMatrix<f64>, usize) {
    let n = a.nrows();
    let mut sum = DMatrix::identity(n, n);
    let mut power = a.clone();
    let mut terms = 1usize;
    while terms < min_terms {
        sum = &sum + power.transpose() * &sum * &power;
        power = &power * &power;
        terms *= 2;
    }
    (sum, terms)
}

/// Dense solve of the vectorised Stein equation.
pub fn stein_direct(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let at = a.transpose();
    let lhs = DMatrix::identity(n * n, n * n) - crate::linalg::kron(&at, &at);
    let rhs = DVector::from_column_slice(DMatrix::<f64>::identity(n, n).as_slice());
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical {
            step: 0,
            detail: "vectorised Stein system is singular".into(),
        })?;
    Ok(DMatrix::from_column_slice(n, n, sol.as_slice()))
}

/// Certificate for a matrix with `||a||_inf <= rho < 1`.
pub fn stein_solve_matrix(a: &DMatrix<f64>, rho: f64) -> Result<SteinCertificate> {
    if !(rho < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "Stein series diverges for rho = {rho}"
        )));
    }
    let norm = inf_norm(a);
    if norm > rho + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "||A||_inf = {norm} exceeds rho = {rho}"
        )));
    }
    let n = a.nrows();
    let required = required_terms(n, rho);
    let (series, terms) = stein_series(a, required);
    let m = symmetrize(&series);

    let route_gap = if n <= DIRECT_SOLVE_MAX_N {
        let direct = stein_direct(a)?;
        Some(max_abs_diff(&m, &direct))
    } else {
        log::info!("skipping direct Stein solve for n = {n}");
        None
    };

    let identity = DMatrix::<f64>::identity(n, n);
    let residual = a.transpose() * &m * a - &m + identity;
    let (lambda_min, lambda_max) = sym_eigen_extremes(&m);
    Ok(SteinCertificate {
        residual_inf: inf_norm(&residual),
        m_matrix: m,
        lambda_min,
        lambda_max,
        series_terms: terms,
        required_terms: required,
        route_gap,
        rho,
        n_states: n,
    })
}

pub fn stein_solve(model: &LinearSystemModel) -> Result<SteinCertificate> {
    stein_solve_matrix(&model.a_matrix, model.rho)
}

/// Relative violation of `v(Ax) = v(x) - x^T x`.
pub fn decrement_violation(cert: &SteinCertificate, a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let lhs = cert.lyapunov(&(a * x));
    let rhs = cert.lyapunov(x) - x.norm_squared();
    let scale = x.norm_squared();
    if scale == 0.0 {
        (lhs - rhs).abs()
    } else {
        (lhs - rhs).abs() / scale
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecrementReport {
    pub trials: usize,
    /// Largest `|v(Ax) - v(x) + |x|^2| / |x|^2` over the trials.
    pub max_violation: f64,
}

impl DecrementReport {
    pub fn holds(&self) -> bool {
        self.max_violation <= 1e-8
    }
}

/// Checks the one-step Lyapunov decrement on random unit vectors.
pub fn lyapunov_decrement_check<R: Rng + ?Sized>(
    model: &LinearSystemModel,
    cert: &SteinCertificate,
    trials: usize,
    rng: &mut R,
) -> DecrementReport {
    decrement_check_matrix(&model.a_matrix, cert, trials, rng)
}

pub fn decrement_check_matrix<R: Rng + ?Sized>(
    a: &DMatrix<f64>,
    cert: &SteinCertificate,
    trials: usize,
    rng: &mut R,
) -> DecrementReport {
    let n = a.nrows();
    let mut max_violation = 0.0f64;
    for _ in 0..trials {
        let mut x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = x.norm();
        if norm > 0.0 {
            x /= norm;
        }
        max_violation = max_violation.max(decrement_violation(cert, a, &x));
    }
    DecrementReport {
        trials,
        max_violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::linear_model::build_system;
    use crate::mdp::induce_chain;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_geometric_series() {
        let a = DMatrix::from_element(1, 1, 0.91);
        let cert = stein_solve_matrix(&a, 0.91).unwrap();
        let expected = 1.0 / (1.0 - 0.91 * 0.91);
        assert_abs_diff_eq!(cert.m_matrix[(0, 0)], expected, epsilon = 1e-9);
        assert_abs_diff_eq!(expected, 5.8173, epsilon = 1e-4);
        assert!(cert.holds(), "{:?}", cert.failures());
        let one = DVector::from_element(1, 1.0);
        // v(Ax) = 0.8281 M = M - 1
        assert_abs_diff_eq!(cert.lyapunov(&(&a * &one)), expected - 1.0, epsilon = 1e-9);
        assert!(decrement_violation(&cert, &a, &one) < 1e-12);
    }

    #[test]
    fn zero_matrix_gives_identity() {
        let a = DMatrix::zeros(3, 3);
        let cert = stein_solve_matrix(&a, 0.0).unwrap();
        assert_eq!(cert.m_matrix, DMatrix::identity(3, 3));
        assert!(cert.holds());
        assert_eq!(decrement_violation(&cert, &a, &DVector::zeros(3)), 0.0);
    }

    #[test]
    fn two_state_eigenvalues_match_diagonalisation() {
        let (m, p) = instances::two_state_uniform(0.5);
        let model = build_system(&induce_chain(&m, &p).unwrap(), 0.5).unwrap();
        let cert = stein_solve(&model).unwrap();
        // A symmetric with eigenvalues 0.875 and 0.75.
        assert_abs_diff_eq!(cert.lambda_max, 1.0 / (1.0 - 0.875f64.powi(2)), epsilon = 1e-9);
        assert_abs_diff_eq!(cert.lambda_min, 1.0 / (1.0 - 0.75f64.powi(2)), epsilon = 1e-9);
        assert!(cert.holds(), "{:?}", cert.failures());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let report = lyapunov_decrement_check(&model, &cert, 100, &mut rng);
        assert!(report.max_violation < 1e-10, "{report:?}");
    }

    #[test]
    fn divergent_series_is_refused() {
        let a = DMatrix::identity(2, 2);
        assert!(stein_solve_matrix(&a, 1.0).is_err());
    }

    #[test]
    fn required_terms_respects_tail_bound() {
        for &(n, rho) in &[(2usize, 0.5f64), (4, 0.99), (10, 0.9999)] {
            let k = required_terms(n, rho);
            let tail = n as f64 * rho.powf(2.0 * k as f64) / (1.0 - rho * rho);
            assert!(tail < TAIL_TOL * 1.0001, "n={n} rho={rho} K={k} tail={tail}");
        }
    }
}
