//! Exact first and second moments of the TD error `x_k = V_k - V^pi`.
//!
//! The noise `w_k` has zero conditional mean given `x_k`, so
//! `E[x_{k+1}] = A E[x_k]` and `X_{k+1} = A X_k A^T + alpha^2 W_k` with
//! `W_k = E[w_k w_k^T]`. Writing `B = gamma D P^pi - D`, the conditional
//! second moment of `e_s delta` is diagonal and the conditional mean is
//! `B x`, which gives
//!
//! ```text
//! W_k = diag_s( d(s) q_s ) - B X_k B^T
//! q_s = sum_a pi(a|s) sum_s' P(s'|s,a) [ dbar^2 + 2 dbar (gamma m(s') - m(s))
//!         + gamma^2 X(s',s') - 2 gamma X(s',s) + X(s,s) ]
//! ```
//!
//! with `dbar = r(s,a,s') + gamma V^pi(s') - V^pi(s)`. Everything is affine in
//! `(m_k, X_k)`, so the recursion is closed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, sym_eigen_extremes, symmetrize};
use crate::linear_model::LinearSystemModel;

/// PSD / symmetry tolerance, scaled by `max(1, |X|_max)`.
pub const PSD_TOL: f64 = 1e-10;
pub const SYM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub k: usize,
    pub mean: DVector<f64>,
    pub corr: DMatrix<f64>,
}

impl MomentState {
    /// Deterministic start: `m_0 = x0`, `X_0 = x0 x0^T`.
    pub fn initial(x0: &DVector<f64>) -> Self {
        Self {
            k: 0,
            mean: x0.clone(),
            corr: x0 * x0.transpose(),
        }
    }

    /// `tr(X_k)`, which equals `E ||V_k - V^pi||_2^2`.
    pub fn trace(&self) -> f64 {
        self.corr.trace()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.corr - &self.mean * self.mean.transpose()
    }

    /// Checks symmetry and positive semidefiniteness of both `X` and
    /// `X - m m^T`.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.mean.len();
        if self.corr.shape() != (n, n) {
            return Err(format!(
                "shape mismatch: mean {n}, corr {:?}",
                self.corr.shape()
            ));
        }
        let scale = self.corr.amax().max(1.0);
        let asym = asymmetry(&self.corr);
        if asym > SYM_TOL * scale {
            return Err(format!("correlation asymmetric by {asym}"));
        }
        let (lo, _) = sym_eigen_extremes(&self.corr);
        if lo < -PSD_TOL * scale {
            return Err(format!("correlation has eigenvalue {lo}"));
        }
        let (lo, _) = sym_eigen_extremes(&self.covariance());
        if lo < -PSD_TOL * scale {
            return Err(format!("covariance has eigenvalue {lo}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCovariance {
    pub w_matrix: DMatrix<f64>,
    pub lambda_max: f64,
}

impl NoiseCovariance {
    pub fn trace(&self) -> f64 {
        self.w_matrix.trace()
    }
}

/// `B = gamma D P^pi - D`, so that `A = I + alpha B`.
pub fn drift_matrix(model: &LinearSystemModel) -> DMatrix<f64> {
    let d = model.chain.d_matrix();
    &d * &model.chain.p_pi * model.gamma() - &d
}

/// Closed-form `W_k = E[w_k w_k^T]` at moment state `state`.
pub fn noise_covariance(model: &LinearSystemModel, state: &MomentState) -> Result<NoiseCovariance> {
    state.validate().map_err(|detail| Error::Numerical {
        step: state.k,
        detail,
    })?;
    Ok(noise_covariance_unchecked(model, &drift_matrix(model), state))
}

fn noise_covariance_unchecked(
    model: &LinearSystemModel,
    drift: &DMatrix<f64>,
    state: &MomentState,
) -> NoiseCovariance {
    let chain = &model.chain;
    let mdp = &chain.mdp;
    let gamma = model.gamma();
    let n = model.n_states();
    let (m, x) = (&state.mean, &state.corr);

    let mut w = -(drift * x * drift.transpose());
    for s in 0..n {
        let mut q = 0.0;
        for a in 0..mdp.n_actions() {
            let pa = chain.policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            for next in 0..n {
                let p = mdp.prob(s, a, next);
                if p == 0.0 {
                    continue;
                }
                let dbar = chain.bellman_residual(s, a, next);
                let term = dbar * dbar
                    + 2.0 * dbar * (gamma * m[next] - m[s])
                    + gamma * gamma * x[(next, next)]
                    - 2.0 * gamma * x[(next, s)]
                    + x[(s, s)];
                q += pa * p * term;
            }
        }
        w[(s, s)] += chain.d[s] * q;
    }
    let w = symmetrize(&w);
    let (_, lambda_max) = sym_eigen_extremes(&w);
    NoiseCovariance {
        w_matrix: w,
        lambda_max,
    }
}

/// Moment trajectory for steps `0..=horizon`.
#[derive(Debug, Clone)]
pub struct MomentTrajectory {
    pub states: Vec<MomentState>,
    /// `W_k` summaries for `k < horizon`.
    pub noise_lambda_max: Vec<f64>,
    pub noise_trace: Vec<f64>,
}

impl MomentTrajectory {
    pub fn traces(&self) -> Vec<f64> {
        self.states.iter().map(MomentState::trace).collect()
    }
}

/// Runs the exact mean/correlation recursion for `horizon` steps.
///
/// Every produced state is validated; leaving the PSD cone aborts with the
/// offending step, since it can only come from an engine defect.
pub fn propagate_correlation(
    model: &LinearSystemModel,
    init: &MomentState,
    horizon: usize,
) -> Result<MomentTrajectory> {
    init.validate().map_err(|detail| Error::Numerical {
        step: init.k,
        detail,
    })?;
    let a = &model.a_matrix;
    let at = a.transpose();
    let drift = drift_matrix(model);
    let alpha2 = model.alpha * model.alpha;

    let mut states = Vec::with_capacity(horizon + 1);
    let mut noise_lambda_max = Vec::with_capacity(horizon);
    let mut noise_trace = Vec::with_capacity(horizon);
    let mut current = init.clone();
    for _ in 0..horizon {
        let noise = noise_covariance_unchecked(model, &drift, &current);
        noise_lambda_max.push(noise.lambda_max);
        noise_trace.push(noise.trace());
        let corr = symmetrize(&(a * &current.corr * &at + &noise.w_matrix * alpha2));
        let next = MomentState {
            k: current.k + 1,
            mean: a * &current.mean,
            corr,
        };
        next.validate().map_err(|detail| Error::Numerical {
            step: next.k,
            detail,
        })?;
        states.push(std::mem::replace(&mut current, next));
    }
    states.push(current);
    Ok(MomentTrajectory {
        states,
        noise_lambda_max,
        noise_trace,
    })
}

/// `tr(X_k)`.
pub fn trace(state: &MomentState) -> f64 {
    state.trace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::linear_model::build_system;
    use crate::mdp::induce_chain;
    use approx::assert_abs_diff_eq;

    fn model(pair: (crate::TabularMdp, crate::Policy), alpha: f64) -> LinearSystemModel {
        build_system(&induce_chain(&pair.0, &pair.1).unwrap(), alpha).unwrap()
    }

    #[test]
    fn zero_td_error_single_state_has_no_noise() {
        let m = model(instances::single_state(1.0, 0.5), 0.5);
        let w = noise_covariance(&m, &MomentState::initial(&DVector::zeros(1))).unwrap();
        assert_abs_diff_eq!(w.w_matrix[(0, 0)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn uniform_two_state_has_no_noise_at_fixed_point() {
        let m = model(instances::two_state_uniform(0.5), 0.5);
        let w = noise_covariance(&m, &MomentState::initial(&DVector::zeros(2))).unwrap();
        assert!(w.w_matrix.amax() <= 1e-14);
    }

    #[test]
    fn noisy_two_state_covariance_is_diagonal_variance() {
        let m = model(instances::two_state_noisy(0.5), 0.5);
        let w = noise_covariance(&m, &MomentState::initial(&DVector::zeros(2))).unwrap();
        // At x = 0 the conditional mean vanishes, so W = diag(d(s) E[dbar^2 | s]).
        let chain = &m.chain;
        for s in 0..2 {
            let second: f64 = (0..2)
                .map(|n| 0.5 * chain.bellman_residual(s, 0, n).powi(2))
                .sum();
            assert_abs_diff_eq!(w.w_matrix[(s, s)], 0.5 * second, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(w.w_matrix[(0, 1)], 0.0, epsilon = 1e-14);
        assert!(w.w_matrix[(0, 0)] > 0.0);
    }

    #[test]
    fn noiseless_scalar_recursion_is_geometric() {
        let m = model(instances::single_state(1.0, 0.5), 0.5);
        let a = m.a_matrix[(0, 0)];
        let traj = propagate_correlation(&m, &MomentState::initial(&DVector::from_vec(vec![1.0])), 30).unwrap();
        for st in &traj.states {
            assert_abs_diff_eq!(st.corr[(0, 0)], a.powi(2 * st.k as i32), epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_state_stays_zero_without_noise() {
        let m = model(instances::two_state_uniform(0.5), 0.3);
        let traj = propagate_correlation(&m, &MomentState::initial(&DVector::zeros(2)), 50).unwrap();
        assert!(traj.states.iter().all(|s| s.corr.amax() <= 1e-14));
    }

    #[test]
    fn trace_examples() {
        let zero = MomentState {
            k: 0,
            mean: DVector::zeros(3),
            corr: DMatrix::zeros(3, 3),
        };
        assert_eq!(trace(&zero), 0.0);
        let id = MomentState {
            k: 0,
            mean: DVector::zeros(3),
            corr: DMatrix::identity(3, 3),
        };
        assert_eq!(trace(&id), 3.0);
        let st = MomentState::initial(&DVector::from_vec(vec![1.0, -1.0]));
        assert_eq!(trace(&st), 2.0);
    }

    #[test]
    fn invalid_state_is_refused() {
        let m = model(instances::two_state_uniform(0.5), 0.3);
        let bad = MomentState {
            k: 4,
            mean: DVector::zeros(2),
            corr: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
        };
        assert!(matches!(
            noise_covariance(&m, &bad),
            Err(Error::Numerical { step: 4, .. })
        ));
        // Correlation below the outer product of the mean is not a valid moment pair.
        let bad = MomentState {
            k: 0,
            mean: DVector::from_vec(vec![2.0, 0.0]),
            corr: DMatrix::identity(2, 2),
        };
        assert!(noise_covariance(&m, &bad).is_err());
    }

    #[test]
    fn noise_stays_below_w_max() {
        let spec = instances::RandomMdpSpec::new(3, 2, 0.9, 11);
        let m = model(instances::generate_random_mdp(&spec).unwrap(), 0.4);
        let x0 = DVector::from_vec(vec![1.0, -1.0, 0.5]) - &m.chain.v_pi;
        let traj = propagate_correlation(&m, &MomentState::initial(&x0), 200).unwrap();
        for (lam, tr) in traj.noise_lambda_max.iter().zip(&traj.noise_trace) {
            assert!(*lam <= tr + 1e-12);
            assert!(*tr <= m.w_max);
        }
    }
}
