//! TD-learning as the linear system `x_{k+1} = A x_k + alpha w_k`.
//!
//! With `D = diag(d)` the expected update is affine in `V`:
//! `V_{k+1} = A V_k + b + alpha w_k` where `A = I + alpha (gamma D P^pi - D)`
//! and `b = alpha D R^pi`. Shifting to error coordinates `x = V - V^pi`
//! cancels `b` through the Bellman equation.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{inf_norm, spectral_radius, to_rows, vec_inf_norm};
use crate::mdp::InducedChain;

/// Tolerance for `||A||_inf == rho`.
pub const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LinearSystemModel {
    pub chain: InducedChain,
    pub alpha: f64,
    pub a_matrix: DMatrix<f64>,
    pub b_vector: DVector<f64>,
    /// Contraction factor `1 - alpha d_min (1 - gamma)`.
    pub rho: f64,
    /// Second-moment bound on the noise, `9 / (1 - gamma)^2`.
    pub w_max: f64,
    /// Sup-norm envelope of the iterates for `||V_0||_inf <= 1`.
    pub v_max: f64,
}

/// `||A||_inf` next to the contraction factor it is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormCertificate {
    pub norm: f64,
    pub rho: f64,
}

impl NormCertificate {
    pub fn holds(&self) -> bool {
        self.norm <= self.rho + NORM_TOL && (self.norm - self.rho).abs() <= NORM_TOL
    }
}

/// Builds the system matrices for step size `alpha`.
pub fn build_system(chain: &InducedChain, alpha: f64) -> Result<LinearSystemModel> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AssumptionViolated(format!(
            "step size {alpha} not in (0, 1)"
        )));
    }
    let n = chain.n_states();
    let gamma = chain.gamma();
    let d = chain.d_matrix();
    let drift = &d * &chain.p_pi * gamma - &d;
    let a_matrix = DMatrix::identity(n, n) + drift * alpha;
    let b_vector = (&d * &chain.r_pi) * alpha;
    let rho = 1.0 - alpha * chain.d_min * (1.0 - gamma);
    Ok(LinearSystemModel {
        chain: chain.clone(),
        alpha,
        a_matrix,
        b_vector,
        rho,
        w_max: 9.0 / (1.0 - gamma).powi(2),
        v_max: chain.r_max().max(1.0) / (1.0 - gamma),
    })
}

impl LinearSystemModel {
    pub fn n_states(&self) -> usize {
        self.chain.n_states()
    }

    pub fn gamma(&self) -> f64 {
        self.chain.gamma()
    }

    pub fn d_min(&self) -> f64 {
        self.chain.d_min
    }

    /// Whether rewards satisfy `R_max <= 1`.
    pub fn in_paper_regime(&self) -> bool {
        self.chain.mdp.in_paper_regime()
    }

    pub fn infinity_norm_certificate(&self) -> NormCertificate {
        NormCertificate {
            norm: inf_norm(&self.a_matrix),
            rho: self.rho,
        }
    }

    /// Spectral radius of `A`, for diagnostics only; the bounds use `rho`.
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a_matrix)
    }

    /// `x = V - V^pi`.
    pub fn to_error(&self, v: &DVector<f64>) -> DVector<f64> {
        v - &self.chain.v_pi
    }

    pub fn to_value(&self, x: &DVector<f64>) -> DVector<f64> {
        x + &self.chain.v_pi
    }

    /// Mean trajectory `m_0 = x0, m_{j+1} = A m_j` for `j < k`; returns `k + 1`
    /// vectors.
    pub fn propagate_mean(&self, x0: &DVector<f64>, k: usize) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(k + 1);
        let mut m = x0.clone();
        for _ in 0..k {
            let next = &self.a_matrix * &m;
            out.push(std::mem::replace(&mut m, next));
        }
        out.push(m);
        out
    }

    /// Lemma-1 style envelope `max{R_max, ||V_0||_inf} / (1 - gamma)`.
    pub fn iterate_envelope(&self, v0: &DVector<f64>) -> f64 {
        self.chain.r_max().max(vec_inf_norm(v0)) / (1.0 - self.gamma())
    }

    pub fn dump(&self) -> ModelDump {
        ModelDump {
            n_states: self.n_states(),
            alpha: self.alpha,
            gamma: self.gamma(),
            rho: self.rho,
            a_inf_norm: inf_norm(&self.a_matrix),
            spectral_radius: self.spectral_radius(),
            w_max: self.w_max,
            v_max: self.v_max,
            d_min: self.chain.d_min,
            d_max: self.chain.d_max,
            r_max: self.chain.r_max(),
            a_matrix: to_rows(&self.a_matrix),
            b_vector: self.b_vector.iter().copied().collect(),
            d: self.chain.d.iter().copied().collect(),
            v_pi: self.chain.v_pi.iter().copied().collect(),
        }
    }
}

/// JSON-friendly snapshot of a model.
#[derive(Debug, Clone, Serialize)]
pub struct ModelDump {
    pub n_states: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub rho: f64,
    pub a_inf_norm: f64,
    pub spectral_radius: f64,
    pub w_max: f64,
    pub v_max: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub r_max: f64,
    pub a_matrix: Vec<Vec<f64>>,
    pub b_vector: Vec<f64>,
    pub d: Vec<f64>,
    pub v_pi: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::mdp::induce_chain;
    use approx::assert_abs_diff_eq;

    fn model(pair: (crate::TabularMdp, crate::Policy), alpha: f64) -> LinearSystemModel {
        build_system(&induce_chain(&pair.0, &pair.1).unwrap(), alpha).unwrap()
    }

    #[test]
    fn two_state_matrix_matches_hand_expansion() {
        let m = model(instances::two_state_uniform(0.5), 0.5);
        // 1 - 0.5*0.5 + 0.5*0.5*0.5*0.5 = 0.8125, off-diagonal 0.0625
        let expected = DMatrix::from_row_slice(2, 2, &[0.8125, 0.0625, 0.0625, 0.8125]);
        assert!((m.a_matrix.clone() - expected).amax() <= 1e-14);
        assert_abs_diff_eq!(m.rho, 0.875, epsilon = 1e-15);
        let cert = m.infinity_norm_certificate();
        assert_abs_diff_eq!(cert.norm, 0.875, epsilon = 1e-15);
        assert!(cert.holds());
    }

    #[test]
    fn single_state_scalar() {
        let m = model(instances::single_state(1.0, 0.9), 0.9);
        assert_abs_diff_eq!(m.a_matrix[(0, 0)], 0.91, epsilon = 1e-15);
        let cert = m.infinity_norm_certificate();
        assert_abs_diff_eq!(cert.norm, 0.91, epsilon = 1e-15);
        assert_abs_diff_eq!(cert.rho, 0.91, epsilon = 1e-15);
    }

    #[test]
    fn zero_discount_rho() {
        let m = model(instances::two_state_uniform(0.0), 0.5);
        assert_abs_diff_eq!(m.rho, 0.75, epsilon = 1e-15);
    }

    #[test]
    fn tiny_step_size_still_contracts() {
        let m = model(instances::two_state_uniform(0.5), 1e-6);
        let cert = m.infinity_norm_certificate();
        assert!(cert.norm < 1.0);
        assert_abs_diff_eq!(cert.norm, 1.0 - 1e-6 * 0.5 * 0.5, epsilon = 1e-15);
    }

    #[test]
    fn step_size_outside_unit_interval_is_refused() {
        let chain = {
            let (m, p) = instances::two_state_uniform(0.5);
            induce_chain(&m, &p).unwrap()
        };
        for alpha in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                build_system(&chain, alpha),
                Err(Error::AssumptionViolated(_))
            ));
        }
    }

    #[test]
    fn mean_propagation_examples() {
        let m = model(instances::single_state(1.0, 0.9), 0.9);
        let traj = m.propagate_mean(&DVector::from_vec(vec![1.0]), 2);
        assert_eq!(traj.len(), 3);
        assert_abs_diff_eq!(traj[1][0], 0.91, epsilon = 1e-15);
        assert_abs_diff_eq!(traj[2][0], 0.8281, epsilon = 1e-15);

        let m = model(instances::two_state_uniform(0.5), 0.5);
        let zero = m.propagate_mean(&DVector::zeros(2), 5);
        assert!(zero.iter().all(|v| v.amax() == 0.0));

        let traj = m.propagate_mean(&DVector::from_vec(vec![1.0, -1.0]), 20);
        for (k, v) in traj.iter().enumerate() {
            let s = 0.75f64.powi(k as i32);
            assert_abs_diff_eq!(v[0], s, epsilon = 1e-14);
            assert_abs_diff_eq!(v[1], -s, epsilon = 1e-14);
        }
    }

    #[test]
    fn value_function_is_a_fixed_point() {
        let m = model(instances::two_state_noisy(0.9), 0.3);
        let v = &m.chain.v_pi;
        let image = &m.a_matrix * v + &m.b_vector;
        assert!((image - v).amax() <= 1e-10);
    }
}
