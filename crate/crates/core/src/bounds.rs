//! Closed-form finite-time bounds for constant step-size tabular TD.
//!
//! Every function evaluates a bound as printed, including the `36 sigma_max^2`
//! constant (with `sigma_max = 1` on-policy). The constant that actually falls
//! out of the trace argument is 9; it is exposed separately as
//! [`trace_bound_tight`] for diagnostics.
//!
//! Bounds require rewards bounded by one in magnitude and refuse otherwise.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::vec_inf_norm;
use crate::linear_model::LinearSystemModel;
use crate::mdp::InducedChain;

/// Importance ratio bound; identically one for on-policy evaluation.
pub const SIGMA_MAX: f64 = 1.0;
/// Constant in front of the stationary term as printed.
pub const STATED_CONSTANT: f64 = 36.0;
/// Constant the trace argument produces: `9 / (1 - gamma)^2 * n^2 alpha^2 / (1 - rho)`.
pub const TIGHT_CONSTANT: f64 = 9.0;
/// Step used when the schedule bound would put `alpha = 1`.
pub const SCHEDULE_ALPHA_CLAMP: f64 = 1.0 - 1e-9;

fn require_regime(model: &LinearSystemModel) -> Result<()> {
    if !model.in_paper_regime() {
        return Err(Error::AssumptionViolated(format!(
            "rewards must satisfy R_max <= 1 for bound evaluation (R_max = {})",
            model.chain.r_max()
        )));
    }
    Ok(())
}

fn require_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} must be positive")));
    }
    Ok(())
}

/// `C n^2 alpha / (d_min (1 - gamma)^3)`.
fn stationary_term(model: &LinearSystemModel, constant: f64) -> f64 {
    let n = model.n_states() as f64;
    let gamma = model.gamma();
    constant * SIGMA_MAX * SIGMA_MAX * n * n * model.alpha
        / (model.d_min() * (1.0 - gamma).powi(3))
}

/// `||x0||_2^2 n^2 rho^{2k}`.
fn transient_term_sq(model: &LinearSystemModel, x0: &DVector<f64>, k: usize) -> f64 {
    let n = model.n_states() as f64;
    x0.norm_squared() * n * n * rho_pow(model.rho, 2 * k)
}

fn rho_pow(rho: f64, k: usize) -> f64 {
    rho.powf(k as f64)
}

/// `||E[x_k]||_inf <= rho^k ||x0||_inf`.
pub fn mean_bound(model: &LinearSystemModel, x0: &DVector<f64>, k: usize) -> f64 {
    rho_pow(model.rho, k) * vec_inf_norm(x0)
}

/// Bound on `tr(X_k) = E||x_k||_2^2`.
pub fn trace_bound(model: &LinearSystemModel, x0: &DVector<f64>, k: usize) -> Result<f64> {
    require_regime(model)?;
    Ok(stationary_term(model, STATED_CONSTANT) + transient_term_sq(model, x0, k))
}

/// Trace bound with the constant 9 that the derivation actually yields.
pub fn trace_bound_tight(model: &LinearSystemModel, x0: &DVector<f64>, k: usize) -> Result<f64> {
    require_regime(model)?;
    Ok(stationary_term(model, TIGHT_CONSTANT) + transient_term_sq(model, x0, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseBound {
    /// Bound on `E||V_k - V^pi||_2`.
    pub l2: f64,
    /// Bound on `E||V_k - V^pi||_2^2`.
    pub squared: f64,
}

pub fn mse_bound(model: &LinearSystemModel, x0: &DVector<f64>, k: usize) -> Result<MseBound> {
    require_regime(model)?;
    let n = model.n_states() as f64;
    let gamma = model.gamma();
    let l2 = 6.0 * n * model.alpha.sqrt() / (model.d_min().sqrt() * (1.0 - gamma).powf(1.5))
        + x0.norm() * n * rho_pow(model.rho, k);
    let squared = stationary_term(model, STATED_CONSTANT) + transient_term_sq(model, x0, k);
    Ok(MseBound { l2, squared })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChebyshevFloor {
    /// Radius of the event `||V_k - V^pi||_2 < threshold`.
    pub threshold: f64,
    /// Lower bound on the probability of that event. May be negative.
    pub prob_floor: f64,
}

impl ChebyshevFloor {
    pub fn informative(&self) -> bool {
        self.prob_floor > 0.0
    }
}

/// Chebyshev-type high-probability bound for the final iterate.
///
/// The threshold uses `||x0||_inf` and the floor uses `||x0||_2`, as stated.
pub fn chebyshev_floor(
    model: &LinearSystemModel,
    x0: &DVector<f64>,
    k: usize,
    epsilon: f64,
) -> Result<ChebyshevFloor> {
    require_epsilon(epsilon)?;
    require_regime(model)?;
    let n = model.n_states() as f64;
    let threshold = epsilon + rho_pow(model.rho, k) * n.sqrt() * vec_inf_norm(x0);
    let eps2 = epsilon * epsilon;
    let prob_floor =
        1.0 - stationary_term(model, STATED_CONSTANT) / eps2 - transient_term_sq(model, x0, k) / eps2;
    Ok(ChebyshevFloor {
        threshold,
        prob_floor,
    })
}

/// Markov-inequality floor on `P[||V_k - V^pi||_2 < epsilon]`.
pub fn markov_floor(model: &LinearSystemModel, x0: &DVector<f64>, k: usize, epsilon: f64) -> Result<f64> {
    require_epsilon(epsilon)?;
    Ok(1.0 - mse_bound(model, x0, k)?.l2 / epsilon)
}

/// Bound on `E||(1/k) sum_{i<k} V_i - V^pi||_2`.
pub fn averaged_bound(model: &LinearSystemModel, x0: &DVector<f64>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("averaged iterate needs k >= 1".into()));
    }
    require_regime(model)?;
    let n = model.n_states() as f64;
    let gamma = model.gamma();
    let transient = (n / (k as f64 * model.alpha * model.d_min() * (1.0 - gamma))).sqrt() * x0.norm();
    Ok(transient + stationary_term(model, STATED_CONSTANT).sqrt())
}

/// Markov-inequality floor for the averaged iterate.
pub fn averaged_markov_floor(
    model: &LinearSystemModel,
    x0: &DVector<f64>,
    k: usize,
    epsilon: f64,
) -> Result<f64> {
    require_epsilon(epsilon)?;
    Ok(1.0 - averaged_bound(model, x0, k)? / epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleBound {
    pub alpha: f64,
    pub bound: f64,
    /// Set when `T = 1` forced `alpha` below one.
    pub clamped: bool,
}

/// Averaged-iterate bound at horizon `T` with the step size `1/sqrt(T)`.
pub fn schedule_bound(chain: &InducedChain, x0: &DVector<f64>, horizon: usize) -> Result<ScheduleBound> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("schedule horizon must be >= 1".into()));
    }
    if !chain.mdp.in_paper_regime() {
        return Err(Error::AssumptionViolated(format!(
            "rewards must satisfy R_max <= 1 (R_max = {})",
            chain.r_max()
        )));
    }
    let t = horizon as f64;
    let mut alpha = 1.0 / t.sqrt();
    let clamped = alpha >= 1.0;
    if clamped {
        log::warn!("schedule bound at T = {horizon} gives alpha = 1; clamping to {SCHEDULE_ALPHA_CLAMP}");
        alpha = SCHEDULE_ALPHA_CLAMP;
    }
    let n = chain.n_states() as f64;
    let gamma = chain.gamma();
    let dm = chain.d_min;
    let inner = (n / (dm * (1.0 - gamma))).sqrt() * x0.norm()
        + (STATED_CONSTANT * alpha * SIGMA_MAX * SIGMA_MAX * n * n / (dm * (1.0 - gamma).powi(3))).sqrt();
    Ok(ScheduleBound {
        alpha,
        bound: t.powf(-0.25) * inner,
        clamped,
    })
}

/// Largest step size admitted by the comparison bound, `d_min (1 - gamma) / 8`.
pub fn bhandari_threshold(chain: &InducedChain) -> f64 {
    chain.d_min * (1.0 - chain.gamma()) / 8.0
}

/// Comparison bound for the averaged iterate from the SGD-style analysis,
/// specialised to the tabular case.
pub fn bhandari_bound(model: &LinearSystemModel, x0: &DVector<f64>, k: usize) -> Result<f64> {
    require_regime(model)?;
    let chain = &model.chain;
    let threshold = bhandari_threshold(chain);
    if model.alpha > threshold {
        return Err(Error::StepSizeTooLarge {
            alpha: model.alpha,
            threshold,
        });
    }
    let gamma = model.gamma();
    let dm = chain.d_min;
    let sigma_sq = chain.td_noise_variance();
    let decay = ((-model.alpha * (1.0 - gamma) * dm * k as f64).exp() / dm).sqrt() * x0.norm();
    Ok(decay + (2.0 * model.alpha * sigma_sq / ((1.0 - gamma) * dm * dm)).sqrt())
}

/// `||X_k||_2 <= alpha^2 W_max / (1 - rho^2) + n ||X_0||_2`, uniform in `k`.
pub fn correlation_norm_bound(model: &LinearSystemModel, x0: &DVector<f64>) -> Result<f64> {
    require_regime(model)?;
    let n = model.n_states() as f64;
    Ok(model.alpha * model.alpha * model.w_max / (1.0 - model.rho * model.rho) + n * x0.norm_squared())
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BoundConstants {
    pub rho: f64,
    pub w_max: f64,
    pub v_max: f64,
    pub sigma_max_used: f64,
    pub d_min: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub n_states: usize,
    pub td_noise_variance: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EpsilonFloors {
    pub epsilon: f64,
    pub chebyshev_threshold: f64,
    pub chebyshev_floor: f64,
    pub markov_floor: f64,
    /// Absent at `k = 0`.
    pub avg_markov_floor: Option<f64>,
}

/// All bounds evaluated at one step.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BoundReport {
    pub k: usize,
    pub bounds: BTreeMap<String, f64>,
    pub floors: Vec<EpsilonFloors>,
    pub constants: BoundConstants,
}

impl BoundReport {
    pub fn evaluate(
        model: &LinearSystemModel,
        x0: &DVector<f64>,
        k: usize,
        epsilons: &[f64],
    ) -> Result<Self> {
        require_regime(model)?;
        let mut bounds = BTreeMap::new();
        let mse = mse_bound(model, x0, k)?;
        bounds.insert("mean_inf".to_string(), mean_bound(model, x0, k));
        bounds.insert("trace".to_string(), trace_bound(model, x0, k)?);
        bounds.insert("trace_tight".to_string(), trace_bound_tight(model, x0, k)?);
        bounds.insert("mse_l2".to_string(), mse.l2);
        bounds.insert("mse_sq".to_string(), mse.squared);
        bounds.insert("x_norm".to_string(), correlation_norm_bound(model, x0)?);
        if k >= 1 {
            bounds.insert("avg_l2".to_string(), averaged_bound(model, x0, k)?);
        }
        if model.alpha <= bhandari_threshold(&model.chain) {
            bounds.insert("bhandari_avg".to_string(), bhandari_bound(model, x0, k)?);
        }

        let floors = epsilons
            .iter()
            .map(|&eps| {
                let cheb = chebyshev_floor(model, x0, k, eps)?;
                Ok(EpsilonFloors {
                    epsilon: eps,
                    chebyshev_threshold: cheb.threshold,
                    chebyshev_floor: cheb.prob_floor,
                    markov_floor: markov_floor(model, x0, k, eps)?,
                    avg_markov_floor: if k >= 1 {
                        Some(averaged_markov_floor(model, x0, k, eps)?)
                    } else {
                        None
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            k,
            bounds,
            floors,
            constants: BoundConstants {
                rho: model.rho,
                w_max: model.w_max,
                v_max: model.v_max,
                sigma_max_used: SIGMA_MAX,
                d_min: model.d_min(),
                alpha: model.alpha,
                gamma: model.gamma(),
                n_states: model.n_states(),
                td_noise_variance: model.chain.td_noise_variance(),
            },
        })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.bounds.get(name).copied()
    }
}
