//! Off-policy TD(0) with importance sampling on a one-state, two-action MDP.
//!
//! The target policy always takes action 0; the behavior policy takes it with
//! probability `1 - epsilon`. Ratios are `1/(1 - epsilon)` and `0`, so one
//! update reads
//!
//! ```text
//! action 0: V <- (1 - alpha + alpha gamma / (1 - eps)) V + alpha / (1 - eps)
//! action 1: V <- (1 - alpha) V
//! ```
//!
//! With `alpha = gamma = 0.9` the first map has slope `0.1 + 0.81/(1 - eps)`,
//! which exceeds one iff `eps > 1 - gamma = 0.1`. A streak of `N` target
//! actions then has probability `(1 - eps)^N` and drives `V` arbitrarily high.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::single_state_two_actions;
use crate::mdp::{induce_chain, Policy, TabularMdp, Transition, TransitionSampler};
use crate::simulator::{run_rng, Proportion, TdRun};

pub const TARGET_ACTION: usize = 0;
pub const OTHER_ACTION: usize = 1;
/// Relative tolerance for replaying sampled runs through the closed form.
pub const REPLAY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffPolicySpec {
    pub epsilon: f64,
    pub gamma: f64,
    pub alpha: f64,
}

impl OffPolicySpec {
    /// The demo's parameters: `gamma = alpha = 0.9`.
    pub fn new(epsilon: f64) -> Result<Self> {
        Self::with_params(epsilon, 0.9, 0.9)
    }

    pub fn with_params(epsilon: f64, gamma: f64, alpha: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon {epsilon} not in (0, 1)"
            )));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidArgument(format!("gamma {gamma} not in [0, 1)")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {alpha} not in (0, 1)")));
        }
        Ok(Self {
            epsilon,
            gamma,
            alpha,
        })
    }

    /// `pi(a) / b(a)` for the two actions.
    pub fn ratio(&self, action: usize) -> f64 {
        match action {
            TARGET_ACTION => 1.0 / (1.0 - self.epsilon),
            _ => 0.0,
        }
    }

    pub fn target_policy(&self) -> Policy {
        Policy::deterministic(&[TARGET_ACTION], 2).expect("valid policy")
    }

    pub fn behavior_policy(&self) -> Policy {
        Policy::new(vec![vec![1.0 - self.epsilon, self.epsilon]]).expect("valid policy")
    }

    /// Largest `|ratio - pi/b|` over both actions.
    pub fn ratio_mismatch(&self) -> f64 {
        let (pi, b) = (self.target_policy(), self.behavior_policy());
        (0..2)
            .map(|a| (self.ratio(a) - pi.prob(0, a) / b.prob(0, a)).abs())
            .fold(0.0, f64::max)
    }

    pub fn mdp(&self) -> TabularMdp {
        let (mdp, _) = single_state_two_actions();
        if self.gamma == mdp.gamma() {
            mdp
        } else {
            TabularMdp::new(
                self.gamma,
                vec![vec![vec![1.0], vec![1.0]]],
                vec![vec![vec![1.0], vec![1.0]]],
            )
            .expect("valid instance")
        }
    }
}

/// Slope of the target-action map.
pub fn coefficient(spec: &OffPolicySpec) -> f64 {
    (1.0 - spec.alpha) + spec.alpha * spec.gamma * spec.ratio(TARGET_ACTION)
}

/// Whether repeated target actions grow `V` without bound.
pub fn diverges(spec: &OffPolicySpec) -> bool {
    coefficient(spec) > 1.0
}

/// `epsilon` above which the target-action map is expansive: `1 - gamma`.
pub fn divergence_threshold(gamma: f64) -> f64 {
    1.0 - gamma
}

/// One update of `v` with unit reward, written as the affine map.
pub fn closed_form_step(spec: &OffPolicySpec, v: f64, action: usize) -> f64 {
    match action {
        TARGET_ACTION => coefficient(spec) * v + spec.alpha * spec.ratio(TARGET_ACTION),
        _ => (1.0 - spec.alpha) * v,
    }
}

/// Importance-weighted update `V(s) += alpha (ratio (r + gamma V(s')) - V(s))`.
pub fn off_policy_step(v: &mut DVector<f64>, t: &Transition, ratio: f64, alpha: f64, gamma: f64) {
    let target = ratio * (t.reward + gamma * v[t.next_state]);
    v[t.state] += alpha * (target - v[t.state]);
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForcedSequence {
    /// `V_0 = 0, V_1, ..., V_N` under `N` target actions.
    pub values: Vec<f64>,
    /// `(1 - epsilon)^N`.
    pub prob: f64,
}

pub fn forced_sequence(spec: &OffPolicySpec, n: usize) -> Result<ForcedSequence> {
    if n == 0 {
        return Err(Error::InvalidArgument("forced sequence needs N >= 1".into()));
    }
    let mut values = Vec::with_capacity(n + 1);
    let mut v = 0.0;
    values.push(v);
    for _ in 0..n {
        v = closed_form_step(spec, v, TARGET_ACTION);
        values.push(v);
    }
    Ok(ForcedSequence {
        values,
        prob: (1.0 - spec.epsilon).powi(n as i32),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DivergenceReport {
    pub spec: OffPolicySpec,
    pub n_runs: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Per-run `max_k |V_k|`.
    pub max_abs: Vec<f64>,
    /// Per-run count of leading target actions, capped at `horizon`.
    pub streaks: Vec<usize>,
    /// Largest relative gap between a sampled run and its closed-form replay.
    pub max_replay_error: f64,
}

impl DivergenceReport {
    /// Fraction of runs whose first `n` actions were all the target action.
    pub fn streak_frequency(&self, n: usize) -> Result<Proportion> {
        if n > self.horizon {
            return Err(Error::InvalidArgument(format!(
                "streak length {n} beyond horizon {}",
                self.horizon
            )));
        }
        Ok(Proportion {
            hits: self.streaks.iter().filter(|&&s| s >= n).count(),
            n: self.streaks.len(),
        })
    }

    /// Counts of `max |V|` in `[edges[i], edges[i+1])`.
    pub fn histogram(&self, edges: &[f64]) -> Vec<HistogramBin> {
        edges
            .windows(2)
            .map(|w| HistogramBin {
                lo: w[0],
                hi: w[1],
                count: self.max_abs.iter().filter(|&&m| m >= w[0] && (m < w[1] || w[1] == f64::INFINITY)).count(),
            })
            .collect()
    }

    pub fn largest(&self) -> f64 {
        self.max_abs.iter().copied().fold(0.0, f64::max)
    }

    pub fn replay_holds(&self) -> bool {
        self.max_replay_error <= REPLAY_TOL
    }
}

/// Decade edges `0, 1, 10, ..., 10^max_decade, inf`.
pub fn decade_edges(max_decade: u32) -> Vec<f64> {
    let mut edges = vec![0.0];
    edges.extend((0..=max_decade).map(|d| 10f64.powi(d as i32)));
    edges.push(f64::INFINITY);
    edges
}

fn relative_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }
}

/// Seeded ensemble of off-policy runs from `V_0 = 0`, each replayed through
/// [`closed_form_step`] on its own action sequence.
pub fn sampled_demo(spec: &OffPolicySpec, n_runs: usize, horizon: usize, seed: u64) -> Result<DivergenceReport> {
    let mdp = spec.mdp();
    let sampler = TransitionSampler::with_behavior(&mdp, &spec.behavior_policy(), &[1.0])?;
    let runs: Vec<(f64, usize, f64)> = (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = run_rng(seed, run as u64);
            let mut v = DVector::zeros(1);
            let mut replay = 0.0;
            let mut max_abs = 0.0f64;
            let mut streak = 0usize;
            let mut in_streak = true;
            let mut gap = 0.0f64;
            for _ in 0..horizon {
                let t = sampler.sample(&mut rng);
                if in_streak && t.action == TARGET_ACTION {
                    streak += 1;
                } else {
                    in_streak = false;
                }
                off_policy_step(&mut v, &t, spec.ratio(t.action), spec.alpha, spec.gamma);
                replay = closed_form_step(spec, replay, t.action);
                gap = gap.max(relative_gap(v[0], replay));
                max_abs = max_abs.max(v[0].abs());
            }
            (max_abs, streak, gap)
        })
        .collect();
    Ok(DivergenceReport {
        spec: *spec,
        n_runs,
        horizon,
        seed,
        max_abs: runs.iter().map(|r| r.0).collect(),
        streaks: runs.iter().map(|r| r.1).collect(),
        max_replay_error: runs.iter().map(|r| r.2).fold(0.0, f64::max),
    })
}

/// The same MDP under on-policy TD(0) from `V_0 = 0`: largest `|V_k|` seen.
pub fn on_policy_contrast(spec: &OffPolicySpec, n_runs: usize, horizon: usize, seed: u64) -> Result<f64> {
    let mdp = spec.mdp();
    let chain = induce_chain(&mdp, &spec.target_policy())?;
    let sampler = TransitionSampler::new(&chain)?;
    let maxima: Vec<f64> = (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = run_rng(seed, run as u64);
            let mut td = TdRun::new(DVector::zeros(1), spec.alpha, spec.gamma);
            let mut max_abs = 0.0f64;
            for _ in 0..horizon {
                max_abs = max_abs.max(td.apply(&sampler.sample(&mut rng)).abs());
            }
            max_abs
        })
        .collect();
    Ok(maxima.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn closed_form_examples() {
        let spec = OffPolicySpec::new(0.5).unwrap();
        assert_abs_diff_eq!(closed_form_step(&spec, 0.0, TARGET_ACTION), 1.8, epsilon = 1e-14);
        assert_abs_diff_eq!(coefficient(&spec), 1.72, epsilon = 1e-14);
        assert_abs_diff_eq!(closed_form_step(&spec, 3.0, OTHER_ACTION), 0.3, epsilon = 1e-15);
        assert_eq!(closed_form_step(&spec, 0.0, OTHER_ACTION), 0.0);
    }

    #[test]
    fn forced_sequence_examples() {
        let spec = OffPolicySpec::new(0.5).unwrap();
        let seq = forced_sequence(&spec, 2).unwrap();
        assert_eq!(seq.values.len(), 3);
        assert_abs_diff_eq!(seq.values[1], 1.8, epsilon = 1e-14);
        assert_abs_diff_eq!(seq.values[2], 1.72 * 1.8 + 1.8, epsilon = 1e-14);
        assert_abs_diff_eq!(seq.values[2], 4.896, epsilon = 1e-14);
        assert_abs_diff_eq!(seq.prob, 0.25, epsilon = 1e-15);
        for eps in [0.05, 0.3, 0.9] {
            let spec = OffPolicySpec::new(eps).unwrap();
            assert_abs_diff_eq!(forced_sequence(&spec, 1).unwrap().prob, 1.0 - eps, epsilon = 1e-15);
        }
        assert!(forced_sequence(&spec, 0).is_err());
    }

    #[test]
    fn small_epsilon_converges() {
        let spec = OffPolicySpec::new(0.05).unwrap();
        assert_abs_diff_eq!(coefficient(&spec), 0.1 + 0.81 / 0.95, epsilon = 1e-15);
        assert!(!diverges(&spec));
        let seq = forced_sequence(&spec, 2000).unwrap();
        let fixed = 0.9 / 0.95 / (1.0 - coefficient(&spec));
        assert_abs_diff_eq!(*seq.values.last().unwrap(), fixed, epsilon = 1e-9);
    }

    #[test]
    fn ratios_match_policies() {
        for eps in [1e-6, 0.1, 0.5, 0.999] {
            let spec = OffPolicySpec::new(eps).unwrap();
            assert!(spec.ratio_mismatch() <= 1e-14 * spec.ratio(TARGET_ACTION));
        }
        assert!(OffPolicySpec::new(0.0).is_err());
        assert!(OffPolicySpec::new(1.0).is_err());
    }

    #[test]
    fn threshold_sits_at_one_tenth() {
        assert_abs_diff_eq!(divergence_threshold(0.9), 0.1, epsilon = 1e-15);
        assert!(!diverges(&OffPolicySpec::new(0.09).unwrap()));
        assert!(diverges(&OffPolicySpec::new(0.11).unwrap()));
    }

    #[test]
    fn sampled_runs_replay_and_are_reproducible() {
        let spec = OffPolicySpec::new(0.5).unwrap();
        let a = sampled_demo(&spec, 100, 50, 9).unwrap();
        assert!(a.replay_holds(), "{}", a.max_replay_error);
        let b = sampled_demo(&spec, 100, 50, 9).unwrap();
        assert_eq!(a.max_abs, b.max_abs);
        assert_eq!(a.streaks, b.streaks);
        let hist = a.histogram(&decade_edges(6));
        assert_eq!(hist.iter().map(|h| h.count).sum::<usize>(), 100);
    }

    #[test]
    fn nearly_always_other_action_collapses() {
        let spec = OffPolicySpec::new(1.0 - 1e-12).unwrap();
        let report = sampled_demo(&spec, 50, 20, 1).unwrap();
        assert!(report.largest() == 0.0);
        assert_eq!(report.streak_frequency(1).unwrap().hits, 0);
    }

    #[test]
    fn on_policy_run_stays_bounded() {
        let spec = OffPolicySpec::new(0.5).unwrap();
        assert!(on_policy_contrast(&spec, 20, 200, 3).unwrap() <= 10.0);
    }
}
