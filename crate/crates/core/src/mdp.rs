//! Tabular MDPs, target policies and the Markov chain they induce.
//!
//! Transition and reward tensors are stored row-major with nesting
//! `s -> a -> s'`. The induced chain carries everything the linear-system
//! view needs: `P^pi`, `R^pi`, the stationary distribution `d` and the exact
//! value function `V^pi` from a dense Bellman solve.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-sum tolerance for probability vectors.
pub const PROB_TOL: f64 = 1e-12;
/// Tolerance for stationarity and Bellman residuals of an accepted chain.
pub const CHAIN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    transition: Vec<f64>,
    reward: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        gamma: f64,
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n_states = transition.len();
        let n_actions = transition.first().map_or(0, |t| t.len());
        let flat_t = flatten3(&transition, n_states, n_actions, "transition")?;
        let flat_r = flatten3(&reward, n_states, n_actions, "reward")?;
        Self::from_flat(n_states, n_actions, gamma, flat_t, flat_r)
    }

    /// Builds an MDP from flat `s -> a -> s'` tensors.
    pub fn from_flat(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        transition: Vec<f64>,
        reward: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidMdp(
                "need at least one state and one action".into(),
            ));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidMdp(format!("discount {gamma} not in [0, 1)")));
        }
        let len = n_states * n_actions * n_states;
        if transition.len() != len || reward.len() != len {
            return Err(Error::InvalidMdp(format!(
                "tensor length mismatch: expected {len}, got transition {} / reward {}",
                transition.len(),
                reward.len()
            )));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &transition[(s * n_actions + a) * n_states..][..n_states];
                if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
                    return Err(Error::InvalidMdp(format!(
                        "P[{s}][{a}] has invalid entry {p}"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(Error::InvalidMdp(format!(
                        "P[{s}][{a}] sums to {sum}, not 1"
                    )));
                }
            }
        }
        if let Some(r) = reward.iter().find(|r| !r.is_finite()) {
            return Err(Error::InvalidMdp(format!("non-finite reward {r}")));
        }
        Ok(Self {
            n_states,
            n_actions,
            gamma,
            transition,
            reward,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    fn idx(&self, s: usize, a: usize, next: usize) -> usize {
        (s * self.n_actions + a) * self.n_states + next
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[self.idx(s, a, next)]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize, next: usize) -> f64 {
        self.reward[self.idx(s, a, next)]
    }

    /// Successor distribution `P(.|s, a)`.
    pub fn successors(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[self.idx(s, a, 0)..][..self.n_states]
    }

    /// Largest reward magnitude over all triples.
    pub fn r_max(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Rewards bounded by one in magnitude, as the finite-time bounds require.
    pub fn in_paper_regime(&self) -> bool {
        self.r_max() <= 1.0
    }

    /// Same MDP with every reward multiplied by `c`.
    pub fn scale_rewards(&self, c: f64) -> Self {
        Self {
            reward: self.reward.iter().map(|r| r * c).collect(),
            ..self.clone()
        }
    }

    pub fn transition_nested(&self) -> Vec<Vec<Vec<f64>>> {
        nest3(&self.transition, self.n_states, self.n_actions)
    }

    pub fn reward_nested(&self) -> Vec<Vec<Vec<f64>>> {
        nest3(&self.reward, self.n_states, self.n_actions)
    }
}

fn flatten3(t: &[Vec<Vec<f64>>], ns: usize, na: usize, what: &str) -> Result<Vec<f64>> {
    if t.len() != ns {
        return Err(Error::InvalidMdp(format!("{what}: expected {ns} states")));
    }
    let mut out = Vec::with_capacity(ns * na * ns);
    for (s, per_s) in t.iter().enumerate() {
        if per_s.len() != na {
            return Err(Error::InvalidMdp(format!(
                "{what}[{s}]: expected {na} actions, got {}",
                per_s.len()
            )));
        }
        for (a, row) in per_s.iter().enumerate() {
            if row.len() != ns {
                return Err(Error::InvalidMdp(format!(
                    "{what}[{s}][{a}]: expected {ns} successors, got {}",
                    row.len()
                )));
            }
            out.extend_from_slice(row);
        }
    }
    Ok(out)
}

fn nest3(flat: &[f64], ns: usize, na: usize) -> Vec<Vec<Vec<f64>>> {
    flat.chunks(na * ns)
        .map(|per_s| per_s.chunks(ns).map(<[f64]>::to_vec).collect())
        .collect()
}

/// Stochastic policy `pi(a|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        let n_states = probs.len();
        let n_actions = probs.first().map_or(0, Vec::len);
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidPolicy("empty policy".into()));
        }
        let mut flat = Vec::with_capacity(n_states * n_actions);
        for (s, row) in probs.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::InvalidPolicy(format!(
                    "row {s} has {} actions, expected {n_actions}",
                    row.len()
                )));
            }
            if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
                return Err(Error::InvalidPolicy(format!("row {s} has invalid entry {p}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidPolicy(format!("row {s} sums to {sum}")));
            }
            flat.extend_from_slice(row);
        }
        Ok(Self {
            n_states,
            n_actions,
            probs: flat,
        })
    }

    /// Policy that picks `actions[s]` with probability one.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let rows = actions
            .iter()
            .map(|&a| {
                if a >= n_actions {
                    return Err(Error::InvalidPolicy(format!(
                        "action {a} out of range for {n_actions} actions"
                    )));
                }
                let mut row = vec![0.0; n_actions];
                row[a] = 1.0;
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Result<Self> {
        Self::new(vec![vec![1.0 / n_actions as f64; n_actions]; n_states])
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..][..self.n_actions]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.probs.chunks(self.n_actions).map(<[f64]>::to_vec).collect()
    }
}

/// The Markov chain a policy induces on an MDP, with its stationary
/// distribution and exact value function.
#[derive(Debug, Clone)]
pub struct InducedChain {
    pub mdp: TabularMdp,
    pub policy: Policy,
    pub p_pi: DMatrix<f64>,
    pub r_pi: DVector<f64>,
    pub d: DVector<f64>,
    pub d_min: f64,
    pub d_max: f64,
    pub v_pi: DVector<f64>,
}

impl InducedChain {
    pub fn n_states(&self) -> usize {
        self.mdp.n_states()
    }

    pub fn gamma(&self) -> f64 {
        self.mdp.gamma()
    }

    pub fn r_max(&self) -> f64 {
        self.mdp.r_max()
    }

    /// `D = diag(d)`.
    pub fn d_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.d)
    }

    /// Expected TD error at the true value function,
    /// `r(s,a,s') + gamma V^pi(s') - V^pi(s)`.
    pub fn bellman_residual(&self, s: usize, a: usize, next: usize) -> f64 {
        self.mdp.reward(s, a, next) + self.gamma() * self.v_pi[next] - self.v_pi[s]
    }

    /// Variance proxy `E[||e_s (r + gamma V^pi(s') - V^pi(s))||^2]` under the
    /// i.i.d. observation model.
    pub fn td_noise_variance(&self) -> f64 {
        let n = self.n_states();
        let mut total = 0.0;
        for s in 0..n {
            for a in 0..self.mdp.n_actions() {
                let pa = self.policy.prob(s, a);
                if pa == 0.0 {
                    continue;
                }
                for next in 0..n {
                    let p = self.mdp.prob(s, a, next);
                    if p == 0.0 {
                        continue;
                    }
                    let delta = self.bellman_residual(s, a, next);
                    total += self.d[s] * pa * p * delta * delta;
                }
            }
        }
        total
    }
}

/// Builds `P^pi`, `R^pi`, the stationary distribution and `V^pi`.
///
/// The chain must be irreducible and aperiodic; otherwise there is no unique
/// strictly positive stationary distribution and an explicit error is returned.
pub fn induce_chain(mdp: &TabularMdp, policy: &Policy) -> Result<InducedChain> {
    let n = mdp.n_states();
    if policy.n_states() != n || policy.n_actions() != mdp.n_actions() {
        return Err(Error::InvalidPolicy(format!(
            "policy shape {}x{} does not match MDP {}x{}",
            policy.n_states(),
            policy.n_actions(),
            n,
            mdp.n_actions()
        )));
    }
    let gamma = mdp.gamma();

    let mut p_pi = DMatrix::zeros(n, n);
    let mut r_pi = DVector::zeros(n);
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            let pa = policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            for next in 0..n {
                let p = mdp.prob(s, a, next);
                p_pi[(s, next)] += pa * p;
                r_pi[s] += pa * p * mdp.reward(s, a, next);
            }
        }
    }

    check_ergodic(&p_pi)?;
    let d = stationary_distribution(&p_pi)?;
    let d_min = d.min();
    let d_max = d.max();
    if d_min <= 0.0 {
        return Err(Error::AssumptionViolated(format!(
            "stationary distribution has non-positive entry {d_min}"
        )));
    }

    let lhs = DMatrix::<f64>::identity(n, n) - &p_pi * gamma;
    let v_pi = lhs
        .clone()
        .lu()
        .solve(&r_pi)
        .ok_or_else(|| Error::InvalidMdp("Bellman system is singular".into()))?;
    let bellman = (&lhs * &v_pi - &r_pi).amax();
    if bellman > CHAIN_TOL * (1.0 + v_pi.amax()) {
        return Err(Error::InvalidMdp(format!(
            "Bellman residual {bellman} after dense solve"
        )));
    }

    Ok(InducedChain {
        mdp: mdp.clone(),
        policy: policy.clone(),
        p_pi,
        r_pi,
        d,
        d_min,
        d_max,
        v_pi,
    })
}

/// Irreducibility via reachability and aperiodicity via primitivity: a
/// nonnegative irreducible matrix is primitive iff its power
/// `(n-1)^2 + 1` is strictly positive.
fn check_ergodic(p: &DMatrix<f64>) -> Result<()> {
    let n = p.nrows();
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| p[(i, j)] > 0.0).collect())
        .collect();

    for start in 0..n {
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if adj[i][j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        if let Some(j) = seen.iter().position(|v| !v) {
            return Err(Error::NotErgodic(format!(
                "state {j} is unreachable from state {start} (reducible chain)"
            )));
        }
    }

    let power = (n - 1) * (n - 1) + 1;
    let reach = bool_matrix_power(&adj, power);
    if reach.iter().any(|row| row.iter().any(|v| !v)) {
        return Err(Error::NotErgodic("chain is periodic".into()));
    }
    Ok(())
}

fn bool_matrix_power(m: &[Vec<bool>], mut exp: usize) -> Vec<Vec<bool>> {
    let n = m.len();
    let mul = |a: &[Vec<bool>], b: &[Vec<bool>]| -> Vec<Vec<bool>> {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).any(|k| a[i][k] && b[k][j]))
                    .collect()
            })
            .collect()
    };
    let mut result: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j).collect()).collect();
    let mut base = m.to_vec();
    while exp > 0 {
        if exp & 1 == 1 {
            result = mul(&result, &base);
        }
        exp >>= 1;
        if exp > 0 {
            base = mul(&base, &base);
        }
    }
    result
}

/// Solves `(P^T - I) d = 0` with the last equation replaced by `sum(d) = 1`.
fn stationary_distribution(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = p.nrows();
    let mut lhs = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        lhs[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let d = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NotErgodic("stationary system is singular".into()))?;

    let stationarity = (p.transpose() * &d - &d).amax();
    let mass = (d.sum() - 1.0).abs();
    if stationarity > CHAIN_TOL || mass > CHAIN_TOL {
        return Err(Error::NotErgodic(format!(
            "stationary solve inaccurate (residual {stationarity}, mass error {mass})"
        )));
    }
    Ok(d)
}

/// One observed transition `(s, a, s', r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub reward: f64,
}

/// Draws i.i.d. transitions: `s ~ d`, `a ~ policy(.|s)`, `s' ~ P(.|s,a)`.
///
/// The caller owns the RNG, so parallel ensembles use independent streams.
#[derive(Debug, Clone)]
pub struct TransitionSampler {
    mdp: TabularMdp,
    state_dist: WeightedIndex<f64>,
    action_dists: Vec<WeightedIndex<f64>>,
    next_dists: Vec<Option<WeightedIndex<f64>>>,
}

impl TransitionSampler {
    /// Sampler for the on-policy i.i.d. observation model of `chain`.
    pub fn new(chain: &InducedChain) -> Result<Self> {
        Self::with_behavior(&chain.mdp, &chain.policy, chain.d.as_slice())
    }

    /// Sampler with an arbitrary behavior policy and state distribution.
    pub fn with_behavior(mdp: &TabularMdp, behavior: &Policy, state_dist: &[f64]) -> Result<Self> {
        let n = mdp.n_states();
        let na = mdp.n_actions();
        if behavior.n_states() != n || behavior.n_actions() != na || state_dist.len() != n {
            return Err(Error::InvalidArgument(
                "sampler shapes do not match the MDP".into(),
            ));
        }
        let weighted = |w: &[f64]| {
            WeightedIndex::new(w.iter().map(|p| p.max(0.0)))
                .map_err(|e| Error::InvalidArgument(format!("bad sampling weights: {e}")))
        };
        let state_dist = weighted(state_dist)?;
        let action_dists = (0..n)
            .map(|s| weighted(behavior.row(s)))
            .collect::<Result<Vec<_>>>()?;
        let mut next_dists = Vec::with_capacity(n * na);
        for s in 0..n {
            for a in 0..na {
                // Only pairs the behavior policy can produce need a sampler.
                next_dists.push(if behavior.prob(s, a) > 0.0 {
                    Some(weighted(mdp.successors(s, a))?)
                } else {
                    None
                });
            }
        }
        Ok(Self {
            mdp: mdp.clone(),
            state_dist,
            action_dists,
            next_dists,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Transition {
        let state = self.state_dist.sample(rng);
        let action = self.action_dists[state].sample(rng);
        let next_state = self.next_dists[state * self.mdp.n_actions() + action]
            .as_ref()
            .expect("behavior policy selected an action with zero probability")
            .sample(rng);
        Transition {
            state,
            action,
            next_state,
            reward: self.mdp.reward(state, action, next_state),
        }
    }
}

/// JSON document holding an MDP together with the policy to evaluate.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MdpDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<Vec<f64>>>,
    pub policy: Vec<Vec<f64>>,
}

impl MdpDocument {
    pub fn from_parts(mdp: &TabularMdp, policy: &Policy) -> Self {
        Self {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            gamma: mdp.gamma(),
            transition: mdp.transition_nested(),
            reward: mdp.reward_nested(),
            policy: policy.rows(),
        }
    }

    /// Validates the document and splits it into model and policy.
    pub fn into_parts(self) -> Result<(TabularMdp, Policy)> {
        if self.transition.len() != self.n_states
            || self.transition.iter().any(|t| t.len() != self.n_actions)
        {
            return Err(Error::InvalidMdp(format!(
                "transition tensor does not match n_states={} n_actions={}",
                self.n_states, self.n_actions
            )));
        }
        let mdp = TabularMdp::new(self.gamma, self.transition, self.reward)?;
        let policy = Policy::new(self.policy)?;
        if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
            return Err(Error::InvalidPolicy("policy shape does not match MDP".into()));
        }
        Ok((mdp, policy))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(TabularMdp, Policy)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)?.into_parts()
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state_uniform() -> (TabularMdp, Policy) {
        crate::instances::two_state_uniform(0.5)
    }

    #[test]
    fn uniform_two_state_chain() {
        let (mdp, pol) = two_state_uniform();
        let chain = induce_chain(&mdp, &pol).unwrap();
        assert_abs_diff_eq!(chain.d[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(chain.d[1], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(chain.v_pi[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(chain.v_pi[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn single_state_two_action_chain() {
        let mdp = TabularMdp::new(0.9, vec![vec![vec![1.0], vec![1.0]]], vec![vec![vec![1.0], vec![1.0]]])
            .unwrap();
        let pol = Policy::deterministic(&[0], 2).unwrap();
        let chain = induce_chain(&mdp, &pol).unwrap();
        assert_eq!(chain.p_pi[(0, 0)], 1.0);
        assert_eq!(chain.r_pi[0], 1.0);
        assert_eq!(chain.d[0], 1.0);
        assert_abs_diff_eq!(chain.v_pi[0], 10.0, epsilon = 1e-12);
    }

    #[test]
    fn periodic_chain_is_rejected() {
        let mdp = TabularMdp::new(
            0.5,
            vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
            vec![vec![vec![0.0, 0.0]], vec![vec![0.0, 0.0]]],
        )
        .unwrap();
        let err = induce_chain(&mdp, &Policy::uniform(2, 1).unwrap()).unwrap_err();
        assert!(matches!(err, Error::NotErgodic(ref m) if m.contains("periodic")), "{err}");
    }

    #[test]
    fn reducible_chain_is_rejected() {
        let mdp = TabularMdp::new(
            0.5,
            vec![vec![vec![1.0, 0.0]], vec![vec![0.5, 0.5]]],
            vec![vec![vec![0.0, 0.0]], vec![vec![0.0, 0.0]]],
        )
        .unwrap();
        let err = induce_chain(&mdp, &Policy::uniform(2, 1).unwrap()).unwrap_err();
        assert!(matches!(err, Error::NotErgodic(_)), "{err}");
    }

    #[test]
    fn bad_rows_are_rejected() {
        assert!(TabularMdp::new(0.5, vec![vec![vec![0.4, 0.5]]; 2], vec![vec![vec![0.0; 2]]; 2]).is_err());
        assert!(TabularMdp::new(1.0, vec![vec![vec![1.0]]], vec![vec![vec![0.0]]]).is_err());
        assert!(TabularMdp::new(0.5, vec![vec![vec![1.5, -0.5]]; 2], vec![vec![vec![0.0; 2]]; 2]).is_err());
        assert!(Policy::new(vec![vec![0.3, 0.3]]).is_err());
        assert!(Policy::new(vec![vec![-0.1, 1.1]]).is_err());
    }

    #[test]
    fn large_rewards_leave_paper_regime() {
        let (mdp, _) = two_state_uniform();
        assert!(mdp.in_paper_regime());
        assert!(!mdp.scale_rewards(2.0).in_paper_regime());
    }

    #[test]
    fn deterministic_mdp_sampling_is_degenerate() {
        let mdp = TabularMdp::new(0.5, vec![vec![vec![1.0], vec![1.0]]], vec![vec![vec![0.3], vec![0.7]]]).unwrap();
        let pol = Policy::deterministic(&[1], 2).unwrap();
        let chain = induce_chain(&mdp, &pol).unwrap();
        let sampler = TransitionSampler::new(&chain).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let t = sampler.sample(&mut rng);
            assert_eq!(
                t,
                Transition {
                    state: 0,
                    action: 1,
                    next_state: 0,
                    reward: 0.7
                }
            );
        }
    }

    #[test]
    fn state_frequency_matches_uniform_d() {
        let (mdp, pol) = two_state_uniform();
        let chain = induce_chain(&mdp, &pol).unwrap();
        let sampler = TransitionSampler::new(&chain).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| sampler.sample(&mut rng).state == 0).count();
        let freq = hits as f64 / n as f64;
        let se = (0.25f64 / n as f64).sqrt();
        assert!((freq - 0.5).abs() <= 3.0 * se, "freq {freq}");
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let (mdp, pol) = two_state_uniform();
        let chain = induce_chain(&mdp, &pol).unwrap();
        let sampler = TransitionSampler::new(&chain).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64).map(|_| sampler.sample(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn json_document_round_trip() {
        let (mdp, pol) = two_state_uniform();
        let doc = MdpDocument::from_parts(&mdp, &pol);
        let text = doc.to_json_pretty().unwrap();
        let (mdp2, pol2) = MdpDocument::from_json_str(&text).unwrap().into_parts().unwrap();
        assert_eq!(mdp, mdp2);
        assert_eq!(pol, pol2);
    }

    #[test]
    fn json_document_validates_probabilities() {
        let text = r#"{"n_states":1,"n_actions":1,"gamma":0.5,
            "transition":[[[0.9]]],"reward":[[[1.0]]],"policy":[[1.0]]}"#;
        let err = MdpDocument::from_json_str(text).unwrap().into_parts().unwrap_err();
        assert!(matches!(err, Error::InvalidMdp(_)));
    }
}
